//! `<output>.manifest.json` records: command, resolved configuration, input
//! digests and tool version. No timestamps or host details, so two runs with
//! the same manifest can be compared byte for byte.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::files::write_json;

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest<'a, C: Serialize> {
    pub command: &'a str,
    pub config: &'a C,
    pub inputs: Vec<InputDigest>,
    pub version: &'a str,
}

pub fn digest(path: &Path) -> Result<InputDigest, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

/// `out` with `.manifest.json` appended to its file name.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

pub fn write_manifest<C: Serialize>(
    manifest_file: &Path,
    command: &str,
    config: &C,
    inputs: &[&Path],
) -> Result<(), CliError> {
    let inputs = inputs.iter().map(|p| digest(p)).collect::<Result<Vec<_>, _>>()?;
    let manifest = RunManifest {
        command,
        config,
        inputs,
        version: env!("CARGO_PKG_VERSION"),
    };
    write_json(manifest_file, &manifest)
}
