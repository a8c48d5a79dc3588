//! Reading inputs and writing CSV/JSON outputs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use carfollow::dataset::{read_instances_csv, ReactionTime};
use carfollow::reconstruction::{reconstruct, ReconstructionConfig};
use carfollow::trajectory_io::{extract_pair, longest_pair, parse_trajectory_csv, ColumnSchema, LengthUnit};
use carfollow::{InstanceSet64, Series64, VehicleTrack64};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::CliError;

pub fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::io(path, e))
}

pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut w = create(path)?;
    w.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_reader(open(path)?).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Header plus rows, each cell already formatted.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = create(path)?;
    let mut line = |cells: &[String]| -> Result<(), CliError> {
        writeln!(w, "{}", cells.join(",")).map_err(|e| CliError::io(path, e))
    };
    line(&header.iter().map(|h| h.to_string()).collect::<Vec<_>>())?;
    for row in rows {
        line(row)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Sidecar written next to an instance file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub tau_s: f64,
    pub source_name: String,
    pub n_instances: usize,
}

pub fn meta_path(instances: &Path) -> PathBuf {
    let mut name = instances.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    instances.with_file_name(name)
}

pub fn is_instance_file(path: &Path) -> Result<bool, CliError> {
    let mut first = String::new();
    open(path)?
        .read_line(&mut first)
        .map_err(|e| CliError::io(path, e))?;
    Ok(first.split(',').next().map(str::trim) == Some("t_index"))
}

/// Reads an instance file. The reaction time comes from `tau_override`, else
/// from the `.meta.json` sidecar.
pub fn load_instances(path: &Path, tau_override: Option<f64>) -> Result<InstanceSet64, CliError> {
    if !is_instance_file(path)? {
        return Err(CliError::Input(format!(
            "{}: not an instance file (expected a `t_index` header); run build-dataset first",
            path.display()
        )));
    }
    let meta_file = meta_path(path);
    let meta: Option<InstanceMeta> = if meta_file.exists() {
        Some(read_json(&meta_file)?)
    } else {
        None
    };
    let tau_s = match (tau_override, &meta) {
        (Some(t), _) => t,
        (None, Some(m)) => m.tau_s,
        (None, None) => {
            return Err(CliError::Input(format!(
                "{}: reaction time unknown; pass --tau or provide {}",
                path.display(),
                meta_file.display()
            )))
        }
    };
    let name = meta
        .map(|m| m.source_name)
        .unwrap_or_else(|| path.display().to_string());
    Ok(read_instances_csv(open(path)?, ReactionTime::from_seconds(tau_s)?, &name)?)
}

pub fn load_tracks(path: &Path, units: LengthUnit) -> Result<Vec<VehicleTrack64>, CliError> {
    Ok(parse_trajectory_csv(open(path)?, &ColumnSchema::default(), units)?.tracks)
}

/// Pairs `follower` (or the longest available pair) with its leader,
/// optionally after reconstructing both vehicles.
pub fn load_series(
    path: &Path,
    units: LengthUnit,
    follower: Option<i64>,
    reconstruction: Option<&ReconstructionConfig<f64>>,
) -> Result<Series64, CliError> {
    let tracks = load_tracks(path, units)?;
    let raw = match follower {
        Some(id) => extract_pair(&tracks, id)?,
        None => longest_pair(&tracks)?,
    };
    let Some(config) = reconstruction else {
        return Ok(raw);
    };
    let cleaned = tracks
        .iter()
        .filter(|t| t.vehicle_id == raw.follower_id || t.vehicle_id == raw.leader_id)
        .map(|t| reconstruct(t, config).map(|r| r.to_track()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(extract_pair(&cleaned, raw.follower_id)?)
}

pub fn fmt<T: std::fmt::Display>(v: T) -> String {
    v.to_string()
}
