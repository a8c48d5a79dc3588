//! `carfollow` command line: a file-based pipeline from raw trajectories to
//! the GBRT-versus-GHR comparison.
//!
//! Exit codes: 0 on success, 1 on data or validation errors (one
//! `ERROR <kind>: <message>` line on stderr), 2 on usage errors.

use std::ffi::OsString;
use std::path::PathBuf;

use carfollow::trajectory_io::LengthUnit;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;
pub mod error;
pub mod files;
pub mod manifest;

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "carfollow", version, about = "Car-following model pipeline", arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a leader/follower trajectory file from known dynamics.
    Synth(SynthArgs),
    /// Detect acceleration outliers and rebuild smooth kinematics.
    Reconstruct(ReconstructArgs),
    /// Turn a follower/leader pair into lagged instances.
    BuildDataset(BuildDatasetArgs),
    /// Cross-validated (ν, M) grid, depth and reaction-time sweeps.
    Tune(TuneArgs),
    /// Fit a boosted tree model.
    Train(TrainArgs),
    /// Calibrate the GHR model.
    Calibrate(CalibrateArgs),
    /// Score a trained model on instances.
    Evaluate(EvaluateArgs),
    /// Held-out comparison of both models on one or more series.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    M,
    Ft,
}

impl From<Units> for LengthUnit {
    fn from(u: Units) -> Self {
        match u {
            Units::M => LengthUnit::Meters,
            Units::Ft => LengthUnit::Feet,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    Ghr,
    Regime,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "ghr")]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 1.2)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.8)]
    pub m: f64,
    #[arg(long, default_value_t = 1.5)]
    pub l: f64,
    /// Coefficients `alpha,m,l` below the gap threshold (regime kind).
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [1.5, 0.0, 0.5])]
    pub near: Vec<f64>,
    /// Coefficients `alpha,m,l` at or above the gap threshold (regime kind).
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.2, 1.5, 2.0])]
    pub far: Vec<f64>,
    #[arg(long, default_value_t = 15.0)]
    pub gap_threshold: f64,
    /// Reaction time in seconds.
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    /// `constant`, `sinusoidal:AMPLITUDE:PERIOD` or `sawtooth:AMPLITUDE:PERIOD`.
    #[arg(long, default_value = "sinusoidal:2:30")]
    pub leader: String,
    #[arg(long, default_value_t = 15.0)]
    pub base_speed: f64,
    /// Follower start speed; defaults to the leader's initial speed.
    #[arg(long)]
    pub follower_speed: Option<f64>,
    #[arg(long, default_value_t = 120.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 20.0)]
    pub initial_gap: f64,
    /// Standard deviation of the additive acceleration noise.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Only this vehicle; all vehicles otherwise.
    #[arg(long)]
    pub vehicle: Option<i64>,
    #[arg(long, default_value_t = 3.0)]
    pub threshold: f64,
    #[arg(long, default_value_t = 5)]
    pub anchors: usize,
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    #[arg(long, value_enum, default_value = "m")]
    pub units: Units,
}

/// Where a series comes from and how it is prepared.
#[derive(Debug, Args, Serialize)]
pub struct SeriesArgs {
    /// Follower vehicle id; the longest follower/leader pair otherwise.
    #[arg(long)]
    pub follower: Option<i64>,
    /// Reconstruct both vehicles before pairing.
    #[arg(long)]
    pub reconstruct: bool,
    #[arg(long, value_enum, default_value = "m")]
    pub units: Units,
}

#[derive(Debug, Args, Serialize)]
pub struct BuildDatasetArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[command(flatten)]
    pub series: SeriesArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct TuneArgs {
    /// Trajectory file, or an instance file (reaction-time sweeps skipped).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Reaction time of the instances used for the grid and depth sweep.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub nu: Option<Vec<f64>>,
    #[arg(long = "m-values", value_delimiter = ',')]
    pub m_values: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub depths: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub taus: Option<Vec<f64>>,
    /// Split budget used during the (ν, M) grid.
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    #[arg(long, default_value_t = 5)]
    pub min_leaf: usize,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Skip the GHR reaction-time sweep.
    #[arg(long)]
    pub skip_ghr: bool,
    /// Also write the grid as a ν × M matrix.
    #[arg(long)]
    pub plot_data: bool,
    /// Worker threads (default: all cores).
    #[arg(long, env = "CARFOLLOW_JOBS")]
    #[serde(skip)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub series: SeriesArgs,
}

/// GBRT hyper-parameters; `--tuned` fills any that are not given.
#[derive(Debug, Args, Serialize)]
pub struct GbrtArgs {
    /// `tuned.json` written by `tune`.
    #[arg(long)]
    pub tuned: Option<PathBuf>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long = "learners")]
    pub learners: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub min_leaf: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Instance file.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Fit on every instance instead of the training portion.
    #[arg(long)]
    pub all: bool,
    #[command(flatten)]
    pub gbrt: GbrtArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct CalibrateArgs {
    /// Instance file.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long)]
    pub all: bool,
    /// Lower bounds `alpha,m,l`.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.0, 0.0, 0.0])]
    pub lb: Vec<f64>,
    /// Upper bounds `alpha,m,l`.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [3.0, 3.0, 3.0])]
    pub ub: Vec<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Model file written by `train` or `calibrate`.
    #[arg(long)]
    pub model: PathBuf,
    /// Instance file.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Score every instance instead of the held-out portion.
    #[arg(long)]
    pub all: bool,
    /// Also write per-instance predictions.
    #[arg(long)]
    pub plot_data: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    /// One or more trajectory files.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub tau_gbrt: Option<f64>,
    #[arg(long)]
    pub tau_ghr: Option<f64>,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Also write held-out predictions of both models.
    #[arg(long)]
    pub plot_data: bool,
    #[command(flatten)]
    pub gbrt: GbrtArgs,
    #[command(flatten)]
    pub series: SeriesArgs,
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("ERROR {}: {}", e.kind(), e);
            1
        }
    }
}
