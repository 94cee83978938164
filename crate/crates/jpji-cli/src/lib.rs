//! `jpji` command-line tool: simulate, decompose, classify, evaluate, report.
//!
//! Exit codes: 0 success, 1 I/O or other failure, 2 invalid scenario or
//! usage, 3 input rejected by the analysis, 4 evaluation without ground
//! truth, 5 report with no input.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

pub mod decompose;
pub mod evaluate;
pub mod io;
pub mod report;
pub mod simulate;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID_SPEC: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_NO_TRUTH: i32 = 4;
pub const EXIT_EMPTY_REPORT: i32 = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn general(message: String) -> Self {
        Self::new(EXIT_FAILURE, message)
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self::general(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

#[derive(Debug, Parser)]
#[command(name = "jpji", version, about = "Joint / partially-joint / individual ICA")]
pub struct Cli {
    /// Worker threads (falls back to JPJI_THREADS; results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic study with ground truth.
    Simulate(SimulateArgs),
    /// Run JpJI-ICA or JI-ThICA on a dataset directory.
    Decompose(DecomposeArgs),
    /// Relabel a results directory by feature threshold or by the spatial route.
    Classify(ClassifyArgs),
    /// Score a results directory against the dataset's ground truth.
    Evaluate(EvaluateArgs),
    /// Turn evaluation reports into plot-ready CSV tables.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 10)]
    pub subjects: usize,
    #[arg(long, default_value_t = 3)]
    pub joint: usize,
    #[arg(long, default_value_t = 2)]
    pub pjoint: usize,
    #[arg(long, default_value_t = 1)]
    pub individual: usize,
    /// Per-subject partially-joint counts, comma separated (overrides --pjoint).
    #[arg(long, value_delimiter = ',')]
    pub pjoint_per_subject: Option<Vec<usize>>,
    /// Per-subject individual counts, comma separated (overrides --individual).
    #[arg(long, value_delimiter = ',')]
    pub individual_per_subject: Option<Vec<usize>>,
    /// Number of contiguous subject clusters.
    #[arg(long, default_value_t = 2)]
    pub clusters: usize,
    /// Explicit cluster index per subject, comma separated (overrides --clusters).
    #[arg(long, value_delimiter = ',')]
    pub cluster_map: Option<Vec<usize>>,
    /// Draw the joint and partially-joint counts uniformly from 0..=MAX.
    #[arg(long, value_name = "MAX")]
    pub random_counts: Option<usize>,
    #[arg(long, default_value_t = 4096)]
    pub voxels: usize,
    #[arg(long, default_value_t = 150)]
    pub time: usize,
    #[arg(long)]
    pub snr_db: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write little-endian binary matrices instead of CSV.
    #[arg(long)]
    pub binary: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algorithm {
    Jpji,
    Jithica,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Sample,
    PerVoxel,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    /// Dataset directory containing manifest.json.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Algorithm::Jpji)]
    pub algorithm: Algorithm,
    /// `auto` (BIC per subject), `min` (BIC, smallest order for all) or a fixed count.
    #[arg(long, default_value = "min")]
    pub components: String,
    #[arg(long)]
    pub c_max: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub eps0: f64,
    /// Cumulant weights for orders 2, 3, 4.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub weights: Option<Vec<f64>>,
    /// `auto` or a number. JpJI-ICA: fixed σ instead of σ_opt. JI-ThICA: the σ₀ threshold.
    #[arg(long, default_value = "auto")]
    pub sigma0: String,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Force this many subject groups per partially-joint slot.
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Sample)]
    pub estimator: EstimatorArg,
    /// Also write the finalized state after these outer sweeps.
    #[arg(long, value_delimiter = ',')]
    pub snapshots: Vec<usize>,
    #[arg(long)]
    pub binary: bool,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub results: PathBuf,
    /// Fixed feature threshold instead of the one stored with the run.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Spatial route: two subject groups, `a,b,c/d,e,f`.
    #[arg(long)]
    pub groups: Option<String>,
    /// FDR level for the spatial route.
    #[arg(long, default_value_t = 0.05)]
    pub q: f64,
    /// Output CSV (default: classify.csv in the results directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub results: PathBuf,
    /// Output JSON (default: report.json in the results directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Evaluation reports, or directories searched for them.
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("JPJI_THREADS") {
        Ok(v) if !v.trim().is_empty() => {
            v.trim().parse().map(Some).map_err(|_| CliError::new(EXIT_INVALID_SPEC, format!("JPJI_THREADS={v:?} is not a count")))
        }
        _ => Ok(None),
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(cli.threads)? {
        pool = pool.num_threads(n.max(1));
    }
    let pool = pool.build().map_err(|e| CliError::general(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Simulate(a) => simulate::run(&a),
        Command::Decompose(a) => decompose::run(&a),
        Command::Classify(a) => decompose::classify(&a),
        Command::Evaluate(a) => evaluate::run(&a),
        Command::Report(a) => report::run(&a),
    })
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
