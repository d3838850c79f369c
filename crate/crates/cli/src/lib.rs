//! Command implementations behind the `gspq` binary.
//!
//! Every command is a plain function of its parsed arguments so that tests
//! can drive it without spawning a process.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

pub mod commands;
pub mod output;

pub use commands::{cmd_cseq, cmd_distortion, cmd_eigen, cmd_figures, cmd_quantizer, cmd_rate};
pub use output::RunManifest;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Numeric {
        context: String,
        #[source]
        source: gspq::Error,
    },
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => EXIT_USAGE,
            CliError::Numeric { .. } => EXIT_NUMERIC,
        }
    }

    pub(crate) fn numeric(context: impl Into<String>) -> impl FnOnce(gspq::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Numeric { context, source }
    }

    pub(crate) fn io(e: impl std::fmt::Display) -> CliError {
        CliError::Io(e.to_string())
    }

    pub(crate) fn io_at(path: &Path, e: impl std::fmt::Display) -> CliError {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

#[derive(Debug, Parser)]
#[command(name = "gspq", version, about = "Functional quantization of the Wiener process with Gaussian starting point")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigenvalues and roots of the covariance operator.
    Eigen(EigenArgs),
    /// The c-sequence λ_ℓ((2ℓ−1)π/2)²/T².
    Cseq(CseqArgs),
    /// Optimal product codebook for one budget, as JSON.
    Quantizer(QuantizerArgs),
    /// Distortion brackets, Monte Carlo estimates and rate bounds per budget.
    Distortion(DistortionArgs),
    /// Rate fit of a distortion table or c∞ estimate of a c-sequence.
    Rate(RateArgs),
    /// Datasets for the eigenvalue and c-sequence figures.
    Figures(FiguresArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RootMethod {
    Bracketed,
    PaperNewton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AllocArg {
    Exhaustive,
    Greedy,
}

impl From<AllocArg> for gspq::AllocMethod {
    fn from(a: AllocArg) -> Self {
        match a {
            AllocArg::Exhaustive => gspq::AllocMethod::Exhaustive,
            AllocArg::Greedy => gspq::AllocMethod::Greedy,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EigenArgs {
    /// Comma-separated starting-point variances.
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    pub k: Vec<f64>,
    /// Horizon.
    #[arg(long = "T", default_value_t = 1.0, allow_negative_numbers = true)]
    pub horizon: f64,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long, value_enum, default_value_t = RootMethod::Bracketed)]
    pub method: RootMethod,
    /// Relative root tolerance for the bracketed solver.
    #[arg(long, default_value_t = gspq::spectrum::DEFAULT_TOL)]
    pub tol: f64,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CseqArgs {
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    pub k: Vec<f64>,
    #[arg(long = "T", default_value_t = 1.0, allow_negative_numbers = true)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct QuantizerArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub k: f64,
    #[arg(long = "T", default_value_t = 1.0, allow_negative_numbers = true)]
    pub horizon: f64,
    #[arg(long)]
    pub budget: usize,
    /// Render codebook paths on this many evenly spaced points of [0, T].
    #[arg(long)]
    pub grid: Option<usize>,
    /// Skip path rendering even when --grid is given.
    #[arg(long)]
    pub no_paths: bool,
    #[arg(long, value_enum, default_value_t = AllocArg::Exhaustive)]
    pub alloc: AllocArg,
    /// Eigenpairs computed before the analytic tail takes over.
    #[arg(long, default_value_t = 10_000)]
    pub spectrum_len: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DistortionArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub k: f64,
    #[arg(long = "T", default_value_t = 1.0, allow_negative_numbers = true)]
    pub horizon: f64,
    /// Comma-separated codebook sizes, each at least 2.
    #[arg(long, value_delimiter = ',', required = true)]
    pub budgets: Vec<usize>,
    /// Monte Carlo samples per budget; 0 leaves the mc columns empty.
    #[arg(long, default_value_t = 10_000)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Simulated KL coordinates (raised to the allocation length if smaller).
    #[arg(long, default_value_t = 64)]
    pub truncation: usize,
    #[arg(long, value_enum, default_value_t = AllocArg::Exhaustive)]
    pub alloc: AllocArg,
    #[arg(long, default_value_t = 10_000)]
    pub spectrum_len: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).multiple(true).args(["input", "cseq"])))]
pub struct RateArgs {
    /// CSV from `distortion`; fits distortion_upper against ln n.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// CSV from `cseq`; estimates c∞ per (k, T).
    #[arg(long)]
    pub cseq: Option<PathBuf>,
    /// Trailing fraction of the c-sequence used by the c∞ fit.
    #[arg(long, default_value_t = 0.5)]
    pub window: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FiguresArgs {
    #[arg(long)]
    pub outdir: PathBuf,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Eigen(a) => cmd_eigen(&a),
        Command::Cseq(a) => cmd_cseq(&a),
        Command::Quantizer(a) => cmd_quantizer(&a),
        Command::Distortion(a) => cmd_distortion(&a),
        Command::Rate(a) => cmd_rate(&a),
        Command::Figures(a) => cmd_figures(&a).map(|_| ()),
    }
}

/// Caps the global rayon pool from `GSPQ_THREADS` when set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("GSPQ_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("GSPQ_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(CliError::io)
}
