use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

mod commands;

/// Build information printed by `--version`.
const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\nsolver: coordinate descent with IRLS, warm-started paths",
    "\nprofile: ",
    env!("GAMLASSO_PROFILE"),
);

#[derive(Parser, Debug)]
#[command(name = "gamlasso", version, long_version = LONG_VERSION, about = "Gamma lasso paths, model selection, simulation and theory checks")]
struct Cli {
    /// Worker threads for folds, replicates and instances (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a regularization path and report information criteria.
    Fit(FitArgs),
    /// Cross-validate a path and refit at the selected penalties.
    Cv(CvArgs),
    /// Run the simulation study or write a fixture dataset.
    Simulate(SimArgs),
    /// Run the randomized theory checks.
    Verify(VerifyArgs),
    /// Solve an L0-penalized least-squares problem.
    Oracle(OracleArgs),
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long, conflicts_with = "triplets")]
    pub data: Option<PathBuf>,
    /// Response column of the CSV file.
    #[arg(long, requires = "data")]
    pub response: Option<String>,
    /// Sparse design as `row col value` lines.
    #[arg(long, requires_all = ["y", "n", "p"])]
    pub triplets: Option<PathBuf>,
    /// Response file for triplet input, one value per line.
    #[arg(long)]
    pub y: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    /// gaussian or binomial.
    #[arg(long, default_value = "gaussian")]
    pub family: String,
    /// Unpenalized columns: names for CSV input, 0-based indices for triplets.
    #[arg(long, value_delimiter = ',')]
    pub free: Vec<String>,
}

#[derive(Args, Debug, Clone)]
pub struct PathArgs {
    #[arg(long, default_value = "0")]
    pub gamma: String,
    #[arg(long, default_value_t = 100)]
    pub nlambda: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lambda_min_ratio: f64,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub standardize: bool,
    #[arg(long)]
    pub accelerate: bool,
    /// Convergence threshold as a multiple of the null deviance.
    #[arg(long)]
    pub thresh: Option<f64>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub path: PathArgs,
    /// Accepted for interface symmetry; fitting is deterministic.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub path: PathArgs,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimArgs {
    /// Write a named fixture dataset instead of running the study (fig3).
    #[arg(long)]
    pub fixture: Option<String>,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub p: usize,
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    #[arg(long, default_value_t = 2.0)]
    pub snr: f64,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "0,2,10")]
    pub gammas: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "CV.min,CV.1se,AICc,AIC,BIC")]
    pub selectors: Vec<String>,
    /// Skip the marginal adaptive lasso comparator.
    #[arg(long)]
    pub no_marginal: bool,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 100)]
    pub nlambda: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lambda_min_ratio: f64,
    /// Bernoulli mask per design entry (element) or per column (column).
    #[arg(long, default_value = "element")]
    pub mask: String,
    /// Record wall-clock seconds per path (output is then not reproducible).
    #[arg(long)]
    pub timings: bool,
    /// Per-replicate CSV (fixture CSV with --fixture); stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON document with the configuration and aggregates.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// lemma1, theorem1, sign_recovery, false_discovery, prop1 or all.
    #[arg(long, default_value = "all")]
    pub suite: String,
    /// Instances per suite; each suite has its own default.
    #[arg(long)]
    pub instances: Option<usize>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub restarts: usize,
    /// Include one record per instance.
    #[arg(long)]
    pub details: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Search prefixes of the column order with penalty 2 sigma2 per column.
    #[arg(long, conflicts_with = "exhaustive", requires = "sigma2")]
    pub nested: bool,
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Enumerate all supports with penalty n nu per column.
    #[arg(long, requires = "nu")]
    pub exhaustive: bool,
    #[arg(long)]
    pub nu: Option<f64>,
    /// Center the response and columns first.
    #[arg(long)]
    pub center: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, unreadable or invalid input: exit 2.
    Input(anyhow::Error),
    /// Anything else: exit 1.
    Other(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Other(e.into())
    }
}

/// Normal completion states.
pub enum Status {
    Ok,
    Truncated,
    Violation,
}

/// Writes `text` to `out` or stdout.
pub fn emit(out: Option<&PathBuf>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(2);
        }
    };
    let result = pool.install(|| match &cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Cv(a) => commands::cv(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Verify(a) => commands::verify(a),
        Command::Oracle(a) => commands::oracle(a),
    });
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Truncated) => {
            eprintln!("warning: path truncated after a diverged segment");
            ExitCode::from(3)
        }
        Ok(Status::Violation) => {
            eprintln!("verification reported a violation");
            ExitCode::from(1)
        }
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
