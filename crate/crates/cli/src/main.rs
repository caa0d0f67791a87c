//! `acim`: run map validations and transfer-operator computations from the shell.

mod plot;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Check class membership and print the expansion constants.
    Validate,
    /// Invariant density from the Ulam matrix.
    Density,
    /// Second eigenvalue and spectral-gap fit.
    Spectrum,
    /// Correlation sequence of `x − 1/2` with itself.
    Correlations,
    /// Distribution of normalized Birkhoff sums.
    Clt,
    /// Orbit samples and their KS distance to the invariant law.
    Sample,
    /// Lasota–Yorke constants, lower function and the variation probe.
    LyCheck,
    /// First-return map to `[eps, 1]`.
    FirstReturn,
}

#[derive(Debug, Parser)]
#[command(name = "acim", version, about = "Invariant densities and mixing statistics of piecewise convex maps")]
pub struct Cli {
    pub command: Command,
    /// Built-in map name or path to a JSON map configuration.
    #[arg(long)]
    pub map: String,
    #[arg(long, default_value_t = 1024)]
    pub bins: usize,
    #[arg(long = "tail-tol", default_value_t = 1e-8)]
    pub tail_tol: f64,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[arg(long = "max-iter", default_value_t = 100_000)]
    pub max_iter: usize,
    /// Lag horizon; block length for `clt`, sample count for `sample`.
    #[arg(long = "n-max")]
    pub n_max: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Branch count of `conjugated_exp`.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Orbit count for `clt`.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value = "acim-out")]
    pub out: PathBuf,
    /// Run on a configuration file that fails validation.
    #[arg(long)]
    pub force: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run::dispatch(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("acim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
