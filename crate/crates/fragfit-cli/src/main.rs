//! Command-line front end: ingestion, fitting, diagnostics, comparison and
//! curve export wired into reproducible runs.
//!
//! Exit codes: 0 success, 1 computational failure, 2 usage or I/O error.

// `!(a > b)` comparisons are NaN guards on user-supplied numbers.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod output;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "fragfit",
    version,
    about = "Seismic fragility curves via ordinal regression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct McmcArgs {
    /// Number of MCMC chains.
    #[arg(long, default_value_t = 4)]
    chains: usize,
    /// Warm-up iterations per chain (discarded).
    #[arg(long, default_value_t = 1000)]
    warmup: usize,
    /// Retained iterations per chain.
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    /// Prior standard deviation of the Normal(0, sd) parameter priors.
    #[arg(long, default_value_t = 10.0)]
    prior_sd: f64,
}

#[derive(Args, Debug, Clone)]
struct GridArgs {
    /// Intensity grid as start:stop:count (linear spacing).
    #[arg(long)]
    grid: Option<String>,
    /// Explicit comma-separated intensity values.
    #[arg(long)]
    ims: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one or more models by maximum likelihood or MCMC.
    Fit {
        /// Input CSV with header `im,ds`.
        #[arg(long)]
        input: String,
        /// Comma-separated model names (or `all` for the full catalog).
        #[arg(long)]
        models: String,
        /// Inference mode: mle or bayes.
        #[arg(long, default_value = "mle")]
        mode: String,
        /// Number of damage-state categories.
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// RNG seed (required for bayes mode).
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        mcmc: McmcArgs,
        /// Output directory (default: $FRAGFIT_OUT_DIR or ./fragfit_out).
        #[arg(long)]
        out: Option<String>,
    },
    /// Compare models by PSIS-LOO cross-validation (Bayesian fits in-run).
    Compare {
        #[arg(long)]
        input: String,
        #[arg(long)]
        models: String,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// RNG seed (stochastic command; mandatory).
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        mcmc: McmcArgs,
        #[arg(long)]
        out: Option<String>,
    },
    /// Surrogate-residual diagnostics and the parallel-assumption D-check
    /// for the cumulative model.
    Diagnose {
        #[arg(long)]
        input: String,
        /// Model to diagnose (cumulative family only).
        #[arg(long, default_value = "cum")]
        model: String,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// RNG seed (stochastic command; mandatory).
        #[arg(long)]
        seed: u64,
        /// Jittered residual replicates.
        #[arg(long, default_value_t = 1)]
        replicates: usize,
        /// Equal-count bins of the covariate trend.
        #[arg(long, default_value_t = 10)]
        bins: usize,
        /// Highest category of the low-model window.
        #[arg(long, default_value_t = 3)]
        low_end: usize,
        /// Lowest distinguished category of the high-model window.
        #[arg(long, default_value_t = 3)]
        high_start: usize,
        #[arg(long)]
        out: Option<String>,
    },
    /// Export fragility curves (point curves for mle, bands for bayes).
    Curves {
        #[arg(long)]
        input: String,
        #[arg(long)]
        model: String,
        #[arg(long, default_value = "mle")]
        mode: String,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        mcmc: McmcArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Credible level for bayes bands.
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Exceedance convention: `gt` (strict, default) or `geq`.
        #[arg(long, default_value = "gt")]
        convention: String,
        #[arg(long)]
        out: Option<String>,
    },
    /// Draw a synthetic dataset from a model's category-probability law.
    Simulate {
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// JSON file with {"tau": [...], "beta": ..., "gamma": ...}.
        #[arg(long)]
        params: String,
        #[command(flatten)]
        grid: GridArgs,
        /// Repeat the grid this many times.
        #[arg(long, default_value_t = 1)]
        replicate: usize,
        /// RNG seed (stochastic command; mandatory).
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<String>,
    },
    /// Demand/capacity pipeline: closed-form curves and sampled damage states.
    Analytic {
        /// JSON config with {"psdm": {...}, "capacity": [...], "rho": ...}.
        #[arg(long)]
        config: String,
        #[command(flatten)]
        grid: GridArgs,
        /// RNG seed (stochastic command; mandatory).
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<String>,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    };
    std::process::exit(code);
}

/// CLI-level error carrying the process exit code.
pub(crate) struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: msg.into(),
        }
    }

    pub fn compute(msg: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: msg.into(),
        }
    }
}

impl From<fragfit_core::Error> for CliError {
    fn from(e: fragfit_core::Error) -> Self {
        use fragfit_core::Error::*;
        match &e {
            Io { .. } | Parse { .. } | Invalid(_) | Unsupported(_) => {
                CliError::usage(e.to_string())
            }
            Numerical(_) => CliError::compute(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::usage(e.to_string())
    }
}
