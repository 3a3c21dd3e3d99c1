//! `stokesfit`: moments, sampling, estimation and benchmarks for
//! two-mode Stokes interferometry with Gaussian states, driven by flags
//! or a TOML config file (flags win).
//!
//! Exit codes: 0 success; 1 infeasible estimation or failed validation,
//! with a message naming the violated condition; 2 configuration errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use config::CliError;

#[derive(Parser)]
#[command(name = "stokesfit", version, about = "Gaussian-state reconstruction from generalized Stokes measurements")]
pub struct Cli {
    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// RNG seed (beats the config file and the STOKESFIT_SEED variable).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Cap the worker thread count.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Omit the `# timestamp=...` header line from output files, making
    /// repeated runs byte-identical.
    #[arg(long, global = true)]
    pub no_timestamp: bool,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand)]
pub enum Cmd {
    /// Analytic moment set for a signal/reference pair, as CSV.
    Oracle(OracleArgs),
    /// Monte Carlo moment set; optionally dump the raw shots.
    Sample(SampleArgs),
    /// Invert a moment set (or shot dump) into signal parameters.
    Estimate(EstimateArgs),
    /// Mean-squared-error study over repeated trials.
    Bench(BenchArgs),
    /// MSE study swept along one axis; long-format CSV.
    Sweep(SweepArgs),
    /// Single-trial estimates against a growing shot budget; CSV.
    Converge(ConvergeArgs),
    /// Calibrate the operator-ordering constants in a truncated Fock
    /// space and check them against their verified values.
    Validate(ValidateArgs),
    /// Two distinct signals no squeezed-only reference can tell apart.
    #[command(name = "demo-indistinguishable")]
    DemoIndistinguishable(DemoArgs),
}

#[derive(Args)]
pub struct StateArgs {
    /// Signal state: `b=237,c=86,alpha=0.7,d=158,beta=0.2` (alpha, d and
    /// beta default 0), or `vacuum`, `thermal,r=2`, `coherent,d=2`.
    #[arg(long, value_name = "SPEC")]
    pub signal: Option<String>,
    /// Reference: energy-ratio triple `r=1,delta=10,gamma=1`, direct
    /// `b=..,c=..,d=..` or `r=..,q=..,d=..`, or `vacuum`, `thermal,r=2`,
    /// `coherent,d=2`. Reference directions are fixed at zero.
    #[arg(long = "ref", value_name = "SPEC")]
    pub reference: Option<String>,
    /// Measurement phases, comma-separated radians; `pi` fractions like
    /// `pi/4` accepted. Default `0,pi/4,pi/2`.
    #[arg(long, value_name = "LIST")]
    pub angles: Option<String>,
}

#[derive(Args)]
pub struct OutArgs {
    /// Output file. Default is stdout, which never gets a timestamp.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub state: StateArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub state: StateArgs,
    /// Total shot budget, split evenly across the angles.
    #[arg(long)]
    pub shots: Option<u64>,
    /// Measurement model: `wigner` (symmetric-ordered) or `calibrated`
    /// (quantum-ordered via recorded offsets).
    #[arg(long, value_name = "MODE")]
    pub mode: Option<String>,
    /// Also write every shot as CSV (capped at 10^7 shots).
    #[arg(long, value_name = "PATH")]
    pub dump_shots: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args)]
pub struct EstimateArgs {
    /// Moment-set CSV produced by `oracle` or `sample`.
    #[arg(long, value_name = "PATH", conflicts_with = "shots_file")]
    pub moments: Option<PathBuf>,
    /// Raw shot CSV produced by `sample --dump-shots`.
    #[arg(long, value_name = "PATH")]
    pub shots_file: Option<PathBuf>,
    /// With --shots-file: the model the dump was taken under (`wigner`
    /// or `calibrated`); must match the sampling run.
    #[arg(long, value_name = "MODE")]
    pub mode: Option<String>,
    /// Reference spec, same grammar as elsewhere.
    #[arg(long = "ref", value_name = "SPEC")]
    pub reference: Option<String>,
    /// Reference record file of `key = value` lines, as written by hand
    /// or by other tooling.
    #[arg(long, value_name = "PATH", conflicts_with = "reference")]
    pub ref_file: Option<PathBuf>,
    /// Estimator: `general` (default), `cosine-fit`, `squeezed`,
    /// `displaced`, `thermal`, `s02-squeezed` or `s02-displaced`.
    #[arg(long, value_name = "NAME")]
    pub path: Option<String>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub state: StateArgs,
    /// Shots per trial.
    #[arg(long)]
    pub shots: Option<u64>,
    /// Independent trials (M).
    #[arg(long)]
    pub trials: Option<u32>,
    /// Bootstrap resamples for the MSE error bars.
    #[arg(long)]
    pub bootstrap: Option<u32>,
    /// Measurement model: `wigner` or `calibrated`.
    #[arg(long, value_name = "MODE")]
    pub mode: Option<String>,
    /// Estimator path: `general`, `cosine-fit`, `squeezed`, `displaced`.
    #[arg(long, value_name = "NAME")]
    pub path: Option<String>,
    /// Stream block index; runs with different points draw disjoint
    /// random streams.
    #[arg(long)]
    pub point: Option<u64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub bench: BenchArgs,
    /// Sweep coordinate: `gamma`, `delta`, `r_ref` or `n_states`.
    #[arg(long, value_name = "AXIS")]
    pub axis: Option<String>,
    /// Comma-separated axis values.
    #[arg(long, value_name = "LIST")]
    pub values: Option<String>,
}

#[derive(Args)]
pub struct ConvergeArgs {
    #[command(flatten)]
    pub bench: BenchArgs,
    /// Comma-separated shot budgets, one single-trial estimate each.
    #[arg(long, value_name = "LIST")]
    pub n_values: Option<String>,
}

#[derive(Args)]
pub struct ValidateArgs {
    /// Fock-space truncation dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Residual tolerance for a PASS verdict.
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args)]
pub struct DemoArgs {
    #[command(flatten)]
    pub out: OutArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size the thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Infeasible(msg)) => {
            eprintln!("infeasible: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
