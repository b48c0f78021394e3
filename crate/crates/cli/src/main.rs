//! Command-line driver for the relation-extraction pipeline.
//!
//! One declarative TOML config describes a run; command-line flags
//! override individual values. Every subcommand writes its artifacts into
//! the output directory alongside a manifest recording the resolved
//! configuration, its hash, and all seeds, so a rerun with equal inputs
//! reproduces the outputs byte for byte.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "basketnet",
    version,
    about = "Extract complement and substitute relations from transaction data"
)]
pub struct Cli {
    /// Declarative TOML configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Stage seed: the world seed for `simulate`, the detector seed
    /// elsewhere.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Null model: er-variant, bicm-poisson, or bicm-chernoff.
    #[arg(long, global = true, value_name = "KIND")]
    pub null_model: Option<String>,

    /// Similarity measure: original or randomised-config.
    #[arg(long, global = true, value_name = "KIND")]
    pub measure: Option<String>,

    /// Significance level of the MORE (complement) side.
    #[arg(long, global = true)]
    pub alpha_m: Option<f64>,

    /// Significance level of the LESS (substitute) side.
    #[arg(long, global = true)]
    pub alpha_l: Option<f64>,

    /// Quantile threshold for complement scores.
    #[arg(long, global = true)]
    pub qc: Option<f64>,

    /// Quantile threshold for substitute scores.
    #[arg(long, global = true)]
    pub qs: Option<f64>,

    /// Cap the worker thread count.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Output directory for run artifacts.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate a synthetic transaction world with planted relations.
    Simulate,
    /// Build the transaction-product network and export its statistics.
    Build,
    /// Run the significance scan and export the relation edge lists.
    Relations,
    /// Compute thresholded complement and substitute score matrices.
    Scores,
    /// Detect roles on both score networks and rank top partners.
    Roles,
    /// Sweep significance levels and thresholds for stable parameters.
    Calibrate,
    /// Compare scores against external ingredient and category data.
    Validate,
    /// Run build, calibrate, relations, scores, and roles in sequence.
    Pipeline,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Build => "build",
            Command::Relations => "relations",
            Command::Scores => "scores",
            Command::Roles => "roles",
            Command::Calibrate => "calibrate",
            Command::Validate => "validate",
            Command::Pipeline => "pipeline",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
