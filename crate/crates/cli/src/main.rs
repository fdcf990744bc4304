//! `cdfkan`: training sweeps, HCR demos and gradient checks.
//!
//! Exit codes: 0 success, 1 check failure, 2 usage error, 3 I/O error.

// `!(x > 0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod gradcheck;
mod hcr_demo;
mod manifest;
mod run;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use cdfkan::data::DataError;
use cdfkan::hcr::HcrError;
use cdfkan::kan::KanError;
use cdfkan::train::TrainError;
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "cdfkan", version, about = "CDF-normalized Legendre KAN experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one (variant, degree) pair on MNIST.
    Train(run::TrainArgs),
    /// Train every listed variant at every listed degree.
    Sweep(run::SweepArgs),
    /// Fit HCR densities to a 2D Gaussian after MinMax and EDF normalization.
    HcrDemo(hcr_demo::HcrDemoArgs),
    /// Finite-difference gradient check of every variant at toy size.
    Gradcheck(gradcheck::GradcheckArgs),
}

/// Bad flag values that clap cannot catch on its own.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// A check ran to completion and did not pass.
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

fn is_io(e: &(dyn std::error::Error + 'static)) -> bool {
    if e.is::<std::io::Error>() {
        return true;
    }
    if let Some(c) = e.downcast_ref::<csv::Error>() {
        return c.is_io_error();
    }
    if let Some(d) = e.downcast_ref::<DataError>() {
        return matches!(
            d,
            DataError::Io { .. }
                | DataError::BadMagic { .. }
                | DataError::Truncated { .. }
                | DataError::CountMismatch { .. }
                | DataError::BadLabel { .. }
        );
    }
    matches!(e.downcast_ref::<TrainError>(), Some(TrainError::Io { .. }))
        || matches!(e.downcast_ref::<KanError>(), Some(KanError::Io(_)))
        || matches!(e.downcast_ref::<HcrError>(), Some(HcrError::Io(_)))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<UsageError>()) {
        return 2;
    }
    if err.chain().any(|e| matches!(e.downcast_ref::<DataError>(), Some(DataError::SubsetTooLarge { .. }))) {
        return 2;
    }
    if err.chain().any(is_io) {
        return 3;
    }
    1
}

/// Creates the run directory; every file a command writes lives inside it.
pub fn prepare_out(out: &PathBuf) -> anyhow::Result<()> {
    std::fs::create_dir_all(out).map_err(|e| anyhow::Error::new(e).context(format!("creating {}", out.display())))
}

/// The error chain joined by `: `, skipping causes already quoted by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => run::cmd_train(a),
        Command::Sweep(a) => run::cmd_sweep(a),
        Command::HcrDemo(a) => hcr_demo::cmd_hcr_demo(a),
        Command::Gradcheck(a) => gradcheck::cmd_gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
