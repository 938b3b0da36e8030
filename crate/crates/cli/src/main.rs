//! `dpcert` — train with DP-SGD, compute max-information budgets for the
//! run, and turn them into PAC-Bayes risk certificates.
//!
//! Exit codes are a stable contract:
//!   0  success
//!   1  validation failure (an oracle suite found a bound violated)
//!   2  usage or configuration error
//!
//! One top-level seed governs all randomness; every report embeds the
//! resolved config and seed so its numbers can be reproduced exactly.
//! `DPCERT_THREADS` caps the worker pool (results do not depend on it).

mod certify_cmd;
mod envelope;
mod figure;
mod kappa;
mod oracle_cmd;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "dpcert",
    version,
    about = "DP-SGD training, max-information bounds, and PAC-Bayes risk certificates",
    after_help = "Note: DP-SGD aggregates clipped per-sample gradients as a SUM, not a mean; \
                  scale learning rates accordingly."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Max-information budgets for a DP-SGD recipe (grid-minimized and
    /// closed-form), plus single-release and pure-DP comparators.
    Kappa(kappa::KappaArgs),
    /// Plot-ready CSV of kappa/n and log-term curves over (n, zeta, delta)
    /// grids.
    FigureData(figure::FigureArgs),
    /// Run the certificate pipeline from a JSON config.
    Certify(certify_cmd::CertifyArgs),
    /// Validate max-information bounds against exact-enumeration tail
    /// estimates on tiny instances.
    Oracle(oracle_cmd::OracleArgs),
}

/// Failures that should exit with a dedicated code.
pub enum AppError {
    /// Usage/config errors -> exit 2.
    Usage(String),
    /// A bound was empirically violated -> exit 1.
    Validation(String),
}

impl<E: std::fmt::Display> From<E> for AppError {
    fn from(e: E) -> Self {
        AppError::Usage(e.to_string())
    }
}

fn main() {
    if let Ok(threads) = std::env::var("DPCERT_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n >= 1 => {
                // ignore failure if a pool already exists
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: DPCERT_THREADS must be a positive integer");
                std::process::exit(2);
            }
        }
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Kappa(args) => kappa::run(args),
        Command::FigureData(args) => figure::run(args),
        Command::Certify(args) => certify_cmd::run(args),
        Command::Oracle(args) => oracle_cmd::run(args),
    };
    match result {
        Ok(()) => {}
        Err(AppError::Usage(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
        Err(AppError::Validation(msg)) => {
            eprintln!("validation failure: {msg}");
            std::process::exit(1);
        }
    }
}
