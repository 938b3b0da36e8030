//! `dpcert oracle` — run the tail-validation suites from a JSON config.
//!
//! Exit code 0 iff every suite passes; 1 when a bound is empirically
//! violated; 2 for config errors or infeasible instances.

use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use serde::{Deserialize, Serialize};

use dpcert_core::bounds::BoundMethod;
use dpcert_core::oracle::{validate_bound, Mechanism, TinyInstance, ValidationReport};

use crate::envelope::{load_config, to_json_pretty, write_output, ReportEnvelope};
use crate::AppError;

#[derive(Args, Debug)]
pub struct OracleArgs {
    /// JSON oracle suite configuration (see docs/config.md).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include wall-clock timings in the report.
    #[arg(long)]
    timings: bool,
}

/// One named validation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub name: String,
    pub instance: TinyInstance,
    /// Bound method; defaults to the one matching the mechanism.
    #[serde(default)]
    pub method: Option<BoundMethod>,
    pub beta: f64,
    pub trials: u64,
    /// Scale applied to kappa before testing the tail; 1.0 validates the
    /// bound, a smaller value deliberately tests an invalid threshold.
    #[serde(default = "default_scale")]
    pub threshold_scale: f64,
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    /// Config schema version; must be 1.
    pub version: u32,
    pub seed: u64,
    pub suites: Vec<SuiteConfig>,
}

#[derive(Debug, Serialize)]
struct SuiteOutcome {
    name: String,
    report: ValidationReport,
}

#[derive(Debug, Serialize)]
struct OracleOutputs {
    suites: Vec<SuiteOutcome>,
    all_passed: bool,
}

pub fn run(args: OracleArgs) -> Result<(), AppError> {
    let started = Instant::now();
    let mut config: OracleConfig = load_config(&args.config)?;
    if config.version != 1 {
        return Err(AppError::Usage(format!(
            "unsupported config version {} (expected 1)",
            config.version
        )));
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if config.suites.is_empty() {
        return Err(AppError::Usage("oracle config has no suites".into()));
    }

    let mut outcomes = Vec::with_capacity(config.suites.len());
    for (i, suite) in config.suites.iter().enumerate() {
        let method = suite.method.unwrap_or(match suite.instance.mechanism {
            Mechanism::SingleShot => BoundMethod::GaussianSingle,
            Mechanism::DpsgdChain => BoundMethod::Optimized,
        });
        let seed = dpcert_core::rng::derive_seed(config.seed, "oracle-suite", i as u64);
        let report = validate_bound(
            &suite.instance,
            method,
            suite.beta,
            suite.trials,
            seed,
            suite.threshold_scale,
        )
        .map_err(|e| AppError::Usage(format!("suite `{}`: {e}", suite.name)))?;
        eprintln!(
            "{}: {} (tail {:.5} vs beta {:.5} + radius {:.5}, kappa {:.5}, threshold {:.5})",
            suite.name,
            if report.passed { "PASS" } else { "FAIL" },
            report.estimate.tail,
            report.beta,
            report.estimate.radius,
            report.kappa.value,
            report.threshold,
        );
        outcomes.push(SuiteOutcome { name: suite.name.clone(), report });
    }

    let all_passed = outcomes.iter().all(|o| o.report.passed);
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.report.passed)
        .map(|o| o.name.clone())
        .collect();
    let seed = config.seed;
    let resolved = serde_json::to_value(&config)
        .map_err(|e| AppError::Usage(format!("config serialization failed: {e}")))?;
    let outputs = OracleOutputs { suites: outcomes, all_passed };
    let envelope =
        ReportEnvelope::new("oracle", resolved, seed, outputs).with_timings(started, args.timings);
    write_output(args.out.as_ref(), &to_json_pretty(&envelope)?)?;

    if all_passed {
        Ok(())
    } else {
        Err(AppError::Validation(format!("suites violated: {}", failed.join(", "))))
    }
}
