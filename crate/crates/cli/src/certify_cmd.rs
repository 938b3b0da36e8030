//! `dpcert certify` — run the certificate pipeline from a JSON config.

use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use serde::{Deserialize, Serialize};

use dpcert_core::certify::{run_pipeline, PipelineConfig, PipelineReport};
use dpcert_core::data::{load_csv, synth_dataset, DatasetHandle, SynthKind};
use dpcert_core::rng;

use crate::envelope::{load_config, to_json_pretty, write_output, ReportEnvelope};
use crate::AppError;

#[derive(Args, Debug)]
pub struct CertifyArgs {
    /// JSON pipeline configuration (see docs/config.md).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include wall-clock timings in the report (breaks byte-identical
    /// reruns, off by default).
    #[arg(long)]
    timings: bool,
}

/// Where the training data comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    TwoGaussians { n: u32, features: u32, separation: f64 },
    Xor { n: u32, features: u32 },
    Csv { path: PathBuf },
}

/// Top-level certify config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyConfig {
    /// Config schema version; must be 1.
    pub version: u32,
    pub dataset: DatasetConfig,
    pub pipeline: PipelineConfig,
}

pub fn build_dataset(config: &CertifyConfig) -> Result<DatasetHandle, AppError> {
    let seed = rng::derive_seed(config.pipeline.seed, "dataset", 0);
    let ds = match &config.dataset {
        DatasetConfig::TwoGaussians { n, features, separation } => {
            synth_dataset(SynthKind::TwoGaussians { separation: *separation }, *n, *features, seed)?
        }
        DatasetConfig::Xor { n, features } => {
            synth_dataset(SynthKind::Xor, *n, *features, seed)?
        }
        DatasetConfig::Csv { path } => load_csv(path)
            .map_err(|e| AppError::Usage(format!("dataset {}: {e}", path.display())))?,
    };
    Ok(ds)
}

fn summary_lines(report: &PipelineReport) -> String {
    let mut out = String::new();
    out.push_str("prior            erisk(prior)  B(prior)  erisk(post)  kappa      KL         B(post)\n");
    for row in &report.table {
        out.push_str(&format!(
            "{:<16} {:<13.4} {:<9.4} {:<12.4} {:<10.4} {:<10.4} {:<7.4}\n",
            format!("{:?}", row.prior),
            row.erisk_prior,
            row.bound_prior,
            row.erisk_posterior,
            row.kappa,
            row.kl,
            row.bound_posterior,
        ));
    }
    out
}

pub fn run(args: CertifyArgs) -> Result<(), AppError> {
    let started = Instant::now();
    let mut config: CertifyConfig = load_config(&args.config)?;
    if config.version != 1 {
        return Err(AppError::Usage(format!(
            "unsupported config version {} (expected 1)",
            config.version
        )));
    }
    if let Some(seed) = args.seed {
        config.pipeline.seed = seed;
    }
    config.pipeline.validate()?;

    let data = build_dataset(&config)?;
    let report = run_pipeline(&config.pipeline, &data)?;
    eprint!("{}", summary_lines(&report));

    let seed = config.pipeline.seed;
    let resolved = serde_json::to_value(&config)
        .map_err(|e| AppError::Usage(format!("config serialization failed: {e}")))?;
    let envelope =
        ReportEnvelope::new("certify", resolved, seed, report).with_timings(started, args.timings);
    write_output(args.out.as_ref(), &to_json_pretty(&envelope)?)
}
