//! `dpcert kappa` — budgets for one recipe, or a one-parameter sweep.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::json;

use dpcert_core::bounds::{
    gaussian_sigma_for_dp, maxinfo_dpsgd_explicit, maxinfo_dpsgd_optimized,
    maxinfo_gaussian_mechanism, maxinfo_pure_dp, tau_closed_form, MaxInfoBound, NoiseRatio,
    TrainingRecipe,
};

use crate::envelope::{csv_lines, to_json_pretty, write_output, ReportEnvelope};
use crate::AppError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
pub struct KappaArgs {
    /// Number of epochs E.
    #[arg(long = "E")]
    epochs: u32,
    /// Steps per epoch T.
    #[arg(long = "T")]
    steps: u32,
    /// Batch size m.
    #[arg(long = "m")]
    batch_size: u32,
    /// Clipping threshold zeta.
    #[arg(long)]
    zeta: f64,
    /// Noise scale sigma.
    #[arg(long)]
    sigma: f64,
    /// Failure probability beta in (0,1).
    #[arg(long)]
    beta: f64,
    /// Dataset size n; defaults to T*m (the minimum the recipe permits).
    #[arg(long = "n")]
    dataset_size: Option<u32>,
    /// Sweep one parameter: `name=start:stop:count` with name one of
    /// zeta, sigma, beta, E, T, m. Emits CSV.
    #[arg(long)]
    sweep: Option<String>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format for the single-point report (sweeps are always CSV).
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Include wall-clock timings in the report.
    #[arg(long)]
    timings: bool,
}

#[derive(Debug, Serialize)]
struct Comparators {
    /// Single Gaussian release of one batch with sensitivity s = zeta.
    gaussian_single: MaxInfoBound,
    /// Pure-DP budget at the epsilon the Gaussian calibration would give
    /// for delta = beta; absent when that epsilon leaves (0,1).
    #[serde(skip_serializing_if = "Option::is_none")]
    pure_dp: Option<MaxInfoBound>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pure_dp_epsilon: Option<f64>,
}

#[derive(Debug, Serialize)]
struct KappaOutputs {
    recipe: TrainingRecipe,
    beta: f64,
    noise_ratio: NoiseRatio,
    optimized: MaxInfoBound,
    explicit: MaxInfoBound,
    tau_closed_form: f64,
    comparators: Comparators,
}

fn recipe_of(args: &KappaArgs) -> Result<TrainingRecipe, AppError> {
    let min_n = args
        .steps
        .checked_mul(args.batch_size)
        .ok_or_else(|| AppError::Usage("T*m overflows".into()))?;
    let recipe = TrainingRecipe {
        epochs: args.epochs,
        steps_per_epoch: args.steps,
        batch_size: args.batch_size,
        clip_threshold: args.zeta,
        noise_scale: args.sigma,
        dataset_size: args.dataset_size.unwrap_or(min_n),
    };
    recipe.validate()?;
    Ok(recipe)
}

fn compute_outputs(recipe: &TrainingRecipe, beta: f64) -> Result<KappaOutputs, AppError> {
    let optimized = maxinfo_dpsgd_optimized(recipe, beta)?;
    let explicit = maxinfo_dpsgd_explicit(recipe, beta)?;
    let nu = recipe.noise_ratio()?;
    let noise_ratio = if nu > 0.0 {
        NoiseRatio::from_nu(nu)?
    } else {
        NoiseRatio { nu: 0.0, r_nu: f64::INFINITY }
    };
    let tau = if nu > 0.0 {
        tau_closed_form(recipe.steps_per_epoch, nu, beta)?
    } else {
        0.0
    };
    let gaussian_single = maxinfo_gaussian_mechanism(
        recipe.batch_size,
        recipe.clip_threshold.max(f64::MIN_POSITIVE),
        recipe.noise_scale.max(f64::MIN_POSITIVE),
        beta,
    )?;
    // epsilon the (eps, delta)-calibration would assign at delta = beta
    let epsilon = recipe.clip_threshold / recipe.noise_scale.max(f64::MIN_POSITIVE)
        * (2.0 * (1.25 / beta).ln()).sqrt();
    let (pure_dp, pure_dp_epsilon) = if epsilon > 0.0 && epsilon < 1.0 {
        // sanity: the calibration inverts back to sigma
        debug_assert!(
            (gaussian_sigma_for_dp(recipe.clip_threshold, epsilon, beta).unwrap_or(f64::NAN)
                - recipe.noise_scale)
                .abs()
                < 1e-6 * recipe.noise_scale.max(1.0)
        );
        (Some(maxinfo_pure_dp(recipe.dataset_size, epsilon, beta)?), Some(epsilon))
    } else {
        (None, None)
    };
    Ok(KappaOutputs {
        recipe: *recipe,
        beta,
        noise_ratio,
        optimized,
        explicit,
        tau_closed_form: tau,
        comparators: Comparators { gaussian_single, pure_dp, pure_dp_epsilon },
    })
}

fn csv_header() -> Vec<&'static str> {
    vec![
        "E",
        "T",
        "m",
        "zeta",
        "sigma",
        "beta",
        "nu",
        "kappa_optimized",
        "lambda_star",
        "kappa_explicit",
        "tau_closed_form",
    ]
}

fn csv_row(o: &KappaOutputs) -> Vec<String> {
    vec![
        o.recipe.epochs.to_string(),
        o.recipe.steps_per_epoch.to_string(),
        o.recipe.batch_size.to_string(),
        o.recipe.clip_threshold.to_string(),
        o.recipe.noise_scale.to_string(),
        o.beta.to_string(),
        o.noise_ratio.nu.to_string(),
        o.optimized.value.to_string(),
        o.optimized.minimizer.map_or_else(String::new, |l| l.to_string()),
        o.explicit.value.to_string(),
        o.tau_closed_form.to_string(),
    ]
}

/// Parsed `name=start:stop:count` sweep request.
struct Sweep {
    param: String,
    values: Vec<f64>,
}

fn parse_sweep(spec: &str) -> Result<Sweep, AppError> {
    let (param, range) = spec
        .split_once('=')
        .ok_or_else(|| AppError::Usage(format!("sweep `{spec}` is not name=start:stop:count")))?;
    let parts: Vec<&str> = range.split(':').collect();
    if parts.len() != 3 {
        return Err(AppError::Usage(format!(
            "sweep range `{range}` is not start:stop:count"
        )));
    }
    let start: f64 = parts[0].parse().map_err(|_| AppError::Usage("bad sweep start".into()))?;
    let stop: f64 = parts[1].parse().map_err(|_| AppError::Usage("bad sweep stop".into()))?;
    let count: usize = parts[2].parse().map_err(|_| AppError::Usage("bad sweep count".into()))?;
    if count < 1 {
        return Err(AppError::Usage("sweep count must be >= 1".into()));
    }
    let values = if count == 1 {
        vec![start]
    } else {
        (0..count)
            .map(|k| start + (stop - start) * k as f64 / (count - 1) as f64)
            .collect()
    };
    Ok(Sweep { param: param.to_string(), values })
}

pub fn run(args: KappaArgs) -> Result<(), AppError> {
    let started = Instant::now();

    if let Some(spec) = &args.sweep {
        let sweep = parse_sweep(spec)?;
        let mut rows = Vec::with_capacity(sweep.values.len());
        for v in &sweep.values {
            let mut a = KappaArgs { sweep: None, out: None, ..args_copy(&args) };
            let mut beta = a.beta;
            match sweep.param.as_str() {
                "zeta" => a.zeta = *v,
                "sigma" => a.sigma = *v,
                "beta" => beta = *v,
                "E" => a.epochs = round_u32(*v)?,
                "T" => {
                    a.steps = round_u32(*v)?;
                    a.dataset_size = None;
                }
                "m" => {
                    a.batch_size = round_u32(*v)?;
                    a.dataset_size = None;
                }
                other => {
                    return Err(AppError::Usage(format!(
                        "unknown sweep parameter `{other}` (expected zeta, sigma, beta, E, T, m)"
                    )))
                }
            }
            a.beta = beta;
            let recipe = recipe_of(&a)?;
            rows.push(csv_row(&compute_outputs(&recipe, a.beta)?));
        }
        let csv = csv_lines(&csv_header(), &rows);
        return write_output(args.out.as_ref(), &csv);
    }

    let recipe = recipe_of(&args)?;
    let outputs = compute_outputs(&recipe, args.beta)?;
    match args.format {
        Format::Csv => {
            let csv = csv_lines(&csv_header(), &[csv_row(&outputs)]);
            write_output(args.out.as_ref(), &csv)
        }
        Format::Json => {
            let config = json!({
                "E": recipe.epochs,
                "T": recipe.steps_per_epoch,
                "m": recipe.batch_size,
                "zeta": recipe.clip_threshold,
                "sigma": recipe.noise_scale,
                "n": recipe.dataset_size,
                "beta": args.beta,
            });
            let report = ReportEnvelope::new("kappa", config, 0, outputs)
                .with_timings(started, args.timings);
            write_output(args.out.as_ref(), &to_json_pretty(&report)?)
        }
    }
}

fn args_copy(a: &KappaArgs) -> KappaArgs {
    KappaArgs {
        epochs: a.epochs,
        steps: a.steps,
        batch_size: a.batch_size,
        zeta: a.zeta,
        sigma: a.sigma,
        beta: a.beta,
        dataset_size: a.dataset_size,
        sweep: None,
        out: None,
        format: a.format,
        timings: a.timings,
    }
}

fn round_u32(v: f64) -> Result<u32, AppError> {
    let r = v.round();
    if r < 1.0 || r > f64::from(u32::MAX) {
        return Err(AppError::Usage(format!("value {v} out of range for an integer parameter")));
    }
    Ok(r as u32)
}
