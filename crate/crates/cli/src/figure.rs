//! `dpcert figure-data` — kappa/n and log-term curves for external
//! plotting, over (n, zeta, delta) grids at a fixed recipe shape.
//!
//! Budgets follow the learned-prior certificate: kappa is evaluated at
//! failure probability beta = delta/2, and the log-term column is
//! log(4*sqrt(n)/delta)/n.

use std::path::PathBuf;

use clap::Args;

use dpcert_core::bounds::{maxinfo_dpsgd_explicit, maxinfo_dpsgd_optimized, TrainingRecipe};

use crate::envelope::{csv_lines, write_output};
use crate::AppError;

#[derive(Args, Debug)]
pub struct FigureArgs {
    /// Comma-separated dataset sizes.
    #[arg(long = "n-grid", value_delimiter = ',', required = true)]
    n_grid: Vec<u32>,
    /// Comma-separated clipping thresholds.
    #[arg(long = "zeta-grid", value_delimiter = ',', required = true)]
    zeta_grid: Vec<f64>,
    /// Comma-separated confidence parameters delta.
    #[arg(long = "delta-grid", value_delimiter = ',', required = true)]
    delta_grid: Vec<f64>,
    /// Noise scale sigma (zeta/sigma is the signal-to-noise ratio column).
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long = "E", default_value_t = 1)]
    epochs: u32,
    #[arg(long = "T")]
    steps: u32,
    #[arg(long = "m")]
    batch_size: u32,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(args: FigureArgs) -> Result<(), AppError> {
    let header = vec![
        "n",
        "zeta",
        "sigma",
        "ratio",
        "delta",
        "kappa_optimized",
        "kappa_explicit",
        "kappa_optimized_over_n",
        "kappa_explicit_over_n",
        "log_term_over_n",
    ];
    let mut rows = Vec::new();
    for &n in &args.n_grid {
        for &zeta in &args.zeta_grid {
            for &delta in &args.delta_grid {
                if !(delta > 0.0 && delta < 1.0) {
                    return Err(AppError::Usage(format!("delta must lie in (0,1), got {delta}")));
                }
                let recipe = TrainingRecipe {
                    epochs: args.epochs,
                    steps_per_epoch: args.steps,
                    batch_size: args.batch_size,
                    clip_threshold: zeta,
                    noise_scale: args.sigma,
                    dataset_size: n,
                };
                recipe.validate()?;
                let beta = delta / 2.0;
                let opt = maxinfo_dpsgd_optimized(&recipe, beta)?;
                let exp = maxinfo_dpsgd_explicit(&recipe, beta)?;
                let nf = f64::from(n);
                let log_term = (4.0 * nf.sqrt() / delta).ln() / nf;
                rows.push(vec![
                    n.to_string(),
                    zeta.to_string(),
                    args.sigma.to_string(),
                    (zeta / args.sigma).to_string(),
                    delta.to_string(),
                    opt.value.to_string(),
                    exp.value.to_string(),
                    (opt.value / nf).to_string(),
                    (exp.value / nf).to_string(),
                    log_term.to_string(),
                ]);
            }
        }
    }
    write_output(args.out.as_ref(), &csv_lines(&header, &rows))
}
