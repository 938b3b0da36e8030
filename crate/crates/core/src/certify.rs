//! The end-to-end certificate pipeline: train DP-SGD priors over a recipe
//! grid, optimize a diagonal-Gaussian posterior against the bound,
//! Monte-Carlo-estimate the zero-one risk, and emit union-bound risk
//! certificates.
//!
//! The union bound is paid over K1 prior means × K2 prior variances. The
//! optional data-independent baseline mean counts as one more entry of K1
//! (with κ = 0), so the minimum-B selection across every cell — including
//! the baseline — stays valid at confidence 1 − δ − δ′.
//!
//! Posterior optimization minimizes a differentiable surrogate
//! (surrogate risk + Pinsker-form penalty) with reparameterized sampling
//! and a log-variance parameterization; the final certificate uses the
//! tighter kl-inversion instead. Accepted steps never increase the
//! surrogate objective (step-halving line search on fixed evaluation
//! draws), so a zero budget returns the prior unchanged.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bounds::{maxinfo_dpsgd_optimized, MaxInfoBound, TrainingRecipe};
use crate::data::DatasetHandle;
use crate::dpsgd::{dpsgd_batch, LearningRates, UpdateKind, UpdateRule};
use crate::error::CoreError;
use crate::models::{
    loss_and_gradient, mc_risk_of_stochastic_model, BoundedLoss, ModelSpec,
};
use crate::pac_bayes::{
    gaussian_kl, union_bound_certificate, ConfidenceSplit, GridSizes, RiskCertificate,
    RiskEstimate, StochasticModel,
};
use crate::{rng, Result};

/// One DP-SGD hyperparameter tuple of the K1 grid: the bound-relevant
/// recipe plus the training-only knobs (update rule, learning rates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecipeConfig {
    pub epochs: u32,
    pub steps_per_epoch: u32,
    pub batch_size: u32,
    pub clip_threshold: f64,
    pub noise_scale: f64,
    pub dataset_size: u32,
    pub update_rule: UpdateKind,
    pub learning_rates: LearningRates,
}

impl RecipeConfig {
    pub fn recipe(&self) -> TrainingRecipe {
        TrainingRecipe {
            epochs: self.epochs,
            steps_per_epoch: self.steps_per_epoch,
            batch_size: self.batch_size,
            clip_threshold: self.clip_threshold,
            noise_scale: self.noise_scale,
            dataset_size: self.dataset_size,
        }
    }

    pub fn rule(&self) -> UpdateRule {
        UpdateRule { kind: self.update_rule, learning_rates: self.learning_rates.clone() }
    }
}

/// Gradient-descent budget of the posterior optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosteriorBudget {
    pub steps: u32,
    pub learning_rate: f64,
    /// Reparameterized draws per objective/gradient evaluation.
    pub draws_per_step: u32,
}

impl PosteriorBudget {
    pub fn validate(&self) -> Result<()> {
        if self.steps > 0
            && (!(self.learning_rate > 0.0) || !self.learning_rate.is_finite())
        {
            return Err(CoreError::invalid("posterior learning rate must be > 0"));
        }
        if self.steps > 0 && self.draws_per_step == 0 {
            return Err(CoreError::invalid("draws_per_step must be >= 1"));
        }
        Ok(())
    }
}

/// Full pipeline configuration (the `certify` section of the JSON config).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub model: ModelSpec,
    /// Training surrogate clamp ceiling; certificates always use zero-one.
    pub train_clamp: f64,
    pub split: ConfidenceSplit,
    /// K1 DP-SGD hyperparameter tuples.
    pub recipes: Vec<RecipeConfig>,
    /// K2 prior variances.
    pub tau_grid: Vec<f64>,
    /// Also evaluate a data-independent prior mean (κ = 0); counted as one
    /// extra K1 entry so selection over all cells stays valid.
    #[serde(default)]
    pub data_independent_baseline: bool,
    pub posterior: PosteriorBudget,
    /// Monte-Carlo draws for the final risk estimates.
    pub final_mc_draws: u64,
    /// θ₀ scale override; default is 1/sqrt(fan_in) per layer.
    #[serde(default)]
    pub init_scale: Option<f64>,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.train_clamp > 0.0) {
            return Err(CoreError::invalid("train_clamp must be > 0"));
        }
        self.split.validate()?;
        if self.recipes.is_empty() && !self.data_independent_baseline {
            return Err(CoreError::invalid("need at least one recipe or the baseline"));
        }
        for rc in &self.recipes {
            rc.recipe().validate()?;
            rc.update_rule.validate()?;
            rc.learning_rates.validate(rc.steps_per_epoch)?;
        }
        if self.tau_grid.is_empty() {
            return Err(CoreError::invalid("tau grid must be non-empty"));
        }
        if self.tau_grid.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(CoreError::invalid("tau grid entries must be finite and > 0"));
        }
        self.posterior.validate()?;
        if self.final_mc_draws == 0 {
            return Err(CoreError::invalid("final_mc_draws must be >= 1"));
        }
        Ok(())
    }

    /// K1 = recipe tuples plus the baseline mean if enabled.
    pub fn k1(&self) -> u32 {
        self.recipes.len() as u32 + u32::from(self.data_independent_baseline)
    }

    pub fn k2(&self) -> u32 {
        self.tau_grid.len() as u32
    }
}

/// Where a prior mean came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    DataIndependent,
    DpSgd,
}

/// Train the prior mean with batch DP-SGD and attach the isotropic
/// variance τ. For the data-independent baseline the mean is a fresh
/// seeded initialization instead and κ is 0 by construction.
pub fn build_prior(
    data: &DatasetHandle,
    spec: &ModelSpec,
    train_loss: &BoundedLoss,
    recipe: &RecipeConfig,
    tau: f64,
    init_scale: Option<f64>,
    seed: u64,
) -> Result<StochasticModel> {
    data.validate()?;
    let theta0 = spec.init_params(rng::derive_seed(seed, "prior-init", 0), init_scale);
    let grad = |params: &[f64], i: usize| {
        loss_and_gradient(spec, params, &data.features[i], data.labels[i], train_loss)
            .map(|(_, g)| g)
    };
    let mean = dpsgd_batch(
        &recipe.recipe(),
        &recipe.rule(),
        grad,
        theta0,
        rng::derive_seed(seed, "prior-train", 0),
    )?;
    StochasticModel::isotropic(mean, tau)
}

/// The data-independent prior: a fresh seeded initialization as the mean.
pub fn data_independent_prior(
    spec: &ModelSpec,
    tau: f64,
    init_scale: Option<f64>,
    seed: u64,
) -> Result<StochasticModel> {
    let mean = spec.init_params(rng::derive_seed(seed, "baseline-init", 0), init_scale);
    StochasticModel::isotropic(mean, tau)
}

/// Differentiable objective the posterior descends:
/// surrogate risk + sqrt((KL + κ + log(2·K1·K2·√n/(δ−δ′−β))) / (2n)).
struct PosteriorObjective<'a> {
    data: &'a DatasetHandle,
    spec: &'a ModelSpec,
    loss: &'a BoundedLoss,
    prior: &'a StochasticModel,
    kappa: f64,
    log_term: f64,
    n: f64,
}

impl PosteriorObjective<'_> {
    fn penalty(&self, kl: f64) -> f64 {
        ((kl + self.kappa + self.log_term) / (2.0 * self.n)).sqrt()
    }

    /// Surrogate risk of one drawn parameter vector, averaged over data.
    fn surrogate_risk_and_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut total = 0.0;
        let mut grad = vec![0.0; params.len()];
        for (x, &y) in self.data.features.iter().zip(&self.data.labels) {
            let (v, g) = loss_and_gradient(self.spec, params, x, y, self.loss)?;
            total += v;
            for (gi, gs) in grad.iter_mut().zip(&g) {
                *gi += gs;
            }
        }
        let n = self.data.len() as f64;
        for g in grad.iter_mut() {
            *g /= n;
        }
        Ok((total / n, grad))
    }

    /// Objective value with fixed evaluation noise (common random
    /// numbers), used by the line search.
    fn value(&self, mean: &[f64], log_var: &[f64], eval_noise: &[Vec<f64>]) -> Result<f64> {
        let mut risk = 0.0;
        for eps in eval_noise {
            let params: Vec<f64> = mean
                .iter()
                .zip(log_var)
                .zip(eps)
                .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
                .collect();
            risk += self.surrogate_risk_and_grad(&params)?.0;
        }
        risk /= eval_noise.len() as f64;
        let model = StochasticModel {
            mean: mean.to_vec(),
            variance: log_var.iter().map(|lv| lv.exp()).collect(),
        };
        let kl = gaussian_kl(&model, self.prior)?;
        Ok(risk + self.penalty(kl))
    }
}

/// Optimize the posterior ρ starting from the prior. Uses reparameterized
/// sampling for the risk term (fresh draws per step), analytic gradients
/// for the KL penalty, and a step-halving line search evaluated on a
/// fixed draw set so accepted objective values are monotone nonincreasing.
pub fn optimize_posterior(
    data: &DatasetHandle,
    spec: &ModelSpec,
    train_loss: &BoundedLoss,
    prior: &StochasticModel,
    kappa: f64,
    n: u32,
    split: &ConfidenceSplit,
    grid: GridSizes,
    budget: &PosteriorBudget,
    seed: u64,
) -> Result<StochasticModel> {
    budget.validate()?;
    prior.validate()?;
    if budget.steps == 0 {
        return Ok(prior.clone());
    }
    let dim = prior.dim();
    let nf = f64::from(n);
    let log_term = (2.0 * f64::from(grid.k1) * f64::from(grid.k2) * nf.sqrt()
        / split.log_denominator())
    .ln();
    let objective = PosteriorObjective {
        data,
        spec,
        loss: train_loss,
        prior,
        kappa,
        log_term,
        n: nf,
    };

    let mut mean = prior.mean.clone();
    let mut log_var: Vec<f64> = prior.variance.iter().map(|v| v.ln()).collect();

    // Fixed evaluation draws shared by every line-search comparison.
    let mut eval_rng = rng::stream(seed, "posterior-eval");
    let eval_noise: Vec<Vec<f64>> = (0..budget.draws_per_step.max(4))
        .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut eval_rng)).collect())
        .collect();
    let mut current = objective.value(&mean, &log_var, &eval_noise)?;
    if !current.is_finite() {
        return Err(CoreError::NonFinite("posterior objective at the prior".into()));
    }

    let mut lr = budget.learning_rate;
    for step in 0..budget.steps {
        // Stochastic gradient with fresh reparameterized draws.
        let mut step_rng = rng::indexed_stream(seed, "posterior-step", u64::from(step));
        let mut g_mean = vec![0.0; dim];
        let mut g_logvar = vec![0.0; dim];
        for _ in 0..budget.draws_per_step {
            let eps: Vec<f64> =
                (0..dim).map(|_| StandardNormal.sample(&mut step_rng)).collect();
            let std: Vec<f64> = log_var.iter().map(|lv| (0.5 * lv).exp()).collect();
            let params: Vec<f64> = mean
                .iter()
                .zip(&std)
                .zip(&eps)
                .map(|((m, s), e)| m + s * e)
                .collect();
            let (_, grad) = objective.surrogate_risk_and_grad(&params)?;
            for i in 0..dim {
                g_mean[i] += grad[i];
                // d params / d log_var = 0.5 * std * eps
                g_logvar[i] += grad[i] * 0.5 * std[i] * eps[i];
            }
        }
        let draws = f64::from(budget.draws_per_step);
        for g in g_mean.iter_mut() {
            *g /= draws;
        }
        for g in g_logvar.iter_mut() {
            *g /= draws;
        }

        // KL penalty gradient: d pen / d KL = 1 / (4 n pen).
        let model = StochasticModel {
            mean: mean.clone(),
            variance: log_var.iter().map(|lv| lv.exp()).collect(),
        };
        let kl = gaussian_kl(&model, prior)?;
        let pen = objective.penalty(kl);
        let dpen_dkl = if pen > 0.0 { 1.0 / (4.0 * nf * pen) } else { 0.0 };
        for i in 0..dim {
            let var = log_var[i].exp();
            // d KL / d mean_i and d KL / d log_var_i for diagonal Gaussians
            let dkl_dmean = (mean[i] - prior.mean[i]) / prior.variance[i];
            let dkl_dlogvar = 0.5 * (var / prior.variance[i] - 1.0);
            g_mean[i] += dpen_dkl * dkl_dmean;
            g_logvar[i] += dpen_dkl * dkl_dlogvar;
        }

        // Step-halving line search on the fixed evaluation draws.
        let mut accepted = false;
        for _ in 0..8 {
            let cand_mean: Vec<f64> =
                mean.iter().zip(&g_mean).map(|(m, g)| m - lr * g).collect();
            let cand_logvar: Vec<f64> =
                log_var.iter().zip(&g_logvar).map(|(v, g)| v - lr * g).collect();
            let cand = objective.value(&cand_mean, &cand_logvar, &eval_noise)?;
            if cand.is_finite() && cand <= current {
                mean = cand_mean;
                log_var = cand_logvar;
                current = cand;
                accepted = true;
                break;
            }
            lr *= 0.5;
        }
        if !accepted {
            break; // no descent direction at the smallest step size
        }
    }

    Ok(StochasticModel { mean, variance: log_var.iter().map(|lv| lv.exp()).collect() })
}

/// One grid cell of the sweep: a (prior mean, τ) pair with everything
/// computed for it. `error` is set and the value fields are None when a
/// sub-stage failed; failures never abort the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub prior_kind: PriorKind,
    /// Index into the recipe grid; None for the baseline mean.
    pub recipe_index: Option<usize>,
    pub tau_index: usize,
    pub tau: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<MaxInfoBound>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prior_risk: Option<RiskEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prior_certificate: Option<RiskCertificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub posterior_risk: Option<RiskEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kl_divergence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<RiskCertificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Summary row per prior kind, shaped like the usual results table:
/// prior, R̂(π), B(π), R̂(ρ), κ, KL, B(ρ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub prior: PriorKind,
    pub erisk_prior: f64,
    pub bound_prior: f64,
    pub erisk_posterior: f64,
    pub kappa: f64,
    pub kl: f64,
    pub bound_posterior: f64,
}

/// Full pipeline output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub k1: u32,
    pub k2: u32,
    pub cells: Vec<CellReport>,
    /// Index of the minimum-B cell; the union bound over all K1·K2 cells
    /// already covers this selection.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_cell: Option<usize>,
    pub table: Vec<TableRow>,
}

/// Run the full sweep. For each recipe i, κ_i is computed at failure
/// budget β/K1; each (mean, τ) cell builds the prior, optimizes the
/// posterior, Monte-Carlo-estimates both risks, and forms union-bound
/// certificates. Cell failures are recorded, not fatal.
pub fn run_pipeline(config: &PipelineConfig, data: &DatasetHandle) -> Result<PipelineReport> {
    config.validate()?;
    data.validate()?;
    let spec = &config.model;
    spec.validate()?;
    if data.feature_dim() != spec.input_dim {
        return Err(CoreError::DimensionMismatch {
            expected: spec.input_dim,
            got: data.feature_dim(),
        });
    }
    if data.num_classes() > spec.classes {
        return Err(CoreError::invalid(format!(
            "dataset has {} classes but the model only {}",
            data.num_classes(),
            spec.classes
        )));
    }
    let n = u32::try_from(data.len())
        .map_err(|_| CoreError::invalid("dataset too large for the certificate pipeline"))?;
    for rc in &config.recipes {
        if rc.dataset_size != n {
            return Err(CoreError::invalid(format!(
                "recipe dataset_size {} does not match dataset length {n}",
                rc.dataset_size
            )));
        }
    }

    let train_loss = BoundedLoss::ClampedCrossEntropy { c_max: config.train_clamp };
    let cert_loss = BoundedLoss::ZeroOne;
    let grid = GridSizes { k1: config.k1(), k2: config.k2() };
    let kappa_budget = config.split.beta / f64::from(grid.k1);

    // Prior means: every DP-SGD recipe, plus the baseline when enabled.
    enum MeanSource {
        DpSgd(usize),
        Baseline,
    }
    let mut sources: Vec<MeanSource> =
        (0..config.recipes.len()).map(MeanSource::DpSgd).collect();
    if config.data_independent_baseline {
        sources.push(MeanSource::Baseline);
    }

    let mut cells = Vec::with_capacity(sources.len() * config.tau_grid.len());
    for source in &sources {
        // kappa depends only on the recipe, not on tau
        let (prior_kind, recipe_index, kappa) = match source {
            MeanSource::DpSgd(i) => {
                let kappa = maxinfo_dpsgd_optimized(&config.recipes[*i].recipe(), kappa_budget);
                (PriorKind::DpSgd, Some(*i), kappa)
            }
            MeanSource::Baseline => {
                (PriorKind::DataIndependent, None, Ok(MaxInfoBound::trivial(kappa_budget)))
            }
        };
        for (tau_index, &tau) in config.tau_grid.iter().enumerate() {
            let mut cell = CellReport {
                prior_kind,
                recipe_index,
                tau_index,
                tau,
                kappa: None,
                prior_risk: None,
                prior_certificate: None,
                posterior_risk: None,
                kl_divergence: None,
                certificate: None,
                error: None,
            };
            let kappa = match &kappa {
                Ok(k) => k.clone(),
                Err(e) => {
                    cell.error = Some(e.to_string());
                    cells.push(cell);
                    continue;
                }
            };
            cell.kappa = Some(kappa.clone());
            let cell_label = match recipe_index {
                Some(i) => i as u64,
                None => sources.len() as u64,
            };
            let cell_seed = rng::derive_seed(
                config.seed,
                "grid-cell",
                cell_label * 1000 + tau_index as u64,
            );
            let recipe_cfg = recipe_index.map(|i| &config.recipes[i]);
            match run_cell(
                config, data, spec, &train_loss, &cert_loss, recipe_cfg, prior_kind, tau, n,
                &kappa, grid, cell_seed,
            ) {
                Ok(filled) => {
                    cell.prior_risk = filled.prior_risk;
                    cell.prior_certificate = filled.prior_certificate;
                    cell.posterior_risk = filled.posterior_risk;
                    cell.kl_divergence = filled.kl_divergence;
                    cell.certificate = filled.certificate;
                }
                Err(e) => cell.error = Some(e.to_string()),
            }
            cells.push(cell);
        }
    }

    let best_cell = cells
        .iter()
        .enumerate()
        .filter_map(|(i, c)| {
            c.certificate.as_ref().map(|cert| (i, cert.risk_upper_bound))
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i);

    // Table rows: the best cell per prior kind.
    let mut table = Vec::new();
    for kind in [PriorKind::DataIndependent, PriorKind::DpSgd] {
        let best = cells
            .iter()
            .filter(|c| c.prior_kind == kind)
            .filter(|c| c.certificate.is_some())
            .min_by(|a, b| {
                a.certificate
                    .as_ref()
                    .unwrap()
                    .risk_upper_bound
                    .total_cmp(&b.certificate.as_ref().unwrap().risk_upper_bound)
            });
        if let Some(c) = best {
            table.push(TableRow {
                prior: kind,
                erisk_prior: c.prior_risk.map(|r| r.value).unwrap_or(f64::NAN),
                bound_prior: c
                    .prior_certificate
                    .as_ref()
                    .map(|b| b.risk_upper_bound)
                    .unwrap_or(f64::NAN),
                erisk_posterior: c.posterior_risk.map(|r| r.value).unwrap_or(f64::NAN),
                kappa: c.kappa.as_ref().map(|k| k.value).unwrap_or(f64::NAN),
                kl: c.kl_divergence.unwrap_or(f64::NAN),
                bound_posterior: c
                    .certificate
                    .as_ref()
                    .map(|b| b.risk_upper_bound)
                    .unwrap_or(f64::NAN),
            });
        }
    }

    Ok(PipelineReport { k1: grid.k1, k2: grid.k2, cells, best_cell, table })
}

struct CellValues {
    prior_risk: Option<RiskEstimate>,
    prior_certificate: Option<RiskCertificate>,
    posterior_risk: Option<RiskEstimate>,
    kl_divergence: Option<f64>,
    certificate: Option<RiskCertificate>,
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    config: &PipelineConfig,
    data: &DatasetHandle,
    spec: &ModelSpec,
    train_loss: &BoundedLoss,
    cert_loss: &BoundedLoss,
    recipe: Option<&RecipeConfig>,
    prior_kind: PriorKind,
    tau: f64,
    n: u32,
    kappa: &MaxInfoBound,
    grid: GridSizes,
    cell_seed: u64,
) -> Result<CellValues> {
    let prior = match prior_kind {
        PriorKind::DpSgd => {
            let rc = recipe.expect("dp-sgd cell without recipe");
            build_prior(data, spec, train_loss, rc, tau, config.init_scale, cell_seed)?
        }
        PriorKind::DataIndependent => {
            data_independent_prior(spec, tau, config.init_scale, cell_seed)?
        }
    };

    // Prior risk and its corollary-style certificate (KL term = 0).
    let prior_risk = mc_risk_of_stochastic_model(
        spec,
        &prior,
        data,
        cert_loss,
        config.final_mc_draws,
        rng::derive_seed(cell_seed, "mc-prior", 0),
    )?;
    let prior_certificate =
        union_bound_certificate(&prior_risk, 0.0, kappa, n, &config.split, grid)?;

    let posterior = optimize_posterior(
        data,
        spec,
        train_loss,
        &prior,
        kappa.value,
        n,
        &config.split,
        grid,
        &config.posterior,
        rng::derive_seed(cell_seed, "posterior-opt", 0),
    )?;
    let kl = gaussian_kl(&posterior, &prior)?;
    let posterior_risk = mc_risk_of_stochastic_model(
        spec,
        &posterior,
        data,
        cert_loss,
        config.final_mc_draws,
        rng::derive_seed(cell_seed, "mc-posterior", 0),
    )?;
    let certificate =
        union_bound_certificate(&posterior_risk, kl, kappa, n, &config.split, grid)?;

    Ok(CellValues {
        prior_risk: Some(prior_risk),
        prior_certificate: Some(prior_certificate),
        posterior_risk: Some(posterior_risk),
        kl_divergence: Some(kl),
        certificate: Some(certificate),
    })
}
