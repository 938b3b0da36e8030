//! The DP-SGD training engine: per-sample clipping, disjoint fixed-size
//! batches, Gaussian noising of the summed clipped gradients, and the
//! update-rule variants (plain, momentum + weight decay, Adam-style).
//!
//! Two points are easy to get wrong and are pinned here:
//!
//! - Gradients are aggregated as a SUM, not a mean; learning rates must be
//!   scaled accordingly (the CLI help repeats this).
//! - Noise is added once per batch to the summed clipped gradients, not
//!   per sample.
//!
//! A run is deterministic given (θ₀, seed, recipe, data): shuffling and
//! noise use separate labeled substreams of the run seed.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bounds::TrainingRecipe;
use crate::error::CoreError;
use crate::{rng, Result};

/// Rescale `g` to norm at most ζ: g·min(1, ζ/‖g‖₂). The zero vector maps
/// to itself.
pub fn clip(g: &[f64], zeta: f64) -> Result<Vec<f64>> {
    if !(zeta > 0.0) {
        return Err(CoreError::invalid("clip threshold must be > 0"));
    }
    if g.iter().any(|x| !x.is_finite()) {
        return Err(CoreError::invalid("gradient has non-finite components"));
    }
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= zeta {
        Ok(g.to_vec())
    } else {
        let scale = zeta / norm;
        Ok(g.iter().map(|x| x * scale).collect())
    }
}

/// Index sets of the disjoint batches of one epoch. Construction never
/// looks at data values, only at the dataset size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub batches: Vec<Vec<usize>>,
    pub epoch_seed: u64,
}

/// Shuffle [0, n) with the seeded generator and split the first T·m
/// indices into T consecutive blocks of m.
pub fn create_batches(n: u32, m: u32, steps: u32, seed: u64) -> Result<BatchPlan> {
    let need = u64::from(m) * u64::from(steps);
    if need > u64::from(n) {
        return Err(CoreError::invalid(format!(
            "T*m = {need} exceeds dataset size {n}"
        )));
    }
    let mut indices: Vec<usize> = (0..n as usize).collect();
    let mut gen = rng::stream(seed, "batch-shuffle");
    indices.shuffle(&mut gen);
    let m = m as usize;
    let batches = (0..steps as usize)
        .map(|t| indices[t * m..(t + 1) * m].to_vec())
        .collect();
    Ok(BatchPlan { batches, epoch_seed: seed })
}

/// Which parameter-update rule combines the privatized update vectors.
/// All variants depend on the data only through the update vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UpdateKind {
    Plain,
    MomentumWd { momentum: f64, weight_decay: f64 },
    AdamLike { beta1: f64, beta2: f64, epsilon: f64 },
}

impl UpdateKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            UpdateKind::Plain => Ok(()),
            UpdateKind::MomentumWd { momentum, weight_decay } => {
                if !(0.0..1.0).contains(&momentum) {
                    return Err(CoreError::invalid("momentum must lie in [0,1)"));
                }
                if !(0.0..1.0).contains(&weight_decay) {
                    return Err(CoreError::invalid("weight decay must lie in [0,1)"));
                }
                Ok(())
            }
            UpdateKind::AdamLike { beta1, beta2, epsilon } => {
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
                    return Err(CoreError::invalid("beta1 and beta2 must lie in [0,1)"));
                }
                if !(epsilon > 0.0) {
                    return Err(CoreError::invalid("adam epsilon must be > 0"));
                }
                Ok(())
            }
        }
    }
}

/// Per-epoch learning-rate schedule: a constant, or one rate per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LearningRates {
    Constant(f64),
    PerStep(Vec<f64>),
}

impl LearningRates {
    pub fn validate(&self, steps: u32) -> Result<()> {
        match self {
            LearningRates::Constant(eta) => {
                if !(*eta > 0.0) || !eta.is_finite() {
                    return Err(CoreError::invalid("learning rate must be finite and > 0"));
                }
            }
            LearningRates::PerStep(etas) => {
                if etas.len() != steps as usize {
                    return Err(CoreError::invalid(format!(
                        "schedule has {} rates, expected {steps}",
                        etas.len()
                    )));
                }
                if etas.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
                    return Err(CoreError::invalid("learning rates must be finite and > 0"));
                }
            }
        }
        Ok(())
    }

    /// Rate for within-epoch step `t` (0-based).
    pub fn at(&self, t: usize) -> f64 {
        match self {
            LearningRates::Constant(eta) => *eta,
            LearningRates::PerStep(etas) => etas[t],
        }
    }
}

/// Update rule: the combination kind plus the learning-rate schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRule {
    #[serde(flatten)]
    pub kind: UpdateKind,
    pub learning_rates: LearningRates,
}

impl UpdateRule {
    pub fn plain(eta: f64) -> Self {
        UpdateRule { kind: UpdateKind::Plain, learning_rates: LearningRates::Constant(eta) }
    }
}

/// Mutable optimizer state carried across steps (and across epochs; only
/// θ₀ is reset between epochs). Initialized to zeros.
#[derive(Debug, Clone)]
pub struct UpdateState {
    momentum: Vec<f64>,
    second_moment: Vec<f64>,
    step: u32,
}

impl UpdateState {
    pub fn new(dim: usize) -> Self {
        UpdateState { momentum: vec![0.0; dim], second_moment: vec![0.0; dim], step: 0 }
    }
}

/// One parameter update: θ_t = rule(θ_{t−1}, u_t, η_t, state).
///
/// plain:        θ ← θ − η·u
/// momentum_wd:  m ← β₁m + (1−β₁)u;  θ ← (1−α)θ − η·m
/// adam_like:    m, v as usual with component-wise u²; bias-corrected
///               m̂, v̂; θ ← θ − η·m̂/(√v̂ + ε)
pub fn gradient_update(
    kind: &UpdateKind,
    state: &mut UpdateState,
    theta: &mut [f64],
    update: &[f64],
    eta: f64,
) -> Result<()> {
    if theta.len() != update.len() {
        return Err(CoreError::DimensionMismatch { expected: theta.len(), got: update.len() });
    }
    state.step += 1;
    match *kind {
        UpdateKind::Plain => {
            for (th, u) in theta.iter_mut().zip(update) {
                *th -= eta * u;
            }
        }
        UpdateKind::MomentumWd { momentum, weight_decay } => {
            for i in 0..theta.len() {
                state.momentum[i] = momentum * state.momentum[i] + (1.0 - momentum) * update[i];
                theta[i] = (1.0 - weight_decay) * theta[i] - eta * state.momentum[i];
            }
        }
        UpdateKind::AdamLike { beta1, beta2, epsilon } => {
            let t = i32::try_from(state.step).unwrap_or(i32::MAX);
            let bc1 = 1.0 - beta1.powi(t);
            let bc2 = 1.0 - beta2.powi(t);
            for i in 0..theta.len() {
                state.momentum[i] = beta1 * state.momentum[i] + (1.0 - beta1) * update[i];
                state.second_moment[i] =
                    beta2 * state.second_moment[i] + (1.0 - beta2) * update[i] * update[i];
                let m_hat = state.momentum[i] / bc1;
                let v_hat = state.second_moment[i] / bc2;
                theta[i] -= eta * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
    }
    Ok(())
}

/// What the streaming trainer yields after every step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub epoch: u32,
    /// Within-epoch step, 0-based.
    pub step: u32,
    pub params: Vec<f64>,
    pub update: Vec<f64>,
    pub noise: Vec<f64>,
}

/// Full record of a training run; reproducible bit-exactly from
/// (θ₀, seed, recipe, data).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    pub theta0: Vec<f64>,
    pub params: Vec<Vec<f64>>,
    pub updates: Vec<Vec<f64>>,
    pub noise: Vec<Vec<f64>>,
    pub plans: Vec<BatchPlan>,
    pub rng_seed: u64,
}

impl TrainTrace {
    pub fn final_params(&self) -> &[f64] {
        self.params.last().map(Vec::as_slice).unwrap_or(&self.theta0)
    }
}

/// The streaming DP-SGD loop as an iterator. Each epoch draws a fresh
/// batch plan; each step computes u_t = Σ_{i∈I_t} clip(∇ℓ(x_i, θ_{t−1}), ζ)
/// + σ·z and applies the update rule; θ_T of one epoch is θ₀ of the next.
pub struct DpSgdStream<'a, F> {
    recipe: TrainingRecipe,
    rule: &'a UpdateRule,
    grad_fn: F,
    theta: Vec<f64>,
    state: UpdateState,
    noise_rng: rand_chacha::ChaCha12Rng,
    seed: u64,
    plan: BatchPlan,
    epoch: u32,
    step: u32,
    failed: bool,
    /// Plans drawn so far, for trace assembly.
    pub plans: Vec<BatchPlan>,
}

/// Start a streaming DP-SGD run. `grad_fn(params, index)` must return the
/// per-sample gradient of the training loss at `params` for sample
/// `index`; failures propagate to the caller.
pub fn dpsgd_stream<'a, F>(
    recipe: &TrainingRecipe,
    rule: &'a UpdateRule,
    grad_fn: F,
    theta0: Vec<f64>,
    seed: u64,
) -> Result<DpSgdStream<'a, F>>
where
    F: FnMut(&[f64], usize) -> Result<Vec<f64>>,
{
    recipe.validate()?;
    rule.kind.validate()?;
    rule.learning_rates.validate(recipe.steps_per_epoch)?;
    if theta0.is_empty() {
        return Err(CoreError::invalid("theta0 must be non-empty"));
    }
    let dim = theta0.len();
    let plan = create_batches(
        recipe.dataset_size,
        recipe.batch_size,
        recipe.steps_per_epoch,
        rng::derive_seed(seed, "epoch-batches", 0),
    )?;
    Ok(DpSgdStream {
        recipe: *recipe,
        rule,
        grad_fn,
        theta: theta0,
        state: UpdateState::new(dim),
        noise_rng: rng::stream(seed, "gaussian-noise"),
        seed,
        plans: vec![plan.clone()],
        plan,
        epoch: 0,
        step: 0,
        failed: false,
    })
}

// Streaming and batch usage share this lifetime-free rule reference; the
// rule is cheap to clone but never mutated.
impl<F> Iterator for DpSgdStream<'_, F>
where
    F: FnMut(&[f64], usize) -> Result<Vec<f64>>,
{
    type Item = Result<StepRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed || self.epoch >= self.recipe.epochs {
            return None;
        }
        let result = self.advance();
        if result.is_err() {
            self.failed = true;
        }
        Some(result)
    }
}

impl<F> DpSgdStream<'_, F>
where
    F: FnMut(&[f64], usize) -> Result<Vec<f64>>,
{
    fn advance(&mut self) -> Result<StepRecord> {
        let dim = self.theta.len();
        let zeta = self.recipe.clip_threshold;

        let mut update = vec![0.0; dim];
        for &i in &self.plan.batches[self.step as usize] {
            let grad = (self.grad_fn)(&self.theta, i)?;
            if grad.len() != dim {
                return Err(CoreError::DimensionMismatch { expected: dim, got: grad.len() });
            }
            let clipped = if zeta == 0.0 { vec![0.0; dim] } else { clip(&grad, zeta)? };
            for (u, c) in update.iter_mut().zip(&clipped) {
                *u += c;
            }
        }
        let mut noise = vec![0.0; dim];
        for z in noise.iter_mut() {
            *z = StandardNormal.sample(&mut self.noise_rng);
        }
        for (u, z) in update.iter_mut().zip(&noise) {
            *u += self.recipe.noise_scale * z;
        }

        let eta = self.rule.learning_rates.at(self.step as usize);
        gradient_update(&self.rule.kind, &mut self.state, &mut self.theta, &update, eta)?;
        if self.theta.iter().any(|x| !x.is_finite()) {
            return Err(CoreError::NonFinite(format!(
                "parameters diverged at epoch {}, step {}",
                self.epoch, self.step
            )));
        }

        let record = StepRecord {
            epoch: self.epoch,
            step: self.step,
            params: self.theta.clone(),
            update,
            noise,
        };

        self.step += 1;
        if self.step == self.recipe.steps_per_epoch {
            self.step = 0;
            self.epoch += 1;
            if self.epoch < self.recipe.epochs {
                self.plan = create_batches(
                    self.recipe.dataset_size,
                    self.recipe.batch_size,
                    self.recipe.steps_per_epoch,
                    rng::derive_seed(self.seed, "epoch-batches", u64::from(self.epoch)),
                )?;
                self.plans.push(self.plan.clone());
            }
        }
        Ok(record)
    }
}

/// Run the stream to completion and collect the full trace.
pub fn dpsgd_trace<F>(
    recipe: &TrainingRecipe,
    rule: &UpdateRule,
    grad_fn: F,
    theta0: Vec<f64>,
    seed: u64,
) -> Result<TrainTrace>
where
    F: FnMut(&[f64], usize) -> Result<Vec<f64>>,
{
    let t0 = theta0.clone();
    let mut stream = dpsgd_stream(recipe, rule, grad_fn, theta0, seed)?;
    let total = recipe.epochs as usize * recipe.steps_per_epoch as usize;
    let mut params = Vec::with_capacity(total);
    let mut updates = Vec::with_capacity(total);
    let mut noise = Vec::with_capacity(total);
    for record in stream.by_ref() {
        let record = record?;
        params.push(record.params);
        updates.push(record.update);
        noise.push(record.noise);
    }
    Ok(TrainTrace { theta0: t0, params, updates, noise, plans: stream.plans, rng_seed: seed })
}

/// Batch DP-SGD: run the stream and keep only the final parameters.
pub fn dpsgd_batch<F>(
    recipe: &TrainingRecipe,
    rule: &UpdateRule,
    grad_fn: F,
    theta0: Vec<f64>,
    seed: u64,
) -> Result<Vec<f64>>
where
    F: FnMut(&[f64], usize) -> Result<Vec<f64>>,
{
    let mut last = theta0.clone();
    for record in dpsgd_stream(recipe, rule, grad_fn, theta0, seed)? {
        last = record?.params;
    }
    Ok(last)
}
