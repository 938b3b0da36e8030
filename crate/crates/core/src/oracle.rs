//! Exact enumeration + Monte-Carlo validation of the max-information tail
//! claims.
//!
//! On a tiny finite data domain the density ratio f(S,Y) = log p(Y|S)/p(Y)
//! can be computed exactly: the marginal p(Y) is a finite mixture over all
//! |domain|^n candidate datasets. Sampling (S,Y) from the true joint
//! process and counting how often f exceeds a bound κ then checks the
//! claim P{f ≥ κ} ≤ β directly — the ≤ direction is the only checkable
//! one, since the bounds are inequalities, not equalities.
//!
//! All density work happens in log space with max-shifted log-sum-exp;
//! small σ with large |y| would underflow raw densities.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    maxinfo_dpsgd_optimized, maxinfo_gaussian_mechanism, BoundMethod, MaxInfoBound,
    TrainingRecipe,
};
use crate::dpsgd::create_batches;
use crate::error::CoreError;
use crate::{rng, Result};

/// Enumeration feasibility cap: |domain|^n must stay within 2^20.
const MAX_ENUMERATION: u64 = 1 << 20;

/// Per-sample statistic φ(x; θ) of an instance. Everything is scalar
/// (d = 1); that keeps exact enumeration cheap while still exercising the
/// θ-dependence of the DP-SGD chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    /// φ(x; θ) = clip(x): the raw sample value, clipped to ‖φ‖ ≤ ζ.
    Identity,
    /// φ(x; θ) = clip(θ − x): the clipped gradient of the squared loss
    /// (θ − x)²/2, the natural 1-D analogue of a DP-SGD step.
    Residual,
    /// φ ≡ 0: pure noise, f ≡ 0.
    Zero,
}

/// Which release process the instance models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    /// One Gaussian release of Σ_i φ(x_i) + σz over the whole dataset.
    SingleShot,
    /// A T-step (per epoch) DP-SGD chain with disjoint batches of size m.
    DpsgdChain,
}

/// A finite instance small enough for exact marginal densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TinyInstance {
    pub mechanism: Mechanism,
    /// The finite sample domain (scalar values).
    pub domain: Vec<f64>,
    /// Sampling distribution over the domain; uniform when omitted.
    #[serde(default)]
    pub probs: Option<Vec<f64>>,
    /// Dataset size n.
    pub n: u32,
    pub zeta: f64,
    pub sigma: f64,
    pub statistic: StatisticKind,
    /// Sensitivity fed to the single-shot bound; defaults to ζ, the
    /// per-sample norm bound.
    #[serde(default)]
    pub sensitivity: Option<f64>,
    /// Chain parameters (required for `dpsgd_chain`).
    #[serde(default)]
    pub batch_size: Option<u32>,
    #[serde(default)]
    pub steps_per_epoch: Option<u32>,
    #[serde(default)]
    pub epochs: Option<u32>,
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub theta0: Option<f64>,
}

impl TinyInstance {
    pub fn validate(&self) -> Result<()> {
        if self.domain.is_empty() {
            return Err(CoreError::invalid("domain must be non-empty"));
        }
        if self.domain.iter().any(|x| !x.is_finite()) {
            return Err(CoreError::invalid("domain values must be finite"));
        }
        if self.n == 0 {
            return Err(CoreError::invalid("n must be >= 1"));
        }
        if !(self.zeta > 0.0) || !(self.sigma > 0.0) {
            return Err(CoreError::invalid("zeta and sigma must be > 0"));
        }
        if let Some(p) = &self.probs {
            if p.len() != self.domain.len() {
                return Err(CoreError::invalid("probs length must match domain"));
            }
            if p.iter().any(|x| !(*x > 0.0)) {
                return Err(CoreError::invalid("probs must be positive"));
            }
            let total: f64 = p.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(CoreError::invalid("probs must sum to 1"));
            }
        }
        let count = (self.domain.len() as u64)
            .checked_pow(self.n)
            .filter(|c| *c <= MAX_ENUMERATION)
            .ok_or_else(|| {
                CoreError::Infeasible(format!(
                    "|domain|^n = {}^{} exceeds the 2^20 enumeration cap",
                    self.domain.len(),
                    self.n
                ))
            })?;
        let _ = count;
        match self.mechanism {
            Mechanism::SingleShot => Ok(()),
            Mechanism::DpsgdChain => {
                let m = self.batch_size.ok_or_else(|| {
                    CoreError::invalid("dpsgd_chain needs batch_size")
                })?;
                let t = self.steps_per_epoch.ok_or_else(|| {
                    CoreError::invalid("dpsgd_chain needs steps_per_epoch")
                })?;
                let e = self.epochs.unwrap_or(1);
                if m == 0 || t == 0 || e == 0 {
                    return Err(CoreError::invalid("chain sizes must be >= 1"));
                }
                if u64::from(m) * u64::from(t) > u64::from(self.n) {
                    return Err(CoreError::invalid("chain needs T*m <= n"));
                }
                if self.learning_rate.map_or(false, |lr| !(lr > 0.0) || !lr.is_finite()) {
                    return Err(CoreError::invalid("learning rate must be finite and > 0"));
                }
                Ok(())
            }
        }
    }

    fn log_probs(&self) -> Vec<f64> {
        match &self.probs {
            Some(p) => p.iter().map(|x| x.ln()).collect(),
            None => {
                let lp = -(self.domain.len() as f64).ln();
                vec![lp; self.domain.len()]
            }
        }
    }

    fn phi(&self, x: f64, theta: f64) -> f64 {
        let raw = match self.statistic {
            StatisticKind::Identity => x,
            StatisticKind::Residual => theta - x,
            StatisticKind::Zero => 0.0,
        };
        let a = raw.abs();
        if a <= self.zeta {
            raw
        } else {
            raw * (self.zeta / a)
        }
    }

    /// The recipe matching a chain instance, for the Theorem-3.1 bound.
    pub fn chain_recipe(&self) -> Result<TrainingRecipe> {
        if self.mechanism != Mechanism::DpsgdChain {
            return Err(CoreError::invalid("not a dpsgd_chain instance"));
        }
        Ok(TrainingRecipe {
            epochs: self.epochs.unwrap_or(1),
            steps_per_epoch: self.steps_per_epoch.unwrap(),
            batch_size: self.batch_size.unwrap(),
            clip_threshold: self.zeta,
            noise_scale: self.sigma,
            dataset_size: self.n,
        })
    }

    /// Enumerate all |domain|^n datasets with their log probabilities.
    fn enumerate_datasets(&self) -> Enumeration {
        let k = self.domain.len();
        let n = self.n as usize;
        let log_p = self.log_probs();
        let total = k.pow(self.n);
        let mut datasets = Vec::with_capacity(total);
        let mut log_weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; n];
        'outer: loop {
            let data: Vec<f64> = idx.iter().map(|&i| self.domain[i]).collect();
            let lw: f64 = idx.iter().map(|&i| log_p[i]).sum();
            datasets.push(data);
            log_weights.push(lw);
            // odometer increment
            let mut pos = 0usize;
            loop {
                if pos == n {
                    break 'outer;
                }
                idx[pos] += 1;
                if idx[pos] < k {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
        }
        Enumeration { datasets, log_weights }
    }
}

/// All candidate datasets with their log sampling probabilities, computed
/// once and reused across trials.
struct Enumeration {
    datasets: Vec<Vec<f64>>,
    log_weights: Vec<f64>,
}

fn log_normal_density(y: f64, mean: f64, sigma: f64) -> f64 {
    let z = (y - mean) / sigma;
    -0.5 * (2.0 * std::f64::consts::PI).ln() - sigma.ln() - 0.5 * z * z
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// A fully observed release: the batch index sets actually used and the
/// released update values u_1..u_T (a single u for the single-shot case).
#[derive(Debug, Clone)]
pub struct Release {
    pub batches: Vec<Vec<usize>>,
    pub updates: Vec<f64>,
    pub theta0: f64,
}

/// Exact log marginal density log p(y) = log Σ_{S'} P(S')·p(y|S'), with
/// the chain replayed per candidate dataset. The parameter trajectory is a
/// deterministic function of the released updates alone, so it is shared
/// across candidates.
pub fn exact_marginal_log_density(instance: &TinyInstance, release: &Release) -> Result<f64> {
    instance.validate()?;
    let enumeration = instance.enumerate_datasets();
    let thetas = replay_thetas(instance, release);
    Ok(marginal_from_enumeration(instance, release, &enumeration, &thetas))
}

fn marginal_from_enumeration(
    instance: &TinyInstance,
    release: &Release,
    enumeration: &Enumeration,
    thetas: &[f64],
) -> f64 {
    let logs: Vec<f64> = enumeration
        .datasets
        .iter()
        .zip(&enumeration.log_weights)
        .map(|(data, lw)| lw + conditional_log_density(instance, release, data, thetas))
        .collect();
    log_sum_exp(&logs)
}

/// Exact marginal density p(y); prefer the log form for any arithmetic.
pub fn exact_marginal_density(instance: &TinyInstance, release: &Release) -> Result<f64> {
    Ok(exact_marginal_log_density(instance, release)?.exp())
}

/// The parameter value before each step, as replayed from the released
/// updates (θ_{t} = θ_{t−1} − η·u_t for the chain; trivial otherwise).
fn replay_thetas(instance: &TinyInstance, release: &Release) -> Vec<f64> {
    match instance.mechanism {
        Mechanism::SingleShot => vec![release.theta0],
        Mechanism::DpsgdChain => {
            let eta = instance.learning_rate.unwrap_or(0.25);
            let mut thetas = Vec::with_capacity(release.updates.len());
            let mut theta = release.theta0;
            for u in &release.updates {
                thetas.push(theta);
                theta -= eta * u;
            }
            thetas
        }
    }
}

/// log p(y|S) for one candidate dataset, given the shared θ trajectory.
fn conditional_log_density(
    instance: &TinyInstance,
    release: &Release,
    data: &[f64],
    thetas: &[f64],
) -> f64 {
    release
        .updates
        .iter()
        .enumerate()
        .map(|(t, u)| {
            let theta = thetas[t.min(thetas.len() - 1)];
            let psi: f64 = release.batches[t].iter().map(|&i| instance.phi(data[i], theta)).sum();
            log_normal_density(*u, psi, instance.sigma)
        })
        .sum()
}

/// One sampled (S, Y) with its exactly computed f(S,Y).
fn sample_f(
    instance: &TinyInstance,
    enumeration: &Enumeration,
    trial_seed: u64,
    seed: u64,
) -> Result<f64> {
    let mut gen = rng::indexed_stream(seed, "oracle-trial", trial_seed);
    let log_p = instance.log_probs();
    let cum: Vec<f64> = {
        let mut acc = 0.0;
        log_p
            .iter()
            .map(|lp| {
                acc += lp.exp();
                acc
            })
            .collect()
    };
    let n = instance.n as usize;
    let data: Vec<f64> = (0..n)
        .map(|_| {
            let r: f64 = gen.random();
            let idx = cum.iter().position(|c| r <= *c).unwrap_or(cum.len() - 1);
            instance.domain[idx]
        })
        .collect();

    let release = match instance.mechanism {
        Mechanism::SingleShot => {
            let theta0 = instance.theta0.unwrap_or(0.0);
            let psi: f64 = data.iter().map(|&x| instance.phi(x, theta0)).sum();
            let z: f64 = StandardNormal.sample(&mut gen);
            Release {
                batches: vec![(0..n).collect()],
                updates: vec![psi + instance.sigma * z],
                theta0,
            }
        }
        Mechanism::DpsgdChain => {
            let m = instance.batch_size.unwrap();
            let t = instance.steps_per_epoch.unwrap();
            let epochs = instance.epochs.unwrap_or(1);
            let eta = instance.learning_rate.unwrap_or(0.25);
            let theta0 = instance.theta0.unwrap_or(0.0);
            let mut batches = Vec::with_capacity((epochs * t) as usize);
            let mut updates = Vec::with_capacity((epochs * t) as usize);
            let mut theta = theta0;
            for e in 0..epochs {
                let plan_seed = gen.random::<u64>() ^ u64::from(e);
                let plan = create_batches(instance.n, m, t, plan_seed)?;
                for batch in plan.batches {
                    let psi: f64 = batch.iter().map(|&i| instance.phi(data[i], theta)).sum();
                    let z: f64 = StandardNormal.sample(&mut gen);
                    let u = psi + instance.sigma * z;
                    theta -= eta * u;
                    batches.push(batch);
                    updates.push(u);
                }
            }
            Release { batches, updates, theta0 }
        }
    };

    let thetas = replay_thetas(instance, &release);
    let log_conditional = conditional_log_density(instance, &release, &data, &thetas);
    let log_marginal = marginal_from_enumeration(instance, &release, enumeration, &thetas);
    Ok(log_conditional - log_marginal)
}

/// Empirical tail estimate of P{f ≥ κ} from seeded trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub threshold: f64,
    pub trials: u64,
    pub exceed_count: u64,
    /// Fraction of trials with f ≥ threshold.
    pub tail: f64,
    /// 3-sigma binomial radius around the tail estimate.
    pub radius: f64,
    /// Mean of e^f over the trials; its log must be ≥ 0 up to MC error.
    pub mean_exp_f: f64,
    /// 3-sigma Monte-Carlo radius of `mean_exp_f`.
    pub mean_exp_f_radius: f64,
    pub max_f: f64,
}

/// Sample (S,Y) pairs, compute f exactly per trial, and report the
/// empirical tail beyond `threshold` with a 3-sigma binomial radius.
/// Trials use derived per-index substreams: the result is deterministic
/// for a seed and independent of worker count.
pub fn sample_f_tail(
    instance: &TinyInstance,
    trials: u64,
    threshold: f64,
    seed: u64,
) -> Result<TailEstimate> {
    instance.validate()?;
    if trials == 0 {
        return Err(CoreError::invalid("trials must be >= 1"));
    }
    let enumeration = instance.enumerate_datasets();
    let fs: Result<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|k| sample_f(instance, &enumeration, k, seed))
        .collect();
    let fs = fs?;
    let exceed_count = fs.iter().filter(|f| **f >= threshold).count() as u64;
    let tail = exceed_count as f64 / trials as f64;
    let radius = 3.0 * (tail * (1.0 - tail) / trials as f64).sqrt();
    let exps: Vec<f64> = fs.iter().map(|f| f.exp()).collect();
    let mean_exp_f = exps.iter().sum::<f64>() / trials as f64;
    let var = exps.iter().map(|e| (e - mean_exp_f) * (e - mean_exp_f)).sum::<f64>()
        / trials as f64;
    let mean_exp_f_radius = 3.0 * (var / trials as f64).sqrt();
    let max_f = fs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(TailEstimate {
        threshold,
        trials,
        exceed_count,
        tail,
        radius,
        mean_exp_f,
        mean_exp_f_radius,
        max_f,
    })
}

/// Outcome of validating one bound method against one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub method: BoundMethod,
    pub beta: f64,
    pub kappa: MaxInfoBound,
    /// The threshold actually tested (κ scaled by `threshold_scale`).
    pub threshold: f64,
    pub threshold_scale: f64,
    pub estimate: TailEstimate,
    /// true iff tail ≤ β + radius.
    pub passed: bool,
}

/// Compute κ with the bound method matched to the instance, sample the
/// tail at κ·threshold_scale, and pass iff the empirical tail stays within
/// β + radius. A scale below 1 deliberately tests an invalid threshold and
/// is expected to fail on informative instances.
pub fn validate_bound(
    instance: &TinyInstance,
    method: BoundMethod,
    beta: f64,
    trials: u64,
    seed: u64,
    threshold_scale: f64,
) -> Result<ValidationReport> {
    instance.validate()?;
    if !(threshold_scale > 0.0) || !threshold_scale.is_finite() {
        return Err(CoreError::invalid("threshold scale must be finite and > 0"));
    }
    let kappa = match (instance.mechanism, method) {
        (Mechanism::SingleShot, BoundMethod::GaussianSingle) => {
            let s = instance.sensitivity.unwrap_or(instance.zeta);
            maxinfo_gaussian_mechanism(instance.n, s, instance.sigma, beta)?
        }
        (Mechanism::DpsgdChain, BoundMethod::Optimized) => {
            maxinfo_dpsgd_optimized(&instance.chain_recipe()?, beta)?
        }
        (mech, method) => {
            return Err(CoreError::invalid(format!(
                "bound method {method:?} does not match mechanism {mech:?}"
            )));
        }
    };
    let threshold = kappa.value * threshold_scale;
    let estimate = sample_f_tail(instance, trials, threshold, seed)?;
    let passed = estimate.tail <= beta + estimate.radius;
    Ok(ValidationReport {
        method,
        beta,
        kappa,
        threshold,
        threshold_scale,
        estimate,
        passed,
    })
}
