//! Tiny differentiable classifiers with hand-written gradients and
//! bounded losses.
//!
//! Certificates are issued for the zero-one loss (bounded in [0,1] by
//! definition); training uses a clamped, rescaled cross-entropy surrogate
//! min(CE, c_max)/c_max, whose gradient is the exact gradient of the
//! clamped expression (identically zero beyond the clamp). The zero-one
//! loss has no usable gradient and is evaluation-only.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::DatasetHandle;
use crate::error::CoreError;
use crate::pac_bayes::{RiskEstimate, RiskKind, StochasticModel};
use crate::{rng, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    LinearSoftmax,
    Mlp,
}

/// Model shape. `hidden` is ignored for the linear model; the MLP uses
/// ReLU activations between the hidden layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub input_dim: usize,
    #[serde(default)]
    pub hidden: Vec<usize>,
    pub classes: usize,
}

impl ModelSpec {
    pub fn linear(input_dim: usize, classes: usize) -> Self {
        ModelSpec { architecture: Architecture::LinearSoftmax, input_dim, hidden: vec![], classes }
    }

    pub fn mlp(input_dim: usize, hidden: Vec<usize>, classes: usize) -> Self {
        ModelSpec { architecture: Architecture::Mlp, input_dim, hidden, classes }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.classes < 2 {
            return Err(CoreError::invalid("need input_dim >= 1 and classes >= 2"));
        }
        if self.architecture == Architecture::Mlp
            && (self.hidden.is_empty() || self.hidden.iter().any(|h| *h == 0))
        {
            return Err(CoreError::invalid("mlp needs non-empty, positive hidden widths"));
        }
        Ok(())
    }

    /// Layer widths including input and output.
    fn layer_sizes(&self) -> Vec<usize> {
        match self.architecture {
            Architecture::LinearSoftmax => vec![self.input_dim, self.classes],
            Architecture::Mlp => {
                let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
                sizes.push(self.input_dim);
                sizes.extend_from_slice(&self.hidden);
                sizes.push(self.classes);
                sizes
            }
        }
    }

    /// Exact parameter count: per layer a row-major weight matrix followed
    /// by a bias vector.
    pub fn param_dim(&self) -> usize {
        self.layer_sizes().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Seeded uniform(−a, a) initialization; by default a = 1/sqrt(fan_in)
    /// per layer, overridable with a single global scale.
    pub fn init_params(&self, seed: u64, scale: Option<f64>) -> Vec<f64> {
        let mut gen = rng::stream(seed, "param-init");
        let mut params = Vec::with_capacity(self.param_dim());
        for w in self.layer_sizes().windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let a = scale.unwrap_or(1.0 / (fan_in as f64).sqrt());
            for _ in 0..(fan_in * fan_out + fan_out) {
                params.push(gen.random_range(-a..a));
            }
        }
        params
    }
}

/// Loss functions mapping into [0,1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundedLoss {
    ZeroOne,
    ClampedCrossEntropy { c_max: f64 },
}

impl BoundedLoss {
    pub fn validate(&self) -> Result<()> {
        if let BoundedLoss::ClampedCrossEntropy { c_max } = self {
            if !(*c_max > 0.0) || !c_max.is_finite() {
                return Err(CoreError::invalid("c_max must be finite and > 0"));
            }
        }
        Ok(())
    }
}

/// Forward pass producing logits, retaining hidden activations for
/// backprop.
struct Forward {
    logits: Vec<f64>,
    /// Activations per layer, index 0 is the input.
    activations: Vec<Vec<f64>>,
}

fn forward(spec: &ModelSpec, params: &[f64], x: &[f64]) -> Result<Forward> {
    if params.len() != spec.param_dim() {
        return Err(CoreError::DimensionMismatch { expected: spec.param_dim(), got: params.len() });
    }
    if x.len() != spec.input_dim {
        return Err(CoreError::DimensionMismatch { expected: spec.input_dim, got: x.len() });
    }
    let sizes = spec.layer_sizes();
    let mut activations = vec![x.to_vec()];
    let mut offset = 0usize;
    for (l, w) in sizes.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let weights = &params[offset..offset + fan_in * fan_out];
        let biases = &params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        offset += fan_in * fan_out + fan_out;
        let input = activations.last().unwrap();
        let mut z = vec![0.0f64; fan_out];
        for (j, zj) in z.iter_mut().enumerate() {
            let row = &weights[j * fan_in..(j + 1) * fan_in];
            *zj = biases[j] + row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>();
        }
        let last = l + 2 == sizes.len();
        if !last {
            for zj in z.iter_mut() {
                *zj = zj.max(0.0);
            }
        }
        activations.push(z);
    }
    let logits = activations.last().unwrap().clone();
    Ok(Forward { logits, activations })
}

fn softmax_log_probs(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - log_z).collect()
}

fn check_label(spec: &ModelSpec, label: usize) -> Result<()> {
    if label >= spec.classes {
        return Err(CoreError::invalid(format!(
            "label {label} out of range for {} classes",
            spec.classes
        )));
    }
    Ok(())
}

/// Loss of a single sample, for either loss kind.
pub fn loss_value(
    spec: &ModelSpec,
    params: &[f64],
    x: &[f64],
    label: usize,
    loss: &BoundedLoss,
) -> Result<f64> {
    spec.validate()?;
    loss.validate()?;
    check_label(spec, label)?;
    let fwd = forward(spec, params, x)?;
    match loss {
        BoundedLoss::ZeroOne => {
            let pred = argmax(&fwd.logits);
            Ok(if pred == label { 0.0 } else { 1.0 })
        }
        BoundedLoss::ClampedCrossEntropy { c_max } => {
            let ce = -softmax_log_probs(&fwd.logits)[label];
            Ok(ce.min(*c_max) / c_max)
        }
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Loss and its exact analytic gradient for the training surrogate.
/// The zero-one loss is rejected here: it has no gradient.
pub fn loss_and_gradient(
    spec: &ModelSpec,
    params: &[f64],
    x: &[f64],
    label: usize,
    loss: &BoundedLoss,
) -> Result<(f64, Vec<f64>)> {
    spec.validate()?;
    loss.validate()?;
    check_label(spec, label)?;
    let c_max = match loss {
        BoundedLoss::ZeroOne => {
            return Err(CoreError::NonDifferentiableLoss("zero_one".into()));
        }
        BoundedLoss::ClampedCrossEntropy { c_max } => *c_max,
    };

    let fwd = forward(spec, params, x)?;
    let log_probs = softmax_log_probs(&fwd.logits);
    let ce = -log_probs[label];
    let value = ce.min(c_max) / c_max;
    if ce >= c_max {
        // beyond the clamp the surrogate is constant
        return Ok((value, vec![0.0; spec.param_dim()]));
    }

    // dCE/dz = softmax(z) - e_label, rescaled by 1/c_max.
    let mut delta: Vec<f64> = log_probs.iter().map(|lp| lp.exp() / c_max).collect();
    delta[label] -= 1.0 / c_max;

    let sizes = spec.layer_sizes();
    // Per-layer parameter offsets.
    let mut offsets = Vec::with_capacity(sizes.len() - 1);
    let mut off = 0usize;
    for w in sizes.windows(2) {
        offsets.push(off);
        off += w[0] * w[1] + w[1];
    }

    let mut grad = vec![0.0f64; spec.param_dim()];
    let mut upstream = delta;
    for (l, w) in sizes.windows(2).enumerate().rev() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let offset = offsets[l];
        let input = &fwd.activations[l];
        let weights = &params[offset..offset + fan_in * fan_out];
        for j in 0..fan_out {
            let d = upstream[j];
            let row = &mut grad[offset + j * fan_in..offset + (j + 1) * fan_in];
            for (g, a) in row.iter_mut().zip(input) {
                *g = d * a;
            }
            grad[offset + fan_in * fan_out + j] = d;
        }
        if l > 0 {
            // propagate through the ReLU of layer l (activations[l] holds
            // the post-ReLU values, zero exactly where the unit is off)
            let mut down = vec![0.0f64; fan_in];
            for (j, d) in upstream.iter().enumerate() {
                let row = &weights[j * fan_in..(j + 1) * fan_in];
                for (di, wji) in down.iter_mut().zip(row) {
                    *di += d * wji;
                }
            }
            for (di, a) in down.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *di = 0.0;
                }
            }
            upstream = down;
        }
    }
    Ok((value, grad))
}

/// Mean loss over a dataset.
pub fn risk(
    spec: &ModelSpec,
    params: &[f64],
    data: &DatasetHandle,
    loss: &BoundedLoss,
) -> Result<f64> {
    data.validate()?;
    let mut total = 0.0;
    for (x, &y) in data.features.iter().zip(&data.labels) {
        total += loss_value(spec, params, x, y, loss)?;
    }
    Ok(total / data.len() as f64)
}

/// Monte-Carlo estimate of the risk of a stochastic model: draws N
/// parameter vectors from the diagonal Gaussian and averages the risk.
///
/// Draw `k` uses its own derived substream, so the estimate is
/// deterministic for a fixed seed and independent of evaluation order or
/// worker count.
pub fn mc_risk_of_stochastic_model(
    spec: &ModelSpec,
    model: &StochasticModel,
    data: &DatasetHandle,
    loss: &BoundedLoss,
    n_draws: u64,
    seed: u64,
) -> Result<RiskEstimate> {
    use rayon::prelude::*;

    spec.validate()?;
    model.validate()?;
    data.validate()?;
    if n_draws == 0 {
        return Err(CoreError::invalid("n_draws must be >= 1"));
    }
    if model.dim() != spec.param_dim() {
        return Err(CoreError::DimensionMismatch {
            expected: spec.param_dim(),
            got: model.dim(),
        });
    }
    let std: Vec<f64> = model.variance.iter().map(|v| v.sqrt()).collect();
    let per_draw: Result<Vec<f64>> = (0..n_draws)
        .into_par_iter()
        .map(|k| {
            let mut gen = rng::indexed_stream(seed, "mc-risk-draw", k);
            let params: Vec<f64> = model
                .mean
                .iter()
                .zip(&std)
                .map(|(m, s)| {
                    let z: f64 = StandardNormal.sample(&mut gen);
                    m + s * z
                })
                .collect();
            risk(spec, &params, data, loss)
        })
        .collect();
    let per_draw = per_draw?;
    // Sequential reduction keeps the result bit-stable across thread counts.
    let mean = per_draw.iter().sum::<f64>() / per_draw.len() as f64;
    Ok(RiskEstimate { value: mean, num_samples: n_draws, kind: RiskKind::MonteCarlo })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_dataset, SynthKind};
    use approx::assert_relative_eq;

    #[test]
    fn param_dim_matches_layout() {
        assert_eq!(ModelSpec::linear(3, 2).param_dim(), 3 * 2 + 2);
        assert_eq!(
            ModelSpec::mlp(4, vec![32, 32], 3).param_dim(),
            4 * 32 + 32 + 32 * 32 + 32 + 32 * 3 + 3
        );
    }

    #[test]
    fn uniform_softmax_hits_log_c_over_cmax() {
        // zero parameters give uniform softmax: CE = log C
        let spec = ModelSpec::linear(3, 4);
        let params = vec![0.0; spec.param_dim()];
        let loss = BoundedLoss::ClampedCrossEntropy { c_max: 4.0 };
        let v = loss_value(&spec, &params, &[0.5, -0.5, 1.0], 2, &loss).unwrap();
        assert_relative_eq!(v, 4f64.ln() / 4.0, max_relative = 1e-12);
        // clamp kicks in when c_max < log C
        let tight = BoundedLoss::ClampedCrossEntropy { c_max: 1.0 };
        let v = loss_value(&spec, &params, &[0.5, -0.5, 1.0], 2, &tight).unwrap();
        assert!(v <= 1.0);
    }

    #[test]
    fn zero_one_correct_prediction_is_zero() {
        let spec = ModelSpec::linear(2, 2);
        // weights routing x[0] to class 0 and x[1] to class 1
        let params = vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let v = loss_value(&spec, &params, &[2.0, 0.1], 0, &BoundedLoss::ZeroOne).unwrap();
        assert_eq!(v, 0.0);
        let v = loss_value(&spec, &params, &[0.1, 2.0], 0, &BoundedLoss::ZeroOne).unwrap();
        assert_eq!(v, 1.0);
        assert!(matches!(
            loss_and_gradient(&spec, &params, &[1.0, 0.0], 0, &BoundedLoss::ZeroOne),
            Err(CoreError::NonDifferentiableLoss(_))
        ));
    }

    #[test]
    fn losses_stay_in_unit_interval() {
        let spec = ModelSpec::mlp(3, vec![8], 3);
        let mut seed = 0u64;
        for _ in 0..200 {
            seed += 1;
            let params = spec.init_params(seed, Some(3.0));
            let mut gen = crate::rng::stream(seed, "loss-fuzz");
            let x: Vec<f64> = (0..3).map(|_| gen.random_range(-5.0..5.0)).collect();
            let y = gen.random_range(0..3usize);
            for loss in
                [BoundedLoss::ZeroOne, BoundedLoss::ClampedCrossEntropy { c_max: 2.0 }]
            {
                let v = loss_value(&spec, &params, &x, y, &loss).unwrap();
                assert!((0.0..=1.0).contains(&v), "loss {v} out of [0,1]");
            }
        }
    }

    /// Central finite differences of the surrogate, step 1e-5.
    fn fd_gradient(
        spec: &ModelSpec,
        params: &[f64],
        x: &[f64],
        y: usize,
        loss: &BoundedLoss,
    ) -> Vec<f64> {
        let h = 1e-5;
        let mut grad = vec![0.0; params.len()];
        let mut work = params.to_vec();
        for i in 0..params.len() {
            work[i] = params[i] + h;
            let up = loss_value(spec, &work, x, y, loss).unwrap();
            work[i] = params[i] - h;
            let dn = loss_value(spec, &work, x, y, loss).unwrap();
            work[i] = params[i];
            grad[i] = (up - dn) / (2.0 * h);
        }
        grad
    }

    fn gradient_check(spec: &ModelSpec, trials: usize, seed_base: u64) {
        // high clamp keeps test points away from the clamp kink; ReLU
        // kinks are avoided by resampling when a pre-activation is tiny
        let loss = BoundedLoss::ClampedCrossEntropy { c_max: 50.0 };
        let mut accepted = 0usize;
        let mut seed = seed_base;
        while accepted < trials {
            seed += 1;
            let params = spec.init_params(seed, None);
            let mut gen = crate::rng::stream(seed, "gradcheck-x");
            let x: Vec<f64> = (0..spec.input_dim).map(|_| gen.random_range(-2.0..2.0)).collect();
            let y = gen.random_range(0..spec.classes);

            let fwd = forward(spec, &params, &x).unwrap();
            let near_kink = fwd
                .activations
                .iter()
                .skip(1)
                .take(fwd.activations.len().saturating_sub(2))
                .any(|layer| layer.iter().any(|a| a.abs() < 1e-3));
            if near_kink {
                continue;
            }
            let (_, analytic) = loss_and_gradient(spec, &params, &x, y, &loss).unwrap();
            let norm = analytic.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm < 1e-6 {
                continue;
            }
            let numeric = fd_gradient(spec, &params, &x, y, &loss);
            let diff = analytic
                .iter()
                .zip(&numeric)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(
                diff / norm < 1e-5,
                "gradient mismatch: rel err {} at seed {seed}",
                diff / norm
            );
            accepted += 1;
        }
    }

    #[test]
    fn linear_gradients_match_finite_differences() {
        gradient_check(&ModelSpec::linear(4, 3), 100, 1000);
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        gradient_check(&ModelSpec::mlp(3, vec![8, 6], 3), 100, 2000);
    }

    #[test]
    fn clamped_gradient_is_zero_beyond_clamp() {
        let spec = ModelSpec::linear(2, 2);
        // push CE above the clamp: huge wrong-class logits
        let params = vec![50.0, 0.0, -50.0, 0.0, 0.0, 0.0];
        let loss = BoundedLoss::ClampedCrossEntropy { c_max: 2.0 };
        let (v, g) = loss_and_gradient(&spec, &params, &[1.0, 0.0], 1, &loss).unwrap();
        assert_eq!(v, 1.0);
        assert!(g.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn risk_basics() {
        let spec = ModelSpec::linear(2, 2);
        let params = vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let data = DatasetHandle {
            features: vec![vec![2.0, 0.0], vec![0.0, 2.0]],
            labels: vec![0, 1],
            provenance: crate::data::Provenance::Synthetic,
        };
        assert_eq!(risk(&spec, &params, &data, &BoundedLoss::ZeroOne).unwrap(), 0.0);

        // single sample equals the loss value + permutation invariance
        let single = DatasetHandle {
            features: vec![vec![2.0, 0.0]],
            labels: vec![0],
            provenance: crate::data::Provenance::Synthetic,
        };
        let loss = BoundedLoss::ClampedCrossEntropy { c_max: 4.0 };
        let lv = loss_value(&spec, &params, &[2.0, 0.0], 0, &loss).unwrap();
        assert_eq!(risk(&spec, &params, &single, &loss).unwrap(), lv);

        let mut permuted = data.clone();
        permuted.features.reverse();
        permuted.labels.reverse();
        assert_eq!(
            risk(&spec, &params, &data, &loss).unwrap(),
            risk(&spec, &params, &permuted, &loss).unwrap()
        );
    }

    #[test]
    fn mc_risk_is_deterministic_and_degenerates() {
        let spec = ModelSpec::linear(2, 2);
        let params = vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let data = synth_dataset(SynthKind::TwoGaussians { separation: 4.0 }, 50, 2, 3).unwrap();
        let loss = BoundedLoss::ZeroOne;

        let model = StochasticModel { mean: params.clone(), variance: vec![1e-12; 6] };
        let a = mc_risk_of_stochastic_model(&spec, &model, &data, &loss, 200, 5).unwrap();
        let b = mc_risk_of_stochastic_model(&spec, &model, &data, &loss, 200, 5).unwrap();
        assert_eq!(a, b);
        let point = risk(&spec, &params, &data, &loss).unwrap();
        assert!((a.value - point).abs() < 1e-6);
        assert_eq!(a.kind, RiskKind::MonteCarlo);
        assert_eq!(a.num_samples, 200);
    }

    #[test]
    fn mc_risk_matches_gaussian_cdf_oracle() {
        // 1-D threshold task: a single sample x > 0 with label 1. A draw
        // misclassifies iff the logit gap (w1-w0)x + (b1-b0) <= 0; under
        // the diagonal Gaussian the gap is Gaussian with known mean and
        // variance, so the exact risk is a normal CDF value.
        use statrs::distribution::{ContinuousCDF, Normal};
        let spec = ModelSpec::linear(1, 2);
        let x = 1.5f64;
        let data = DatasetHandle {
            features: vec![vec![x]],
            labels: vec![1],
            provenance: crate::data::Provenance::Synthetic,
        };
        // params: [w0, w1, b0, b1]
        let mean = vec![0.2, 0.6, -0.1, 0.3];
        let var = vec![0.3, 0.5, 0.2, 0.4];
        let model = StochasticModel { mean: mean.clone(), variance: var.clone() };
        // gap = (w1 - w0) x + (b1 - b0)
        let mu = (mean[1] - mean[0]) * x + (mean[3] - mean[2]);
        let s2 = (var[1] + var[0]) * x * x + (var[3] + var[2]);
        let exact = Normal::new(0.0, 1.0).unwrap().cdf(-mu / s2.sqrt());

        let n = 10_000u64;
        let est = mc_risk_of_stochastic_model(&spec, &model, &data, &BoundedLoss::ZeroOne, n, 9)
            .unwrap();
        let se = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!(
            (est.value - exact).abs() <= 3.0 * se,
            "MC {} vs exact {exact} (3se = {})",
            est.value,
            3.0 * se
        );
    }

    #[test]
    fn mc_risk_standard_error_scales_inverse_sqrt() {
        // log-log slope of the deviation-vs-N curve should be near -1/2.
        use statrs::distribution::{ContinuousCDF, Normal};
        let spec = ModelSpec::linear(1, 2);
        let data = DatasetHandle {
            features: vec![vec![1.0]],
            labels: vec![1],
            provenance: crate::data::Provenance::Synthetic,
        };
        let mean = vec![0.0, 0.2, 0.0, 0.0];
        let var = vec![0.5, 0.5, 0.25, 0.25];
        let model = StochasticModel { mean: mean.clone(), variance: var.clone() };
        let mu = mean[1] - mean[0];
        let s2 = var[0] + var[1] + var[2] + var[3];
        let exact = Normal::new(0.0, 1.0).unwrap().cdf(-mu / s2.sqrt());

        let draws = [200u64, 800, 3_200, 12_800, 51_200];
        let reps = 24u64;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (i, &n) in draws.iter().enumerate() {
            let mut sq = 0.0;
            for r in 0..reps {
                let est = mc_risk_of_stochastic_model(
                    &spec,
                    &model,
                    &data,
                    &BoundedLoss::ZeroOne,
                    n,
                    1000 + r + (i as u64) * 1000,
                )
                .unwrap();
                sq += (est.value - exact) * (est.value - exact);
            }
            xs.push((n as f64).ln());
            ys.push((sq / reps as f64).sqrt().ln());
        }
        let xm = xs.iter().sum::<f64>() / xs.len() as f64;
        let ym = ys.iter().sum::<f64>() / ys.len() as f64;
        let slope = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - xm) * (y - ym))
            .sum::<f64>()
            / xs.iter().map(|x| (x - xm) * (x - xm)).sum::<f64>();
        assert!(
            (slope + 0.5).abs() < 0.1,
            "empirical MC error slope {slope}, expected ~ -0.5"
        );
    }

    #[test]
    fn trainer_reaches_zero_risk_on_separated_data() {
        // widely separated classes + plain SGD (no clip pressure, no
        // noise) should drive the zero-one risk to 0
        use crate::bounds::TrainingRecipe;
        use crate::dpsgd::{dpsgd_batch, UpdateRule};
        let data = synth_dataset(SynthKind::TwoGaussians { separation: 20.0 }, 200, 2, 17).unwrap();
        let spec = ModelSpec::linear(2, 2);
        let loss = BoundedLoss::ClampedCrossEntropy { c_max: 4.0 };
        let recipe = TrainingRecipe {
            epochs: 3,
            steps_per_epoch: 10,
            batch_size: 20,
            clip_threshold: 1e9,
            noise_scale: 0.0,
            dataset_size: 200,
        };
        let rule = UpdateRule::plain(0.05);
        let theta0 = spec.init_params(1, None);
        let grad = |params: &[f64], i: usize| {
            loss_and_gradient(&spec, params, &data.features[i], data.labels[i], &loss)
                .map(|(_, g)| g)
        };
        let trained = dpsgd_batch(&recipe, &rule, grad, theta0, 23).unwrap();
        let r = risk(&spec, &trained, &data, &BoundedLoss::ZeroOne).unwrap();
        assert_eq!(r, 0.0, "separable task should reach zero risk, got {r}");
    }
}
