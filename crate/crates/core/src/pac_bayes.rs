//! Binary-KL arithmetic, kl-inversion, Gaussian KL divergence, and the
//! certificate right-hand sides built from them.
//!
//! The inversion kl⁻¹(q‖b) = sup{p ∈ [q,1] : kl(q‖p) ≤ b} is the workhorse
//! that turns implicit fast-rate bounds into explicit risk certificates.
//! It is solved by bisection on log(1−p); that keeps the achieved KL value
//! within ~1e−10 of the budget even when the inverse sits very close to 1,
//! where the KL curve is extremely steep in p itself.

use serde::{Deserialize, Serialize};

use crate::bounds::MaxInfoBound;
use crate::error::CoreError;
use crate::Result;

/// Diagonal-Gaussian distribution over parameter vectors. Priors π and
/// posteriors ρ are both of this form; an isotropic N(μ, τ·Id) is the
/// special case of a constant variance vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticModel {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl StochasticModel {
    pub fn isotropic(mean: Vec<f64>, tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(CoreError::invalid("variance must be finite and > 0"));
        }
        let variance = vec![tau; mean.len()];
        Ok(StochasticModel { mean, variance })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.variance.len() {
            return Err(CoreError::DimensionMismatch {
                expected: self.mean.len(),
                got: self.variance.len(),
            });
        }
        if self.variance.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(CoreError::invalid("variance must be positive coordinatewise"));
        }
        if self.mean.iter().any(|m| !m.is_finite()) {
            return Err(CoreError::invalid("mean must be finite"));
        }
        Ok(())
    }
}

/// How an empirical-risk figure was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RiskKind {
    Exact,
    MonteCarlo,
}

/// An empirical-risk value in [0,1] with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub value: f64,
    pub num_samples: u64,
    pub kind: RiskKind,
}

impl RiskEstimate {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.value) {
            return Err(CoreError::invalid("risk estimate must lie in [0,1]"));
        }
        if self.num_samples == 0 {
            return Err(CoreError::invalid("num_samples must be >= 1"));
        }
        Ok(())
    }
}

/// Confidence budget split (δ, δ′, β) of the union-bound pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfidenceSplit {
    pub delta: f64,
    pub delta_prime: f64,
    pub beta: f64,
}

impl ConfidenceSplit {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("delta", self.delta),
            ("delta_prime", self.delta_prime),
            ("beta", self.beta),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(CoreError::invalid(format!("{name} must lie in (0,1), got {v}")));
            }
        }
        if self.delta + self.delta_prime >= 1.0 {
            return Err(CoreError::invalid("delta + delta_prime must be < 1"));
        }
        if self.log_denominator() <= 0.0 {
            return Err(CoreError::invalid(format!(
                "delta - delta_prime - beta must be > 0, got {}",
                self.log_denominator()
            )));
        }
        Ok(())
    }

    /// δ − δ′ − β, the denominator of the union-bound log term.
    pub fn log_denominator(&self) -> f64 {
        self.delta - self.delta_prime - self.beta
    }
}

/// Hyperparameter grid dimensions the union bound is paid over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSizes {
    pub k1: u32,
    pub k2: u32,
}

/// A complete risk certificate: the high-probability empirical-risk upper
/// estimate, the complexity ingredients, and the inverted bound B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskCertificate {
    pub empirical_risk_upper: f64,
    pub kl_divergence: f64,
    pub kappa: MaxInfoBound,
    pub n: u32,
    pub confidence_split: ConfidenceSplit,
    pub risk_upper_bound: f64,
    pub grid_sizes: GridSizes,
    /// 1 − δ − δ′, the confidence the certificate holds with.
    pub confidence: f64,
}

/// kl(q‖p) = q·log(q/p) + (1−q)·log((1−q)/(1−p)), with 0·log 0 = 0.
///
/// For p ∈ {0,1} with mismatched q the divergence is +∞.
pub fn binary_kl(q: f64, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(CoreError::invalid(format!("q must lie in [0,1], got {q}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(CoreError::invalid(format!("p must lie in [0,1], got {p}")));
    }
    let term = |a: f64, b: f64| -> f64 {
        if a == 0.0 {
            0.0
        } else if b == 0.0 {
            f64::INFINITY
        } else {
            a * (a / b).ln()
        }
    };
    Ok(term(q, p) + term(1.0 - q, 1.0 - p))
}

/// Largest t the inversion treats as distinct from p = 1.
const KL_INVERSE_EDGE: f64 = 1e-12;

/// kl⁻¹(q‖b): the largest p ∈ [q,1] with kl(q‖p) ≤ b.
///
/// Bisection runs on u = log(1−p), where |d kl/du| ≤ 1, so the returned p
/// satisfies kl(q‖p) ∈ [b − 1e−10, b]. Returns exactly `q` for b = 0 and
/// exactly 1 when the budget exceeds kl(q ‖ 1 − 1e−12), where the bound is
/// vacuous.
pub fn kl_inverse(q: f64, b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(CoreError::invalid(format!("q must lie in [0,1], got {q}")));
    }
    if !(b >= 0.0) {
        return Err(CoreError::invalid(format!("budget must be >= 0, got {b}")));
    }
    if b == 0.0 || q == 1.0 {
        return Ok(q);
    }
    if binary_kl(q, 1.0 - KL_INVERSE_EDGE)? <= b {
        return Ok(1.0);
    }

    // Bisect on u = log(1-p). The feasible endpoint u = log(1-q) is p = q
    // (kl = 0); the infeasible endpoint is the p = 1 edge handled above.
    // Invariant: kl(q, p(u_feasible)) <= b < kl(q, p(u_infeasible)).
    let mut u_feasible = (-q).ln_1p();
    let mut u_infeasible = KL_INVERSE_EDGE.ln();
    for _ in 0..200 {
        if u_feasible - u_infeasible <= 1e-13 {
            break;
        }
        let mid = 0.5 * (u_feasible + u_infeasible);
        let p = -mid.exp_m1();
        if binary_kl(q, p)? <= b {
            u_feasible = mid;
        } else {
            u_infeasible = mid;
        }
    }
    Ok(-u_feasible.exp_m1())
}

/// Pinsker relaxation of the kl-inverse: min(1, q + sqrt(b/2)).
/// Always at least [`kl_inverse`] on the same arguments.
pub fn pinsker_gap(q: f64, b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(CoreError::invalid(format!("q must lie in [0,1], got {q}")));
    }
    if !(b >= 0.0) {
        return Err(CoreError::invalid(format!("budget must be >= 0, got {b}")));
    }
    Ok((q + (b / 2.0).sqrt()).min(1.0))
}

/// KL divergence between diagonal Gaussians:
/// D(ρ‖π) = ½·Σ_i [σ²ρ/σ²π + (μρ−μπ)²/σ²π − 1 + log(σ²π/σ²ρ)].
pub fn gaussian_kl(posterior: &StochasticModel, prior: &StochasticModel) -> Result<f64> {
    posterior.validate()?;
    prior.validate()?;
    if posterior.dim() != prior.dim() {
        return Err(CoreError::DimensionMismatch {
            expected: prior.dim(),
            got: posterior.dim(),
        });
    }
    let mut total = 0.0;
    for i in 0..posterior.dim() {
        let vr = posterior.variance[i];
        let vp = prior.variance[i];
        let dm = posterior.mean[i] - prior.mean[i];
        total += vr / vp + dm * dm / vp - 1.0 + (vp / vr).ln();
    }
    Ok(0.5 * total)
}

/// Right-hand side of the kl-form certificate with a learned prior:
/// (D_KL(ρ‖π) + κ + log(4√n/δ)) / n.
///
/// δ = 1 is admitted (the log term is still defined there).
pub fn pac_bayes_rhs(kl_divergence: f64, kappa: f64, n: u32, delta: f64) -> Result<f64> {
    if !(kl_divergence >= 0.0) || !kl_divergence.is_finite() {
        return Err(CoreError::invalid("kl divergence must be finite and >= 0"));
    }
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(CoreError::invalid("kappa must be finite and >= 0"));
    }
    if n == 0 {
        return Err(CoreError::invalid("n must be >= 1"));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(CoreError::invalid(format!("delta must lie in (0,1], got {delta}")));
    }
    let nf = f64::from(n);
    Ok((kl_divergence + kappa + (4.0 * nf.sqrt() / delta).ln()) / nf)
}

/// High-probability upper bound on the empirical risk of a stochastic
/// model estimated from N Monte-Carlo draws:
/// kl⁻¹(R̃_N ‖ log(2√N/δ′)/N).
pub fn mc_erisk_upper(mean_risk: f64, n_draws: u64, delta_prime: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&mean_risk) {
        return Err(CoreError::invalid("mean risk must lie in [0,1]"));
    }
    if n_draws == 0 {
        return Err(CoreError::invalid("n_draws must be >= 1"));
    }
    if !(delta_prime > 0.0 && delta_prime < 1.0) {
        return Err(CoreError::invalid("delta_prime must lie in (0,1)"));
    }
    let nf = n_draws as f64;
    kl_inverse(mean_risk, (2.0 * nf.sqrt() / delta_prime).ln() / nf)
}

/// Round a reported bound up at 1e−9 granularity so it stays valid under
/// floating-point error, clamped into [0,1].
pub fn round_up_bound(b: f64) -> f64 {
    ((b * 1e9).ceil() / 1e9).clamp(0.0, 1.0)
}

/// Union-bound certificate over a K1×K2 hyperparameter grid:
/// B = kl⁻¹( upper(R̃) ‖ (D_KL + κ + log(2·K1·K2·√n/(δ−δ′−β))) / n ),
/// where upper(R̃) is the Monte-Carlo risk upper bound (or the exact
/// empirical risk when the estimate is exact). The certificate holds with
/// probability at least 1 − δ − δ′; κ must have been computed at failure
/// budget β/K1.
pub fn union_bound_certificate(
    erisk: &RiskEstimate,
    kl_divergence: f64,
    kappa: &MaxInfoBound,
    n: u32,
    split: &ConfidenceSplit,
    grid: GridSizes,
) -> Result<RiskCertificate> {
    erisk.validate()?;
    split.validate()?;
    if n == 0 {
        return Err(CoreError::invalid("n must be >= 1"));
    }
    if grid.k1 == 0 || grid.k2 == 0 {
        return Err(CoreError::invalid("grid sizes must be >= 1"));
    }
    if !(kl_divergence >= 0.0) || !kl_divergence.is_finite() {
        return Err(CoreError::invalid("kl divergence must be finite and >= 0"));
    }
    if !(kappa.value >= 0.0) || !kappa.value.is_finite() {
        return Err(CoreError::invalid("kappa must be finite and >= 0"));
    }

    let empirical_upper = match erisk.kind {
        RiskKind::Exact => erisk.value,
        RiskKind::MonteCarlo => mc_erisk_upper(erisk.value, erisk.num_samples, split.delta_prime)?,
    };
    let nf = f64::from(n);
    let log_term =
        (2.0 * f64::from(grid.k1) * f64::from(grid.k2) * nf.sqrt() / split.log_denominator()).ln();
    let budget = (kl_divergence + kappa.value + log_term) / nf;
    let b = round_up_bound(kl_inverse(empirical_upper, budget)?);
    Ok(RiskCertificate {
        empirical_risk_upper: empirical_upper,
        kl_divergence,
        kappa: kappa.clone(),
        n,
        confidence_split: *split,
        risk_upper_bound: b,
        grid_sizes: grid,
        confidence: 1.0 - split.delta - split.delta_prime,
    })
}
