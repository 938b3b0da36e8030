//! Analytic max-information bounds.
//!
//! Everything here is a pure function of its arguments. The central
//! quantity is the noise ratio ν = m·ζ²/σ² of a DP-SGD run; all bounds on
//! the approximate max-information κ (in nats) are expressed through it.
//!
//! Floating-point policy: all values are computed in f64, and whenever a
//! bound has to be rounded for reporting it is rounded up, never down, so
//! numerical error cannot turn a valid bound into an invalid one.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::Result;

/// Hyperparameters of a DP-SGD run, as far as the bounds are concerned.
///
/// `clip_threshold` and `noise_scale` may be zero: a zero clip threshold
/// means the updates carry no data signal (ν = 0 and every κ bound is 0),
/// and a zero noise scale is accepted by the trainer for plain-SGD
/// baselines. Bound computations reject `noise_scale = 0` when
/// `clip_threshold > 0`, since no finite bound exists there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecipe {
    pub epochs: u32,
    pub steps_per_epoch: u32,
    pub batch_size: u32,
    pub clip_threshold: f64,
    pub noise_scale: f64,
    pub dataset_size: u32,
}

impl TrainingRecipe {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.steps_per_epoch == 0 || self.batch_size == 0 {
            return Err(CoreError::invalid("epochs, steps and batch size must be >= 1"));
        }
        if !(self.clip_threshold >= 0.0) || !self.clip_threshold.is_finite() {
            return Err(CoreError::invalid("clip threshold must be finite and >= 0"));
        }
        if !(self.noise_scale >= 0.0) || !self.noise_scale.is_finite() {
            return Err(CoreError::invalid("noise scale must be finite and >= 0"));
        }
        let used = u64::from(self.steps_per_epoch) * u64::from(self.batch_size);
        if u64::from(self.dataset_size) < used {
            return Err(CoreError::invalid(format!(
                "dataset size {} smaller than steps*batch = {}",
                self.dataset_size, used
            )));
        }
        Ok(())
    }

    /// ν = m·ζ²/σ². Zero when the clip threshold is zero; an error when
    /// ζ > 0 but σ = 0 (no finite max-information bound exists).
    pub fn noise_ratio(&self) -> Result<f64> {
        noise_ratio(self.batch_size, self.clip_threshold, self.noise_scale)
    }
}

pub(crate) fn noise_ratio(batch_size: u32, zeta: f64, sigma: f64) -> Result<f64> {
    if zeta == 0.0 {
        return Ok(0.0);
    }
    if sigma <= 0.0 {
        return Err(CoreError::domain(
            "noise scale must be positive when the clip threshold is positive",
        ));
    }
    Ok(f64::from(batch_size) * (zeta / sigma).powi(2))
}

/// The noise ratio together with the admissible λ-interval endpoint of the
/// grid-minimized bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseRatio {
    pub nu: f64,
    pub r_nu: f64,
}

impl NoiseRatio {
    pub fn from_nu(nu: f64) -> Result<Self> {
        Ok(NoiseRatio { nu, r_nu: lambda_domain(nu)? })
    }
}

/// How a [`MaxInfoBound`] was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMethod {
    Optimized,
    Explicit,
    GaussianSingle,
    PureDp,
    TauClosedForm,
}

/// A computed max-information budget κ (nats), with the failure
/// probability β it was computed for and, where the method involves a 1-D
/// minimization, the minimizer that achieved the reported infimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxInfoBound {
    pub value: f64,
    pub beta: f64,
    pub method: BoundMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recipe: Option<TrainingRecipe>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minimizer: Option<f64>,
}

impl MaxInfoBound {
    /// The zero budget of a data-independent release.
    pub fn trivial(beta: f64) -> Self {
        MaxInfoBound { value: 0.0, beta, method: BoundMethod::Optimized, recipe: None, minimizer: None }
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(CoreError::invalid(format!("beta must lie in (0,1), got {beta}")));
    }
    Ok(())
}

/// F(x) = (16ν²x² + νx)/(1 − 2νx), the exponent of the sub-Bernstein
/// moment-generating-function bound on ‖G − μ‖².
///
/// Defined for 0 ≤ x < 1/(2ν); for ν = 0 it is identically zero.
pub fn bernstein_f(x: f64, nu: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(CoreError::invalid(format!("x must be finite and >= 0, got {x}")));
    }
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(CoreError::invalid(format!("nu must be finite and >= 0, got {nu}")));
    }
    if nu == 0.0 {
        return Ok(0.0);
    }
    let denom = 1.0 - 2.0 * nu * x;
    if denom <= 0.0 {
        return Err(CoreError::domain(format!(
            "x = {x} is outside [0, 1/(2nu)) for nu = {nu}"
        )));
    }
    Ok((16.0 * nu * nu * x * x + nu * x) / denom)
}

/// r_ν = sqrt(1/ν + 1/4) − 1/2, the open right endpoint of the admissible
/// λ-interval: ν(λ + λ²) < 1 exactly for λ ∈ (0, r_ν).
pub fn lambda_domain(nu: f64) -> Result<f64> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(CoreError::invalid(format!("nu must be finite and > 0, got {nu}")));
    }
    Ok((1.0 / nu + 0.25).sqrt() - 0.5)
}

/// Grid-then-refine strategy for the 1-D infima: evaluate the objective on
/// a log-spaced grid over an open interval, then tighten around the grid
/// argmin with golden-section search. The returned value is the smallest
/// objective value actually evaluated, so it is always an admissible
/// (conservative) choice even if refinement stalls.
fn grid_refine_min<F>(lo: f64, hi: f64, grid_points: usize, objective: F) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    debug_assert!(lo > 0.0 && hi > lo);
    let log_lo = lo.ln();
    let log_hi = hi.ln();
    let step = (log_hi - log_lo) / (grid_points - 1) as f64;

    let mut best_val = f64::INFINITY;
    let mut best_idx = 0usize;
    for k in 0..grid_points {
        let x = (log_lo + step * k as f64).exp();
        let v = objective(x);
        if v < best_val {
            best_val = v;
            best_idx = k;
        }
    }
    let mut best_x = (log_lo + step * best_idx as f64).exp();

    // Golden-section refinement on the bracket of grid neighbors.
    let bracket_lo = (log_lo + step * best_idx.saturating_sub(1) as f64).exp();
    let bracket_hi = (log_lo + step * (best_idx + 1).min(grid_points - 1) as f64).exp();
    let inv_phi = 0.618_033_988_749_894_9_f64;
    let mut a = bracket_lo;
    let mut b = bracket_hi;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = objective(c);
    let mut fd = objective(d);
    for _ in 0..60 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = objective(d);
        }
        let (x, v) = if fc < fd { (c, fc) } else { (d, fd) };
        if v < best_val {
            best_val = v;
            best_x = x;
        }
    }
    (best_val, best_x)
}

const LAMBDA_GRID_POINTS: usize = 4096;

/// inf over λ ∈ (0, r_ν) of (1/λ)·[T·F((λ+λ²)/2) + log_term].
/// Returns (infimum, minimizer).
fn infimum_over_lambda(steps: u32, nu: f64, log_term: f64) -> Result<(f64, f64)> {
    let r_nu = lambda_domain(nu)?;
    let t = f64::from(steps);
    let objective = |lam: f64| -> f64 {
        let x = (lam + lam * lam) / 2.0;
        match bernstein_f(x, nu) {
            Ok(f) => (t * f + log_term) / lam,
            Err(_) => f64::INFINITY,
        }
    };
    let lo = f64::EPSILON * r_nu;
    let hi = (1.0 - 1e-9) * r_nu;
    Ok(grid_refine_min(lo, hi, LAMBDA_GRID_POINTS, objective))
}

/// The grid-minimized bound for a DP-SGD run:
/// κ = ½·E·T·ν + E·inf over λ ∈ (0, r_ν) of (1/λ)[T·F((λ+λ²)/2) + log(E/β)].
pub fn maxinfo_dpsgd_optimized(recipe: &TrainingRecipe, beta: f64) -> Result<MaxInfoBound> {
    recipe.validate()?;
    check_beta(beta)?;
    let nu = recipe.noise_ratio()?;
    let epochs = f64::from(recipe.epochs);
    if nu == 0.0 {
        return Ok(MaxInfoBound {
            value: 0.0,
            beta,
            method: BoundMethod::Optimized,
            recipe: Some(*recipe),
            minimizer: None,
        });
    }
    let log_term = (epochs / beta).ln();
    let (inf, lam) = infimum_over_lambda(recipe.steps_per_epoch, nu, log_term)?;
    let value = 0.5 * epochs * f64::from(recipe.steps_per_epoch) * nu + epochs * inf;
    Ok(MaxInfoBound {
        value,
        beta,
        method: BoundMethod::Optimized,
        recipe: Some(*recipe),
        minimizer: Some(lam),
    })
}

/// The closed-form (weaker) bound for a DP-SGD run:
/// κ = E·T·m·(ζ/σ)²·(1 + 3q + q²/2) + E·T·√m·(ζ/σ)·(½ + 3q + q²/2),
/// with q = sqrt((2/T)·log(E/β)).
pub fn maxinfo_dpsgd_explicit(recipe: &TrainingRecipe, beta: f64) -> Result<MaxInfoBound> {
    recipe.validate()?;
    check_beta(beta)?;
    let epochs = f64::from(recipe.epochs);
    if epochs / beta <= 1.0 {
        // Unreachable for validated inputs, but clamping would silently
        // hide misuse, so reject.
        return Err(CoreError::invalid("E/beta must exceed 1"));
    }
    let value = if recipe.clip_threshold == 0.0 {
        0.0
    } else {
        recipe.noise_ratio()?; // rejects sigma = 0 with positive clip
        let t = f64::from(recipe.steps_per_epoch);
        let m = f64::from(recipe.batch_size);
        let ratio = recipe.clip_threshold / recipe.noise_scale;
        let q = (2.0 / t * (epochs / beta).ln()).sqrt();
        epochs * t * m * ratio * ratio * (1.0 + 3.0 * q + 0.5 * q * q)
            + epochs * t * m.sqrt() * ratio * (0.5 + 3.0 * q + 0.5 * q * q)
    };
    Ok(MaxInfoBound {
        value,
        beta,
        method: BoundMethod::Explicit,
        recipe: Some(*recipe),
        minimizer: None,
    })
}

const ALPHA_GRID_POINTS: usize = 4096;

/// Max-information of a single Gaussian release of an m-sample statistic
/// with sensitivity s and noise scale σ:
/// κ = inf over admissible α > 0 of
///     (m·s²/σ²)(3/4 + q/2 + q²/4) + (√m·s/σ)(1+q)·sqrt(q² − log α),
/// with q = sqrt(log((1+α/2)/β)). Admissible means 1/α ≥ β − 1/2, which
/// coincides with q² ≥ log α.
pub fn maxinfo_gaussian_mechanism(m: u32, s: f64, sigma: f64, beta: f64) -> Result<MaxInfoBound> {
    if m == 0 {
        return Err(CoreError::invalid("m must be >= 1"));
    }
    check_beta(beta)?;
    if !(sigma > 0.0) {
        return Err(CoreError::invalid("sigma must be > 0"));
    }
    if !(s >= 0.0) || !s.is_finite() {
        return Err(CoreError::invalid("sensitivity must be finite and >= 0"));
    }
    if s == 0.0 {
        return Ok(MaxInfoBound {
            value: 0.0,
            beta,
            method: BoundMethod::GaussianSingle,
            recipe: None,
            minimizer: None,
        });
    }

    let mf = f64::from(m);
    let lin = mf * (s / sigma).powi(2);
    let sqr = mf.sqrt() * s / sigma;
    let objective = |alpha: f64| -> f64 {
        let q2 = ((1.0 + alpha / 2.0) / beta).ln();
        let inner = q2 - alpha.ln();
        if inner < 0.0 {
            return f64::INFINITY;
        }
        let q = q2.sqrt();
        lin * (0.75 + 0.5 * q + 0.25 * q2) + sqr * (1.0 + q) * inner.sqrt()
    };

    // For beta <= 1/2 every alpha > 0 is admissible; otherwise the
    // feasible interval is (0, 1/(beta - 1/2)).
    let alpha_hi = if beta <= 0.5 { 1e9 } else { (1.0 - 1e-12) / (beta - 0.5) };
    let alpha_lo = 1e-9_f64.min(alpha_hi / 2.0);
    if !(alpha_hi > alpha_lo) {
        return Err(CoreError::domain("empty feasible alpha set"));
    }
    let (value, alpha) = grid_refine_min(alpha_lo, alpha_hi, ALPHA_GRID_POINTS, objective);
    if !value.is_finite() {
        return Err(CoreError::domain("empty feasible alpha set"));
    }
    Ok(MaxInfoBound {
        value,
        beta,
        method: BoundMethod::GaussianSingle,
        recipe: None,
        minimizer: Some(alpha),
    })
}

/// Max-information of an ε-differentially private algorithm on n samples:
/// κ = ½·n·ε² + ε·sqrt((n/2)·log(2/β)).
pub fn maxinfo_pure_dp(n: u32, epsilon: f64, beta: f64) -> Result<MaxInfoBound> {
    if n == 0 {
        return Err(CoreError::invalid("n must be >= 1"));
    }
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(CoreError::invalid("epsilon must be finite and >= 0"));
    }
    check_beta(beta)?;
    let nf = f64::from(n);
    let value = 0.5 * nf * epsilon * epsilon
        + epsilon * (nf / 2.0 * (2.0 / beta).ln()).sqrt();
    Ok(MaxInfoBound {
        value,
        beta,
        method: BoundMethod::PureDp,
        recipe: None,
        minimizer: None,
    })
}

/// Minimal Gaussian-mechanism noise scale for (ε,δ)-differential privacy
/// of a sensitivity-s statistic: σ = (s/ε)·sqrt(2·log(1.25/δ)).
pub fn gaussian_sigma_for_dp(s: f64, epsilon: f64, delta: f64) -> Result<f64> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(CoreError::invalid("sensitivity must be finite and > 0"));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(CoreError::invalid(format!("epsilon must lie in (0,1), got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(CoreError::invalid(format!("delta must lie in (0,1), got {delta}")));
    }
    Ok(s / epsilon * (2.0 * (1.25 / delta).ln()).sqrt())
}

/// Ratio of the leading linear-term coefficients between the Gaussian
/// mechanism bound and the calibrated pure-DP bound:
/// R(α,β) = [3/4 + ½·sqrt(log((1+α/2)/β)) + ¼·log((1+α/2)/β)] / log(1.25/β),
/// for α ∈ (0,3] and β ∈ (0,½].
pub fn ratio_r(alpha: f64, beta: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 3.0) {
        return Err(CoreError::invalid(format!("alpha must lie in (0,3], got {alpha}")));
    }
    if !(beta > 0.0 && beta <= 0.5) {
        return Err(CoreError::invalid(format!("beta must lie in (0,1/2], got {beta}")));
    }
    let l = ((1.0 + alpha / 2.0) / beta).ln();
    Ok((0.75 + 0.5 * l.sqrt() + 0.25 * l) / (1.25 / beta).ln())
}

/// Closed-form single-epoch tail threshold:
/// τ = T·(ν + min(1, √ν))·(½ + 3q + q²/2) with q = sqrt((2/T)·log(1/β)).
///
/// Upper-bounds [`tau_grid_minimized`] for every (T, ν, β).
pub fn tau_closed_form(steps: u32, nu: f64, beta: f64) -> Result<f64> {
    if steps == 0 {
        return Err(CoreError::invalid("steps must be >= 1"));
    }
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(CoreError::invalid("nu must be finite and >= 0"));
    }
    check_beta(beta)?;
    if nu == 0.0 {
        return Ok(0.0);
    }
    let t = f64::from(steps);
    let q = (2.0 / t * (1.0 / beta).ln()).sqrt();
    Ok(t * (nu + nu.sqrt().min(1.0)) * (0.5 + 3.0 * q + 0.5 * q * q))
}

/// Grid-minimized single-epoch tail threshold:
/// τ = inf over λ ∈ (0, r_ν) of (1/λ)[T·F((λ+λ²)/2) + log(1/β)].
///
/// This is the quantity whose closed-form relaxation is
/// [`tau_closed_form`]; both are exposed so the dominance can be checked.
pub fn tau_grid_minimized(steps: u32, nu: f64, beta: f64) -> Result<f64> {
    if steps == 0 {
        return Err(CoreError::invalid("steps must be >= 1"));
    }
    check_beta(beta)?;
    if nu == 0.0 {
        return Ok(0.0);
    }
    let (inf, _) = infimum_over_lambda(steps, nu, (1.0 / beta).ln())?;
    Ok(inf)
}
