//! Training with differentially private SGD, finite-sample max-information
//! bounds for the resulting runs, and numerically certified PAC-Bayes risk
//! certificates built on top of them.
//!
//! The crate is organized around the certificate pipeline:
//!
//! - [`bounds`] — closed-form and grid-minimized max-information budgets
//!   for DP-SGD runs and single Gaussian releases.
//! - [`pac_bayes`] — binary-KL arithmetic, kl-inversion, Gaussian KL, and
//!   certificate right-hand sides.
//! - [`dpsgd`] — the clipping / batching / noising training engine with
//!   plain, momentum, and Adam-style update rules.
//! - [`models`] / [`data`] — tiny differentiable models with hand-written
//!   gradients, bounded losses, and dataset synthesis/loading.
//! - [`certify`] — the end-to-end pipeline: DP-SGD prior, posterior
//!   optimization, Monte-Carlo risk, union-bound certificates.
//! - [`oracle`] — exact enumeration of the density ratio f(S,Y) on tiny
//!   finite instances, used to validate the bound tails empirically.
//! - [`rng`] — the labeled seed-splitting scheme every component uses.
//!
//! All randomness derives from a single `u64` seed via labeled substreams,
//! so every report is reproducible bit-for-bit.

pub mod bounds;
pub mod certify;
pub mod data;
pub mod dpsgd;
pub mod error;
pub mod models;
pub mod oracle;
pub mod pac_bayes;
pub mod rng;

pub use error::CoreError;

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, CoreError>;
