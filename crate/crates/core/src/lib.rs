//! Reconstruction of a single-mode Gaussian state from generalized Stokes
//! measurements against a weak auxiliary reference.
//!
//! A bright signal mode interferes with an independently prepared reference
//! mode on a balanced beam splitter; the two photocurrents yield, per shot,
//! the sum observable `S0 = n_S + n_R` and the difference observable
//! `S2(phi) = (x_S x_R^phi + p_S p_R^phi) / 2`, where `phi` is a phase shift
//! applied to the reference. First and second moments of these observables
//! over three reference phases determine the signal's mean vector and
//! covariance matrix without a strong local oscillator.
//!
//! Conventions used throughout: `[x, p] = 2i`, vacuum variance 1, photon
//! number `n = (x^2 + p^2 - 2) / 4`.
//!
//! Module map:
//! - [`states`]: Gaussian state parametrizations and conversions.
//! - [`moments`]: exact quantum moments of `S0` and `S2(phi)` (the analytic
//!   oracle).
//! - [`fockcheck`]: independent truncated number-basis brute force used to
//!   verify the analytic formulas and pin operator-ordering constants.
//! - [`sampler`]: deterministic, splittable phase-space shot sampling.
//! - [`estimator`]: every estimation path with explicit feasibility rules.
//! - [`bench`]: Monte Carlo MSE studies, sweeps, and demonstration reports.

pub mod angles;
pub mod bench;
pub mod estimator;
pub mod fockcheck;
pub mod moments;
pub mod sampler;
pub mod states;

pub use estimator::{Feasibility, SignalEstimate};
pub use moments::{OrderingConstants, StokesMomentSet};
pub use sampler::{SamplerMode, SeedSpec};
pub use states::{GaussianParams, MomentForm, NERDecomposition, ReferenceSpec};
