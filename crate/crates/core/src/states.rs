//! Single-mode Gaussian states in two equivalent parametrizations.
//!
//! The physical form [`GaussianParams`] builds a state from a thermal state
//! of quadrature standard deviation `r`, squeezed by `q` along direction
//! `alpha`, then displaced by `d` along direction `beta`. The eigen standard
//! deviations of the covariance matrix are `b = r*q >= c = r/q`. The moment
//! form [`MomentForm`] is the mean vector plus the symmetrized 2x2
//! covariance matrix.
//!
//! Conventions: `[x, p] = 2i` and vacuum variance 1, so physicality is
//! `det V = (b*c)^2 = r^4 >= 1`. Estimates built from noisy data may violate
//! this; construction deliberately permits `r < 1` and physicality is
//! queried via [`GaussianParams::is_physical`].

use std::fmt::Write as _;

use thiserror::Error;

use crate::angles::{self, parse_angle, wrap_full_turn, wrap_half_turn};

#[derive(Debug, Error, PartialEq)]
pub enum StateError {
    #[error("thermal std-dev must be positive and finite, got r = {0}")]
    InvalidThermal(f64),
    #[error("squeeze magnitude must satisfy q >= 1 (canonical form), got q = {0}")]
    InvalidSqueeze(f64),
    #[error("displacement magnitude must be nonnegative and finite, got d = {0}")]
    InvalidDisplacement(f64),
    #[error("angle must be finite, got {0}")]
    InvalidAngle(f64),
    #[error("eigen std-devs must satisfy b >= c > 0, got b = {b}, c = {c}")]
    InvalidEigenPair { b: f64, c: f64 },
    #[error("non-positive variance: {name} = {value}")]
    NonPositiveVariance { name: &'static str, value: f64 },
    #[error("covariance eigenvalue is non-positive: {0}")]
    NonPositiveEigenvalue(f64),
    #[error("reference must have alpha = beta = 0, got alpha = {alpha}, beta = {beta}")]
    ReferenceNotCanonical { alpha: f64, beta: f64 },
    #[error("displacement ratio must lie in [0, 1], got gamma = {0}")]
    InvalidRatio(f64),
    #[error("non-equilibrium energy ratio must be nonnegative, got delta = {0}")]
    InvalidNer(f64),
    #[error("state record: {0}")]
    Record(String),
}

/// A Gaussian state as (thermal, squeeze, displacement) parameters.
///
/// Canonical form maintained by every constructor: `alpha` in `[0, pi)`,
/// `beta` in `[0, 2*pi)`, `alpha = 0` when `q = 1`, `beta = 0` when `d = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianParams {
    r: f64,
    q: f64,
    alpha: f64,
    d: f64,
    beta: f64,
}

impl GaussianParams {
    pub fn new(r: f64, q: f64, alpha: f64, d: f64, beta: f64) -> Result<Self, StateError> {
        if !(r.is_finite() && r > 0.0) {
            return Err(StateError::InvalidThermal(r));
        }
        if !(q.is_finite() && q >= 1.0) {
            return Err(StateError::InvalidSqueeze(q));
        }
        if !(d.is_finite() && d >= 0.0) {
            return Err(StateError::InvalidDisplacement(d));
        }
        for a in [alpha, beta] {
            if !a.is_finite() {
                return Err(StateError::InvalidAngle(a));
            }
        }
        let alpha = if q == 1.0 { 0.0 } else { wrap_half_turn(alpha) };
        let beta = if d == 0.0 { 0.0 } else { wrap_full_turn(beta) };
        Ok(Self { r, q, alpha, d, beta })
    }

    /// Builds from eigen standard deviations `b >= c > 0` of the covariance.
    pub fn from_eigen(b: f64, c: f64, alpha: f64, d: f64, beta: f64) -> Result<Self, StateError> {
        if !(b.is_finite() && c.is_finite() && c > 0.0 && b >= c) {
            return Err(StateError::InvalidEigenPair { b, c });
        }
        Self::new((b * c).sqrt(), (b / c).sqrt(), alpha, d, beta)
    }

    pub fn vacuum() -> Self {
        Self { r: 1.0, q: 1.0, alpha: 0.0, d: 0.0, beta: 0.0 }
    }

    pub fn thermal(r: f64) -> Result<Self, StateError> {
        Self::new(r, 1.0, 0.0, 0.0, 0.0)
    }

    pub fn coherent(d: f64, beta: f64) -> Result<Self, StateError> {
        Self::new(1.0, 1.0, 0.0, d, beta)
    }

    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn q(&self) -> f64 {
        self.q
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn d(&self) -> f64 {
        self.d
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Larger eigen standard deviation, `b = r*q`.
    pub fn b(&self) -> f64 {
        self.r * self.q
    }

    /// Smaller eigen standard deviation, `c = r/q`.
    pub fn c(&self) -> f64 {
        self.r / self.q
    }

    /// Total second moment `<x^2> + <p^2> = b^2 + c^2 + d^2`.
    pub fn total_second_moment(&self) -> f64 {
        let (b, c) = (self.b(), self.c());
        b * b + c * c + self.d * self.d
    }

    /// Mean photon number `(b^2 + c^2 + d^2 - 2) / 4`.
    pub fn mean_photons(&self) -> f64 {
        (self.total_second_moment() - 2.0) / 4.0
    }

    /// `det V = r^4 >= 1` holds for physical states.
    pub fn is_physical(&self) -> bool {
        self.r >= 1.0
    }
}

impl std::fmt::Display for GaussianParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "b = {:.6}, c = {:.6}, alpha = {:.6}, d = {:.6}, beta = {:.6}",
            self.b(),
            self.c(),
            self.alpha,
            self.d,
            self.beta
        )
    }
}

/// Mean vector and symmetrized covariance matrix of a single mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentForm {
    pub mean_x: f64,
    pub mean_p: f64,
    pub var_x: f64,
    pub var_p: f64,
    pub cov_xp: f64,
}

impl MomentForm {
    /// Raw (non-central) second moment `<x^2>`.
    pub fn second_x(&self) -> f64 {
        self.var_x + self.mean_x * self.mean_x
    }

    /// Raw second moment `<p^2>`.
    pub fn second_p(&self) -> f64 {
        self.var_p + self.mean_p * self.mean_p
    }

    /// Raw symmetrized second moment `<xp>_s`.
    pub fn second_xp(&self) -> f64 {
        self.cov_xp + self.mean_x * self.mean_p
    }

    pub fn det(&self) -> f64 {
        self.var_x * self.var_p - self.cov_xp * self.cov_xp
    }

    /// Heisenberg bound in this normalization: `det V >= 1`.
    pub fn is_physical(&self) -> bool {
        self.var_x > 0.0 && self.var_p > 0.0 && self.det() >= 1.0
    }

    /// Statistics of the rotated quadratures `x' = x cos(phi) + p sin(phi)`,
    /// `p' = -x sin(phi) + p cos(phi)`.
    pub fn rotated(&self, phi: f64) -> MomentForm {
        let (s, c) = phi.sin_cos();
        MomentForm {
            mean_x: c * self.mean_x + s * self.mean_p,
            mean_p: -s * self.mean_x + c * self.mean_p,
            var_x: c * c * self.var_x + s * s * self.var_p + 2.0 * s * c * self.cov_xp,
            var_p: s * s * self.var_x + c * c * self.var_p - 2.0 * s * c * self.cov_xp,
            cov_xp: (self.var_p - self.var_x) * s * c + (c * c - s * s) * self.cov_xp,
        }
    }

    /// Raw second moment of the rotated quadrature `x' = x cos(phi) + p sin(phi)`.
    pub fn directional_second(&self, phi: f64) -> f64 {
        let (s, c) = phi.sin_cos();
        self.second_x() * c * c + self.second_p() * s * s + 2.0 * s * c * self.second_xp()
    }
}

/// The auxiliary state the signal interferes with.
///
/// Its squeeze and displacement directions define the phase origin, so the
/// canonical form has `alpha = beta = 0`. `classical` records whether the
/// smaller eigen std-dev satisfies `c >= 1` (no squeezing below vacuum
/// noise); it is informational, never enforced.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceSpec {
    params: GaussianParams,
    classical: bool,
}

impl ReferenceSpec {
    /// Wraps an already-canonical state; rejects nonzero directions.
    pub fn new(params: GaussianParams) -> Result<Self, StateError> {
        if params.alpha != 0.0 || params.beta != 0.0 {
            return Err(StateError::ReferenceNotCanonical {
                alpha: params.alpha,
                beta: params.beta,
            });
        }
        Ok(Self { classical: params.c() >= 1.0, params })
    }

    pub fn from_rqd(r: f64, q: f64, d: f64) -> Result<Self, StateError> {
        Self::new(GaussianParams::new(r, q, 0.0, d, 0.0)?)
    }

    pub fn vacuum() -> Self {
        Self { params: GaussianParams::vacuum(), classical: true }
    }

    pub fn thermal(r: f64) -> Result<Self, StateError> {
        Self::new(GaussianParams::thermal(r)?)
    }

    pub fn coherent(d: f64) -> Result<Self, StateError> {
        Self::new(GaussianParams::coherent(d, 0.0)?)
    }

    pub fn params(&self) -> &GaussianParams {
        &self.params
    }

    pub fn is_classical(&self) -> bool {
        self.classical
    }

    /// True when both the squeeze and the displacement are (numerically)
    /// absent, i.e. the state is phase-insensitive.
    pub fn is_thermal(&self) -> bool {
        self.params.q == 1.0 && self.params.d == 0.0
    }
}

/// Additive decomposition of the energy a reference carries beyond its
/// thermal equilibrium share.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NERDecomposition {
    /// Total non-equilibrium energy ratio, `delta_disp + delta_sq`.
    pub delta: f64,
    /// Fraction of `delta` contributed by displacement; `None` when
    /// `delta = 0` (the ratio is undefined for an equilibrium state).
    pub gamma: Option<f64>,
    pub delta_disp: f64,
    pub delta_sq: f64,
}

/// Covariance and mean vector of a state given in physical parameters.
///
/// `var_x = b^2 cos^2(alpha) + c^2 sin^2(alpha)`,
/// `var_p = b^2 sin^2(alpha) + c^2 cos^2(alpha)`,
/// `cov_xp = (b^2 - c^2) cos(alpha) sin(alpha)`,
/// means `(d cos(beta), d sin(beta))`.
pub fn params_to_moments(s: &GaussianParams) -> MomentForm {
    let (b2, c2) = (s.b() * s.b(), s.c() * s.c());
    let (sa, ca) = s.alpha.sin_cos();
    let (sb, cb) = s.beta.sin_cos();
    MomentForm {
        mean_x: s.d * cb,
        mean_p: s.d * sb,
        var_x: b2 * ca * ca + c2 * sa * sa,
        var_p: b2 * sa * sa + c2 * ca * ca,
        cov_xp: (b2 - c2) * ca * sa,
    }
}

/// Inverse of [`params_to_moments`] via the 2x2 symmetric eigenproblem.
///
/// `b^2, c^2` are the covariance eigenvalues, `alpha` the major-axis
/// direction from `atan2(2 cov, var_x - var_p) / 2`. Accepts moment forms
/// that violate the Heisenberg bound (empirical data); rejects non-positive
/// variances or eigenvalues.
pub fn moments_to_params(m: &MomentForm) -> Result<GaussianParams, StateError> {
    if !(m.var_x.is_finite() && m.var_x > 0.0) {
        return Err(StateError::NonPositiveVariance { name: "var_x", value: m.var_x });
    }
    if !(m.var_p.is_finite() && m.var_p > 0.0) {
        return Err(StateError::NonPositiveVariance { name: "var_p", value: m.var_p });
    }
    let half_diff = 0.5 * (m.var_x - m.var_p);
    let disc = (half_diff * half_diff + m.cov_xp * m.cov_xp).sqrt();
    let mid = 0.5 * (m.var_x + m.var_p);
    let (lo, hi) = (mid - disc, mid + disc);
    if lo <= 0.0 {
        return Err(StateError::NonPositiveEigenvalue(lo));
    }
    let alpha = if disc == 0.0 {
        0.0
    } else {
        0.5 * f64::atan2(2.0 * m.cov_xp, m.var_x - m.var_p)
    };
    let d = m.mean_x.hypot(m.mean_p);
    let beta = if d == 0.0 { 0.0 } else { f64::atan2(m.mean_p, m.mean_x) };
    GaussianParams::from_eigen(hi.sqrt(), lo.sqrt(), alpha, d, beta)
}

/// Rotates a state: the new `x` statistics are those of
/// `x cos(phi) + p sin(phi)`. Equivalently `alpha -> alpha - phi` and
/// `beta -> beta - phi`, canonicalized.
pub fn rotate(s: &GaussianParams, phi: f64) -> GaussianParams {
    let alpha = if s.q == 1.0 { 0.0 } else { wrap_half_turn(s.alpha - phi) };
    let beta = if s.d == 0.0 { 0.0 } else { wrap_full_turn(s.beta - phi) };
    GaussianParams { alpha, beta, ..*s }
}

/// Non-equilibrium energy ratio of a reference.
///
/// Energy accounting uses the total `n + 1/2 = <x^2 + p^2> / 4`, the only
/// choice under which `delta_disp = d^2 / (2 r^2)`,
/// `delta_sq = (q - 1/q)^2 / 2`, and additivity hold simultaneously.
pub fn ner(reference: &ReferenceSpec) -> NERDecomposition {
    let p = reference.params();
    let delta_disp = p.d * p.d / (2.0 * p.r * p.r);
    let sq = p.q - 1.0 / p.q;
    let delta_sq = 0.5 * sq * sq;
    let delta = delta_disp + delta_sq;
    NERDecomposition {
        delta,
        gamma: (delta > 0.0).then_some(delta_disp / delta),
        delta_disp,
        delta_sq,
    }
}

/// Builds the unique canonical reference with thermal std-dev `r`, total
/// non-equilibrium energy ratio `delta`, and displacement share `gamma`.
pub fn reference_from_ner(r: f64, delta: f64, gamma: f64) -> Result<ReferenceSpec, StateError> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(StateError::InvalidNer(delta));
    }
    if !(gamma.is_finite() && (0.0..=1.0).contains(&gamma)) {
        return Err(StateError::InvalidRatio(gamma));
    }
    let d = r * (2.0 * gamma * delta).sqrt();
    // q - 1/q = s with q >= 1 is the positive root of q^2 - s q - 1 = 0.
    let s = (2.0 * (1.0 - gamma) * delta).sqrt();
    let q = 0.5 * (s + (s * s + 4.0).sqrt());
    ReferenceSpec::from_rqd(r, q.max(1.0), d)
}

/// Formats a state as the plain-text record accepted by
/// [`parse_state_record`].
pub fn format_state_record(s: &GaussianParams) -> String {
    let mut out = String::new();
    for (k, v) in [
        ("r", s.r),
        ("q", s.q),
        ("alpha", s.alpha),
        ("d", s.d),
        ("beta", s.beta),
    ] {
        writeln!(out, "{k} = {v}").unwrap();
    }
    out
}

fn record_pairs(text: &str) -> Result<Vec<(String, f64)>, StateError> {
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        for field in line.split([',', ';']) {
            let field = field.trim();
            if field.is_empty() || field.starts_with('#') {
                continue;
            }
            let (key, value) = field.split_once('=').ok_or_else(|| {
                StateError::Record(format!("line {}: expected key=value, got {field:?}", lineno + 1))
            })?;
            let value = parse_angle(value).map_err(|e| {
                StateError::Record(format!("line {}: key {:?}: {e}", lineno + 1, key.trim()))
            })?;
            pairs.push((key.trim().to_ascii_lowercase(), value));
        }
    }
    Ok(pairs)
}

/// Parses a key-value state record.
///
/// Keys are `r, q, alpha, d, beta` (physical form) or `b, c, alpha, d, beta`
/// (eigen form); fields may be separated by newlines, commas, or
/// semicolons. Omitted keys default to the vacuum values (`r = q = 1`,
/// angles and displacement 0). Values may use `pi` fractions (`alpha =
/// pi/4`). Unknown keys and mixing `r`/`q` with `b`/`c` are errors.
pub fn parse_state_record(text: &str) -> Result<GaussianParams, StateError> {
    let mut r = None;
    let mut q = None;
    let mut b = None;
    let mut c = None;
    let mut alpha = 0.0;
    let mut d = 0.0;
    let mut beta = 0.0;
    for (key, value) in record_pairs(text)? {
        let slot = match key.as_str() {
            "r" => &mut r,
            "q" => &mut q,
            "b" => &mut b,
            "c" => &mut c,
            "alpha" => {
                alpha = value;
                continue;
            }
            "d" => {
                d = value;
                continue;
            }
            "beta" => {
                beta = value;
                continue;
            }
            _ => return Err(StateError::Record(format!("unknown key {key:?}"))),
        };
        if slot.replace(value).is_some() {
            return Err(StateError::Record(format!("duplicate key {key:?}")));
        }
    }
    match (r, q, b, c) {
        (None, None, Some(b), Some(c)) => GaussianParams::from_eigen(b, c, alpha, d, beta),
        (r, q, None, None) => GaussianParams::new(r.unwrap_or(1.0), q.unwrap_or(1.0), alpha, d, beta),
        _ => Err(StateError::Record(
            "use either r/q or b/c, not a mixture".into(),
        )),
    }
}

/// Parses a reference record: either direct keys `r, q, d` (or `b, c, d`) or
/// the energy-ratio triple `r, delta, gamma`.
pub fn parse_reference_record(text: &str) -> Result<ReferenceSpec, StateError> {
    let pairs = record_pairs(text)?;
    let has = |k: &str| pairs.iter().any(|(key, _)| key == k);
    if has("delta") || has("gamma") {
        let mut r = 1.0;
        let mut delta = 0.0;
        let mut gamma = 0.0;
        for (key, value) in pairs {
            match key.as_str() {
                "r" => r = value,
                "delta" => delta = value,
                "gamma" => gamma = value,
                _ => {
                    return Err(StateError::Record(format!(
                        "unknown key {key:?} in energy-ratio reference (expected r, delta, gamma)"
                    )))
                }
            }
        }
        reference_from_ner(r, delta, gamma)
    } else {
        for (key, _) in &pairs {
            if key == "alpha" || key == "beta" {
                return Err(StateError::Record(format!(
                    "reference directions are fixed to zero; remove key {key:?}"
                )));
            }
        }
        ReferenceSpec::new(parse_state_record(text)?)
    }
}

/// An angle compares equal to a grid angle when within absolute 1e-6; used
/// when locating required phases in measured moment sets. The slack covers
/// files that record pi fractions to six printed digits; real angle grids
/// are degrees apart, so collisions are not a concern.
pub fn same_angle(a: f64, b: f64) -> bool {
    angles::wrapped_diff(a, b, 2.0 * std::f64::consts::PI).abs() < 1e-6
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    #[test]
    fn vacuum_moments_are_identity() {
        let m = params_to_moments(&GaussianParams::vacuum());
        assert_eq!(
            m,
            MomentForm { mean_x: 0.0, mean_p: 0.0, var_x: 1.0, var_p: 1.0, cov_xp: 0.0 }
        );
    }

    #[test]
    fn axis_aligned_squeeze_and_displacement() {
        let s = GaussianParams::new(1.0, 2.0, 0.0, 2.0, 0.0).unwrap();
        let m = params_to_moments(&s);
        assert_relative_eq!(m.mean_x, 2.0);
        assert_abs_diff_eq!(m.mean_p, 0.0);
        assert_relative_eq!(m.var_x, 4.0);
        assert_relative_eq!(m.var_p, 0.25);
        assert_abs_diff_eq!(m.cov_xp, 0.0);
    }

    #[test]
    fn bright_squeezed_signal_moments() {
        let s = GaussianParams::from_eigen(237.0, 86.0, 0.7, 158.0, 0.2).unwrap();
        let m = params_to_moments(&s);
        assert_relative_eq!(m.var_x, 35927.40373033673, max_relative = 1e-12);
        assert_relative_eq!(m.var_p, 27637.596269663274, max_relative = 1e-12);
        assert_relative_eq!(m.cov_xp, 24031.669840363586, max_relative = 1e-12);
        assert_relative_eq!(m.var_x + m.var_p, 237.0f64.powi(2) + 86.0f64.powi(2));
    }

    #[test]
    fn eigen_recovery_from_diagonal() {
        let m = MomentForm { mean_x: 0.0, mean_p: 0.0, var_x: 4.0, var_p: 1.0, cov_xp: 0.0 };
        let s = moments_to_params(&m).unwrap();
        assert_relative_eq!(s.b(), 2.0);
        assert_relative_eq!(s.c(), 1.0);
        assert_eq!(s.alpha(), 0.0);
        assert_eq!(s.d(), 0.0);
    }

    #[test]
    fn eigen_recovery_off_diagonal() {
        // Eigenvalues of [[2.5, 1.5], [1.5, 2.5]] are {4, 1}.
        let m = MomentForm { mean_x: 0.0, mean_p: 0.0, var_x: 2.5, var_p: 2.5, cov_xp: 1.5 };
        let s = moments_to_params(&m).unwrap();
        assert_relative_eq!(s.b(), 2.0, max_relative = 1e-12);
        assert_relative_eq!(s.c(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(s.alpha(), FRAC_PI_4, max_relative = 1e-12);
    }

    #[test]
    fn isotropic_covariance_ties_alpha_to_zero() {
        let m = MomentForm { mean_x: 0.0, mean_p: 0.0, var_x: 3.0, var_p: 3.0, cov_xp: 0.0 };
        let s = moments_to_params(&m).unwrap();
        assert_relative_eq!(s.b(), 3.0f64.sqrt());
        assert_relative_eq!(s.c(), 3.0f64.sqrt());
        assert_eq!(s.alpha(), 0.0);
        assert_eq!(s.q(), 1.0);
    }

    #[test]
    fn moments_to_params_rejects_bad_variances() {
        let m = MomentForm { mean_x: 0.0, mean_p: 0.0, var_x: -1.0, var_p: 1.0, cov_xp: 0.0 };
        assert!(matches!(
            moments_to_params(&m),
            Err(StateError::NonPositiveVariance { name: "var_x", .. })
        ));
        // Positive variances but an eigenvalue below zero.
        let m = MomentForm { mean_x: 0.0, mean_p: 0.0, var_x: 1.0, var_p: 1.0, cov_xp: 2.0 };
        assert!(matches!(
            moments_to_params(&m),
            Err(StateError::NonPositiveEigenvalue(_))
        ));
    }

    #[test]
    fn heisenberg_violations_are_allowed_but_flagged() {
        let m = MomentForm { mean_x: 0.0, mean_p: 0.0, var_x: 0.5, var_p: 0.5, cov_xp: 0.0 };
        let s = moments_to_params(&m).unwrap();
        assert!(!s.is_physical());
        assert!(!m.is_physical());
    }

    #[test]
    fn rotate_zero_is_identity() {
        let s = GaussianParams::new(1.3, 1.7, 0.9, 2.0, 4.0).unwrap();
        assert_eq!(rotate(&s, 0.0), s);
    }

    #[test]
    fn rotate_quarter_turn_moves_x_displacement_to_minus_p() {
        let s = GaussianParams::coherent(2.0, 0.0).unwrap();
        let m = params_to_moments(&rotate(&s, FRAC_PI_2));
        assert_abs_diff_eq!(m.mean_x, 0.0, epsilon = 1e-15);
        assert_relative_eq!(m.mean_p, -2.0, max_relative = 1e-12);
    }

    #[test]
    fn rotate_half_turn_negates_means_keeps_covariance() {
        let s = GaussianParams::new(1.2, 1.5, 0.4, 3.0, 1.0).unwrap();
        let m0 = params_to_moments(&s);
        let m1 = params_to_moments(&rotate(&s, PI));
        assert_relative_eq!(m1.mean_x, -m0.mean_x, max_relative = 1e-12);
        assert_relative_eq!(m1.mean_p, -m0.mean_p, max_relative = 1e-12);
        assert_relative_eq!(m1.var_x, m0.var_x, max_relative = 1e-12);
        assert_relative_eq!(m1.var_p, m0.var_p, max_relative = 1e-12);
        assert_relative_eq!(m1.cov_xp, m0.cov_xp, max_relative = 1e-9);
    }

    #[test]
    fn rotated_moment_form_matches_rotated_params() {
        let s = GaussianParams::new(1.2, 1.8, 1.1, 2.5, 5.0).unwrap();
        for phi in [0.3, 1.0, 2.2, 4.4] {
            let a = params_to_moments(&rotate(&s, phi));
            let b = params_to_moments(&s).rotated(phi);
            assert_relative_eq!(a.mean_x, b.mean_x, max_relative = 1e-12, epsilon = 1e-12);
            assert_relative_eq!(a.mean_p, b.mean_p, max_relative = 1e-12, epsilon = 1e-12);
            assert_relative_eq!(a.var_x, b.var_x, max_relative = 1e-12);
            assert_relative_eq!(a.var_p, b.var_p, max_relative = 1e-12);
            assert_relative_eq!(a.cov_xp, b.cov_xp, max_relative = 1e-9, epsilon = 1e-12);
        }
    }

    #[test]
    fn ner_examples() {
        let thermal = ReferenceSpec::thermal(1.7).unwrap();
        let n = ner(&thermal);
        assert_eq!(n.delta, 0.0);
        assert_eq!(n.gamma, None);

        let displaced = ReferenceSpec::from_rqd(2.0f64.sqrt(), 1.0, 2.0).unwrap();
        let n = ner(&displaced);
        assert_relative_eq!(n.delta_disp, 1.0, max_relative = 1e-12);
        assert_eq!(n.gamma, Some(1.0));

        let squeezed = ReferenceSpec::from_rqd(1.0, 2.0, 0.0).unwrap();
        let n = ner(&squeezed);
        assert_relative_eq!(n.delta_sq, 1.125);
        assert_eq!(n.gamma, Some(0.0));
    }

    #[test]
    fn reference_from_ner_examples() {
        let r = reference_from_ner(1.0, 0.0, 0.3).unwrap();
        assert_eq!(r.params().d(), 0.0);
        assert_eq!(r.params().q(), 1.0);

        let r = reference_from_ner(1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(r.params().d(), 2.0f64.sqrt(), max_relative = 1e-12);
        assert_eq!(r.params().q(), 1.0);

        let r = reference_from_ner(1.0, 1.125, 0.0).unwrap();
        assert_relative_eq!(r.params().q(), 2.0, max_relative = 1e-12);
        assert_eq!(r.params().d(), 0.0);

        assert!(matches!(
            reference_from_ner(1.0, 1.0, 1.5),
            Err(StateError::InvalidRatio(_))
        ));
    }

    #[test]
    fn ner_round_trip() {
        for (r, delta, gamma) in [(1.0, 1.0, 0.5), (2.0, 10.0, 1.0), (5.0, 0.1, 0.0), (1.5, 3.0, 0.25)]
        {
            let rf = reference_from_ner(r, delta, gamma).unwrap();
            let n = ner(&rf);
            assert_relative_eq!(n.delta, delta, max_relative = 1e-12);
            if delta > 0.0 {
                assert_relative_eq!(n.gamma.unwrap(), gamma, max_relative = 1e-12, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn pure_displacement_ner_is_r_invariant() {
        for r in [1.0, 2.0, 7.5] {
            let k = 0.8;
            let rf = ReferenceSpec::from_rqd(r, 1.0, k * r).unwrap();
            assert_relative_eq!(ner(&rf).delta_disp, k * k / 2.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn classicality_flag() {
        assert!(ReferenceSpec::from_rqd(1.5, 1.2, 0.0).unwrap().is_classical());
        assert!(!ReferenceSpec::from_rqd(1.0, 1.2, 0.0).unwrap().is_classical());
    }

    #[test]
    fn record_round_trip() {
        let s = GaussianParams::new(1.3, 2.0, 0.7, 158.0, 0.2).unwrap();
        let parsed = parse_state_record(&format_state_record(&s)).unwrap();
        assert_eq!(parsed, s);
    }

    #[test]
    fn record_accepts_eigen_form_and_inline_separators() {
        let s = parse_state_record("b=237, c=86, alpha=0.7, d=158, beta=0.2").unwrap();
        assert_relative_eq!(s.b(), 237.0, max_relative = 1e-12);
        assert_relative_eq!(s.c(), 86.0, max_relative = 1e-12);
        assert_relative_eq!(s.alpha(), 0.7);
    }

    #[test]
    fn record_accepts_pi_literals() {
        let s = parse_state_record("r=1, q=2, alpha=pi/4").unwrap();
        assert_relative_eq!(s.alpha(), FRAC_PI_4);
    }

    #[test]
    fn record_rejects_unknown_and_mixed_keys() {
        assert!(parse_state_record("r=1, volume=3").is_err());
        assert!(parse_state_record("r=1, b=2, c=1").is_err());
        assert!(parse_state_record("r=1 q=2").is_err());
    }

    #[test]
    fn reference_record_forms() {
        let by_ner = parse_reference_record("r=1, delta=1.125, gamma=0").unwrap();
        assert_relative_eq!(by_ner.params().q(), 2.0, max_relative = 1e-12);
        let direct = parse_reference_record("r=1, q=2").unwrap();
        assert_eq!(direct.params().q(), 2.0);
        assert!(parse_reference_record("r=1, q=2, alpha=0.3").is_err());
        assert!(parse_reference_record("delta=1, gamma=0.5, q=2").is_err());
    }

    fn arb_params() -> impl Strategy<Value = GaussianParams> {
        (
            0.5f64..5.0,
            1.0f64..4.0,
            -10.0f64..10.0,
            0.0f64..50.0,
            -10.0f64..10.0,
        )
            .prop_map(|(r, q, alpha, d, beta)| GaussianParams::new(r, q, alpha, d, beta).unwrap())
    }

    proptest! {
        #[test]
        fn canonical_ranges_hold(s in arb_params()) {
            prop_assert!((0.0..PI).contains(&s.alpha()));
            prop_assert!((0.0..2.0 * PI).contains(&s.beta()));
        }

        #[test]
        fn trace_identity(s in arb_params()) {
            let m = params_to_moments(&s);
            let expected = s.b() * s.b() + s.c() * s.c();
            prop_assert!((m.var_x + m.var_p - expected).abs() <= 1e-9 * expected);
        }

        #[test]
        fn moment_round_trip(s in arb_params()) {
            let m = params_to_moments(&s);
            let back = moments_to_params(&m).unwrap();
            let m2 = params_to_moments(&back);
            let scale = m.var_x.abs() + m.var_p.abs() + 1.0;
            prop_assert!((m.var_x - m2.var_x).abs() <= 1e-9 * scale);
            prop_assert!((m.var_p - m2.var_p).abs() <= 1e-9 * scale);
            prop_assert!((m.cov_xp - m2.cov_xp).abs() <= 1e-9 * scale);
            prop_assert!((m.mean_x - m2.mean_x).abs() <= 1e-9 * scale);
            prop_assert!((m.mean_p - m2.mean_p).abs() <= 1e-9 * scale);
        }

        #[test]
        fn eigen_round_trip_is_exact_for_separated_eigenvalues(
            b in 1.5f64..40.0,
            ratio in 0.05f64..0.65,
            alpha in 0.0f64..3.0,
            d in 0.0f64..20.0,
            beta in 0.0f64..6.0,
        ) {
            let c = b * ratio;
            let s = GaussianParams::from_eigen(b, c, alpha, d, beta).unwrap();
            let back = moments_to_params(&params_to_moments(&s)).unwrap();
            prop_assert!((back.b() - s.b()).abs() <= 1e-12 * s.b());
            prop_assert!((back.c() - s.c()).abs() <= 1e-12 * s.b());
            prop_assert!(crate::angles::wrapped_diff(back.alpha(), s.alpha(), PI).abs() <= 1e-9);
            prop_assert!((back.d() - s.d()).abs() <= 1e-12 * (1.0 + s.d()));
            if s.d() > 1e-9 {
                prop_assert!(
                    crate::angles::wrapped_diff(back.beta(), s.beta(), 2.0 * PI).abs() <= 1e-9
                );
            }
        }

        #[test]
        fn rotation_composes(s in arb_params(), a in -6.0f64..6.0, b in -6.0f64..6.0) {
            let lhs = rotate(&rotate(&s, a), b);
            let rhs = rotate(&s, a + b);
            prop_assert!(crate::angles::wrapped_diff(lhs.alpha(), rhs.alpha(), PI).abs() <= 1e-9);
            prop_assert!(
                crate::angles::wrapped_diff(lhs.beta(), rhs.beta(), 2.0 * PI).abs() <= 1e-9
            );
        }

        #[test]
        fn rotation_preserves_energy(s in arb_params(), phi in -6.0f64..6.0) {
            let rotated = rotate(&s, phi);
            let t0 = s.total_second_moment();
            prop_assert!((rotated.total_second_moment() - t0).abs() <= 1e-9 * t0);
        }
    }

    #[test]
    fn quarter_turn_swaps_x_and_p_statistics() {
        let s = GaussianParams::new(1.1, 1.9, 0.0, 2.0, 0.0).unwrap();
        let m = params_to_moments(&s);
        let mr = params_to_moments(&rotate(&s, FRAC_PI_2));
        assert_relative_eq!(mr.var_x, m.var_p, max_relative = 1e-12);
        assert_relative_eq!(mr.var_p, m.var_x, max_relative = 1e-12);
        assert_relative_eq!(mr.mean_x, m.mean_p, max_relative = 1e-12, epsilon = 1e-12);
    }
}
