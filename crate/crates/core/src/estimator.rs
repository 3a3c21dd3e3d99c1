//! Recovery of signal parameters from measured Stokes moments with a
//! known reference.
//!
//! What is recoverable depends on the reference. A displaced reference
//! (`d_R != 0`) exposes the signal's first moments through the mean of the
//! difference observable; a phase-asymmetric reference (`v != 0`) exposes
//! the second moments through its phase dependence; a thermal reference
//! leaves only the energy, unless the signal is known to be Gaussian and
//! of a particular shape, in which case the second moment of the sum
//! observable pins the remaining magnitudes (but never directions).
//!
//! `estimate_general` and `estimate_cosine_fit` are two algebraically
//! distinct reductions of the same data and must agree exactly on
//! noise-free input; keeping both is a deliberate cross-check, as is the
//! pair of special-case estimators that work without any first-moment
//! information.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

use thiserror::Error;

use crate::angles::{wrap_full_turn, wrap_half_turn, wrapped_diff};
use crate::moments::{AngleMoments, OrderingConstants, StokesMomentSet};
use crate::states::{moments_to_params, params_to_moments, MomentForm, ReferenceSpec};

/// Relative guard below which a reference coefficient counts as zero.
pub const EPS_FEASIBLE: f64 = 1e-9;
/// `|v|/u` below this triggers an ill-conditioning warning: the phase
/// oscillation is so weak that second-moment noise is strongly amplified.
pub const CONDITION_WARN: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum EstimatorError {
    /// The reference cannot support this estimate; the message names the
    /// violated condition.
    #[error("estimate is infeasible: {0}")]
    Infeasible(String),
    #[error("moment set has no entry at phase {0}")]
    MissingAngle(f64),
    #[error("no real solution: {0}")]
    NoRealSolution(String),
}

/// Which parts of the signal the data can determine.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Feasibility {
    /// First and second moments, hence all five parameters.
    Full,
    /// Second moments only: displacement and variance cannot be separated.
    SecondMomentsOnly,
    /// Only the total energy.
    EnergyOnly,
    /// Energy plus shape magnitudes from the sum-observable second moment,
    /// directions unrecoverable.
    EnergyPlusMagnitudes,
    /// Nothing recoverable. The standard classification never produces
    /// this (the energy is always accessible); it exists for callers that
    /// need to mark a parameter as out of reach.
    Infeasible,
}

impl std::fmt::Display for Feasibility {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Feasibility::Full => "full",
            Feasibility::SecondMomentsOnly => "second-moments-only",
            Feasibility::EnergyOnly => "energy-only",
            Feasibility::EnergyPlusMagnitudes => "energy-plus-magnitudes",
            Feasibility::Infeasible => "infeasible",
        })
    }
}

/// Prior knowledge about the signal, used only for feasibility
/// classification and for choosing special-case estimators.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Assumptions {
    /// The signal carries no displacement (`d_S = 0`).
    pub squeezed_signal: bool,
    /// The signal covariance is isotropic (`b_S = c_S`).
    pub displaced_symmetric: bool,
    /// The signal is a Gaussian state (enables quartic-moment inversion).
    pub gaussian: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GaussianCase {
    Squeezed,
    DisplacedSymmetric,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EstimateWarning {
    /// `|v|/u` is tiny; second-moment estimates are noise-amplified.
    IllConditioned { v_over_u: f64 },
    /// The fitted oscillation amplitude sits inside the noise floor; the
    /// shape was collapsed to `b = c`.
    DegenerateShape,
    /// A fitted squared magnitude came out negative beyond the noise
    /// tolerance; the corresponding field is unset.
    NegativeEnergy { quantity: &'static str, value: f64 },
    /// The sampled covariance was unphysical; the reported shape is its
    /// projection onto the boundary (negative eigenvalues clamped to zero).
    EigenFailed { reason: String },
    /// Two solution branches are statistically indistinguishable; the
    /// alternate branch is attached.
    AmbiguousSolution { discriminant: f64, tolerance: f64 },
}

/// Standard errors for the fields of a [`SignalEstimate`], populated by
/// `estimate_general` on data that carries sampling errors.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EstimateSE {
    pub mean_x: Option<f64>,
    pub mean_p: Option<f64>,
    pub second_x: Option<f64>,
    pub second_p: Option<f64>,
    pub second_xp: Option<f64>,
    pub b: Option<f64>,
    pub c: Option<f64>,
    pub alpha: Option<f64>,
    pub d: Option<f64>,
    pub beta: Option<f64>,
    pub energy: Option<f64>,
}

/// Estimated signal description. Fields are `None` when the data cannot
/// determine them; `feasibility` says which group that is.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalEstimate {
    pub feasibility: Feasibility,
    pub mean_x: Option<f64>,
    pub mean_p: Option<f64>,
    /// Raw second moments `<x^2>`, `<p^2>`, `<(xp+px)/2>`.
    pub second_x: Option<f64>,
    pub second_p: Option<f64>,
    pub second_xp: Option<f64>,
    pub var_x: Option<f64>,
    pub var_p: Option<f64>,
    pub cov_xp: Option<f64>,
    pub b: Option<f64>,
    pub c: Option<f64>,
    /// Covariance axis direction, always modulo pi.
    pub alpha: Option<f64>,
    pub d: Option<f64>,
    pub beta: Option<f64>,
    /// Period on which `beta` is identified: `2 pi` when first moments
    /// were available, `pi` when recovered from second moments alone.
    pub beta_period: Option<f64>,
    /// Total second moment `b^2 + c^2 + d^2`.
    pub energy: Option<f64>,
    /// Whether the estimated covariance satisfies the Heisenberg bound;
    /// noisy data may legitimately fail it.
    pub physical: Option<bool>,
    pub warnings: Vec<EstimateWarning>,
    pub se: EstimateSE,
    /// Secondary solution branch when the data admits one.
    pub alternate: Option<Box<SignalEstimate>>,
}

impl SignalEstimate {
    fn blank(feasibility: Feasibility) -> Self {
        Self {
            feasibility,
            mean_x: None,
            mean_p: None,
            second_x: None,
            second_p: None,
            second_xp: None,
            var_x: None,
            var_p: None,
            cov_xp: None,
            b: None,
            c: None,
            alpha: None,
            d: None,
            beta: None,
            beta_period: None,
            energy: None,
            physical: None,
            warnings: Vec::new(),
            se: EstimateSE::default(),
            alternate: None,
        }
    }
}

/// Reference-derived coefficients of the moment formulas.
#[derive(Clone, Copy, Debug)]
pub struct EstimatorCoefficients {
    pub u: f64,
    pub v: f64,
    pub d_r: f64,
    /// `b_R^2 + c_R^2 + d_R^2`.
    pub ref_energy: f64,
}

impl EstimatorCoefficients {
    pub fn from_reference(reference: &ReferenceSpec) -> Self {
        let p = reference.params();
        let (b2, c2, d2) = (p.b() * p.b(), p.c() * p.c(), p.d() * p.d());
        EstimatorCoefficients {
            u: (d2 + b2 + c2) / 8.0,
            v: (d2 + b2 - c2) / 8.0,
            d_r: p.d(),
            ref_energy: p.total_second_moment(),
        }
    }

    /// First moments are visible: `d_R^2` is non-negligible against the
    /// reference covariance scale.
    pub fn mean_feasible(&self) -> bool {
        let cov_scale = self.ref_energy - self.d_r * self.d_r;
        self.d_r * self.d_r > EPS_FEASIBLE * cov_scale
    }

    /// Second moments are visible: the oscillation coefficient `v` is
    /// non-negligible against the offset coefficient `u`.
    pub fn seconds_feasible(&self) -> bool {
        self.v.abs() > EPS_FEASIBLE * self.u
    }

    pub fn v_over_u(&self) -> f64 {
        self.v / self.u
    }
}

/// Classifies what a reference can deliver, given prior assumptions about
/// the signal. Pure; never fails.
pub fn feasibility_check(reference: &ReferenceSpec, assumptions: &Assumptions) -> Feasibility {
    let co = EstimatorCoefficients::from_reference(reference);
    if co.mean_feasible() {
        return Feasibility::Full;
    }
    if co.seconds_feasible() {
        // Without first moments a general signal's displacement cannot be
        // separated from its covariance, but either shape assumption
        // removes the degeneracy.
        if assumptions.squeezed_signal || assumptions.displaced_symmetric {
            return Feasibility::Full;
        }
        return Feasibility::SecondMomentsOnly;
    }
    if assumptions.gaussian && (assumptions.squeezed_signal || assumptions.displaced_symmetric) {
        return Feasibility::EnergyPlusMagnitudes;
    }
    Feasibility::EnergyOnly
}

fn entry_at(ms: &StokesMomentSet, phi: f64) -> Result<&AngleMoments, EstimatorError> {
    ms.entry_at(phi).ok_or(EstimatorError::MissingAngle(phi))
}

/// The symmetric-ordered part of the stored second moment: what the
/// inversion formulas consume.
fn symmetric_second_s2(ms: &StokesMomentSet, e: &AngleMoments) -> f64 {
    ms.quantum_second_s2(e) - OrderingConstants::VERIFIED.kappa2
}

fn infeasible_mean(co: &EstimatorCoefficients) -> EstimatorError {
    EstimatorError::Infeasible(format!(
        "reference carries no displacement: d_R = {} (first moments of the signal are invisible)",
        co.d_r
    ))
}

fn infeasible_seconds() -> EstimatorError {
    EstimatorError::Infeasible("reference is thermal: v = 0".to_string())
}

/// Signal first moments from the difference-observable means at phases 0
/// and pi/2.
pub fn estimate_mean(
    ms: &StokesMomentSet,
    reference: &ReferenceSpec,
) -> Result<(f64, f64), EstimatorError> {
    let co = EstimatorCoefficients::from_reference(reference);
    let e0 = entry_at(ms, 0.0)?;
    let e90 = entry_at(ms, FRAC_PI_2)?;
    if !co.mean_feasible() {
        return Err(infeasible_mean(&co));
    }
    Ok((2.0 * e0.mean_s2 / co.d_r, 2.0 * e90.mean_s2 / co.d_r))
}

/// Signal raw second moments from the second-moment sinusoid at phases
/// {0, pi/4, pi/2}: the 2x2 system at the orthogonal pair, then the
/// cross moment from the diagonal phase.
pub fn estimate_second_moments(
    ms: &StokesMomentSet,
    reference: &ReferenceSpec,
) -> Result<(f64, f64, f64), EstimatorError> {
    let co = EstimatorCoefficients::from_reference(reference);
    let a = symmetric_second_s2(ms, entry_at(ms, 0.0)?);
    let c = symmetric_second_s2(ms, entry_at(ms, FRAC_PI_4)?);
    let b = symmetric_second_s2(ms, entry_at(ms, FRAC_PI_2)?);
    if !co.seconds_feasible() {
        return Err(infeasible_seconds());
    }
    let (second_x, second_p, second_xp) = invert_seconds(a, b, c, &co);
    Ok((second_x, second_p, second_xp))
}

/// Solves [[u+v, u-v], [u-v, u+v]] (X, P)^T = (A, B)^T, then the cross
/// moment from the pi/4 value C = u(X+P) + 2v XP.
fn invert_seconds(a: f64, b: f64, c: f64, co: &EstimatorCoefficients) -> (f64, f64, f64) {
    let det = 4.0 * co.u * co.v;
    let second_x = ((co.u + co.v) * a - (co.u - co.v) * b) / det;
    let second_p = ((co.u + co.v) * b - (co.u - co.v) * a) / det;
    let second_xp = (c - co.u * (second_x + second_p)) / (2.0 * co.v);
    (second_x, second_p, second_xp)
}

/// Total signal second moment from the sum observable, which sees it
/// regardless of the reference shape.
fn energy_from_s0(ms: &StokesMomentSet, co: &EstimatorCoefficients) -> (f64, Option<f64>) {
    (
        4.0 * (ms.mean_s0 + 1.0) - co.ref_energy,
        ms.se_mean_s0.map(|se| 4.0 * se),
    )
}

struct GeneralPoint {
    second_x: f64,
    second_p: f64,
    second_xp: f64,
    means: Option<(f64, f64)>,
    central: Option<MomentForm>,
    /// `(b, c, alpha)`; boundary-projected when the sampled covariance is
    /// unphysical, with `eigen_err` holding the diagnosis.
    shape: Option<(f64, f64, f64)>,
    /// `(d, beta)` from the first moments.
    polar: Option<(f64, f64)>,
    eigen_err: Option<String>,
}

/// Pure reduction of the five informative data values
/// `z = [m1(0), m1(pi/2), A(0), A(pi/4), A(pi/2)]` (A = symmetric-ordered
/// second moments). Shared by the point estimate and the standard-error
/// Jacobian so both see the same map.
fn general_algebra(z: &[f64; 5], co: &EstimatorCoefficients, with_means: bool) -> GeneralPoint {
    let (second_x, second_p, second_xp) = invert_seconds(z[2], z[4], z[3], co);
    if !with_means {
        return GeneralPoint {
            second_x,
            second_p,
            second_xp,
            means: None,
            central: None,
            shape: None,
            polar: None,
            eigen_err: None,
        };
    }
    let mean_x = 2.0 * z[0] / co.d_r;
    let mean_p = 2.0 * z[1] / co.d_r;
    let central = MomentForm {
        mean_x,
        mean_p,
        var_x: second_x - mean_x * mean_x,
        var_p: second_p - mean_p * mean_p,
        cov_xp: second_xp - mean_x * mean_p,
    };
    let d = mean_x.hypot(mean_p);
    let beta = if d == 0.0 { 0.0 } else { wrap_full_turn(f64::atan2(mean_p, mean_x)) };
    let (shape, eigen_err) = match moments_to_params(&central) {
        Ok(p) => (Some((p.b(), p.c(), p.alpha())), None),
        Err(e) => {
            // Shot noise can push the smaller covariance eigenvalue below
            // zero at low shot counts; project it to the boundary so the
            // estimate stays usable and keep the diagnosis as a warning.
            let half_diff = 0.5 * (central.var_x - central.var_p);
            let root = (half_diff * half_diff + central.cov_xp * central.cov_xp).sqrt();
            let mid = 0.5 * (central.var_x + central.var_p);
            let alpha = if root == 0.0 {
                0.0
            } else {
                wrap_half_turn(0.5 * f64::atan2(2.0 * central.cov_xp, central.var_x - central.var_p))
            };
            let b = (mid + root).max(0.0).sqrt();
            let c = (mid - root).max(0.0).sqrt();
            (Some((b, c, alpha)), Some(e.to_string()))
        }
    };
    GeneralPoint {
        second_x,
        second_p,
        second_xp,
        means: Some((mean_x, mean_p)),
        central: Some(central),
        shape,
        polar: Some((d, beta)),
        eigen_err,
    }
}

/// Output vector of [`general_algebra`] for finite differencing; angular
/// entries are differenced with wrapping.
fn general_outputs(pt: &GeneralPoint) -> [Option<f64>; 10] {
    let (mx, mp) = match pt.means {
        Some((x, p)) => (Some(x), Some(p)),
        None => (None, None),
    };
    [
        mx,
        mp,
        Some(pt.second_x),
        Some(pt.second_p),
        Some(pt.second_xp),
        pt.shape.map(|s| s.0),
        pt.shape.map(|s| s.1),
        pt.shape.map(|s| s.2),
        pt.polar.map(|m| m.0),
        pt.polar.map(|m| m.1),
    ]
}

/// Wrap period per output index; `None` means plain difference.
const OUTPUT_PERIODS: [Option<f64>; 10] =
    [None, None, None, None, None, None, None, Some(PI), None, Some(TAU)];

/// Delta-method standard errors: numerical Jacobian of the estimation map
/// against the per-angle sampling covariance (mean and second moment of
/// the same shots are correlated; distinct angles are independent).
fn propagate_se(
    z: &[f64; 5],
    sig: &[[f64; 5]; 5],
    co: &EstimatorCoefficients,
    with_means: bool,
) -> [Option<f64>; 10] {
    let mut jac = [[None::<f64>; 5]; 10];
    for i in 0..5 {
        let h = 1e-6 * z[i].abs().max(1.0);
        let mut zp = *z;
        let mut zm = *z;
        zp[i] += h;
        zm[i] -= h;
        let op = general_outputs(&general_algebra(&zp, co, with_means));
        let om = general_outputs(&general_algebra(&zm, co, with_means));
        for k in 0..10 {
            jac[k][i] = match (op[k], om[k]) {
                (Some(p), Some(m)) => {
                    let diff = match OUTPUT_PERIODS[k] {
                        Some(period) => wrapped_diff(p, m, period),
                        None => p - m,
                    };
                    Some(diff / (2.0 * h))
                }
                _ => None,
            };
        }
    }
    let mut out = [None; 10];
    for k in 0..10 {
        let row: Option<Vec<f64>> = jac[k].iter().copied().collect();
        if let Some(row) = row {
            let mut var = 0.0;
            for i in 0..5 {
                for j in 0..5 {
                    var += row[i] * sig[i][j] * row[j];
                }
            }
            out[k] = Some(var.max(0.0).sqrt());
        }
    }
    out
}

/// Sampling covariance of `z` from the stored standard errors; `None` if
/// any needed error is missing (analytic input).
fn z_covariance(e0: &AngleMoments, e45: &AngleMoments, e90: &AngleMoments) -> Option<[[f64; 5]; 5]> {
    let mut sig = [[0.0; 5]; 5];
    sig[0][0] = e0.se_mean_s2?.powi(2);
    sig[1][1] = e90.se_mean_s2?.powi(2);
    sig[2][2] = e0.se_second_s2?.powi(2);
    sig[3][3] = e45.se_second_s2?.powi(2);
    sig[4][4] = e90.se_second_s2?.powi(2);
    let c0 = e0.cov_mean_second?;
    let c90 = e90.cov_mean_second?;
    sig[0][2] = c0;
    sig[2][0] = c0;
    sig[1][4] = c90;
    sig[4][1] = c90;
    Some(sig)
}

/// The standard pipeline: first moments from the means, second moments
/// from the sinusoid, covariance by subtraction, eigen decomposition.
/// Degrades gracefully: without a displaced reference it reports raw
/// second moments only; with a thermal reference it reports the energy.
pub fn estimate_general(
    ms: &StokesMomentSet,
    reference: &ReferenceSpec,
) -> Result<SignalEstimate, EstimatorError> {
    let co = EstimatorCoefficients::from_reference(reference);
    if !co.seconds_feasible() {
        // mean_feasible implies seconds_feasible (a displaced reference
        // has v >= d_R^2/8), so nothing beyond the energy is available.
        return Ok(estimate_thermal_reference(ms, reference));
    }
    let e0 = entry_at(ms, 0.0)?;
    let e45 = entry_at(ms, FRAC_PI_4)?;
    let e90 = entry_at(ms, FRAC_PI_2)?;
    let with_means = co.mean_feasible();

    let z = [
        e0.mean_s2,
        e90.mean_s2,
        symmetric_second_s2(ms, e0),
        symmetric_second_s2(ms, e45),
        symmetric_second_s2(ms, e90),
    ];
    let pt = general_algebra(&z, &co, with_means);

    let mut est = SignalEstimate::blank(if with_means {
        Feasibility::Full
    } else {
        Feasibility::SecondMomentsOnly
    });
    if co.v_over_u().abs() < CONDITION_WARN {
        est.warnings.push(EstimateWarning::IllConditioned { v_over_u: co.v_over_u() });
    }
    est.second_x = Some(pt.second_x);
    est.second_p = Some(pt.second_p);
    est.second_xp = Some(pt.second_xp);
    if let Some((mx, mp)) = pt.means {
        est.mean_x = Some(mx);
        est.mean_p = Some(mp);
    }
    if let Some(m) = &pt.central {
        est.var_x = Some(m.var_x);
        est.var_p = Some(m.var_p);
        est.cov_xp = Some(m.cov_xp);
        est.physical = Some(m.is_physical());
    }
    if let Some((b, c, alpha)) = pt.shape {
        est.b = Some(b);
        est.c = Some(c);
        est.alpha = Some(alpha);
    }
    if let Some((d, beta)) = pt.polar {
        est.d = Some(d);
        est.beta = Some(beta);
        est.beta_period = Some(TAU);
    }
    if let Some(reason) = pt.eigen_err {
        est.warnings.push(EstimateWarning::EigenFailed { reason });
    }
    let (energy, se_energy) = energy_from_s0(ms, &co);
    est.energy = Some(energy);
    est.se.energy = se_energy;

    if let Some(sig) = z_covariance(e0, e45, e90) {
        let se = propagate_se(&z, &sig, &co, with_means);
        est.se.mean_x = se[0];
        est.se.mean_p = se[1];
        est.se.second_x = se[2];
        est.se.second_p = se[3];
        est.se.second_xp = se[4];
        est.se.b = se[5];
        est.se.c = se[6];
        est.se.alpha = se[7];
        est.se.d = se[8];
        est.se.beta = se[9];
    }
    Ok(est)
}

/// Standard errors of the three symmetric-ordered second moments, if the
/// data carries them.
fn second_ses(
    e0: &AngleMoments,
    e45: &AngleMoments,
    e90: &AngleMoments,
) -> Option<(f64, f64, f64)> {
    Some((e0.se_second_s2?, e45.se_second_s2?, e90.se_second_s2?))
}

/// Shared sinusoid reduction for the shape paths: from offset-corrected
/// values (A, B, C) at {0, pi/2, pi/4}, recover the mean level
/// `sum = (A+B)/(2u)` and the oscillation `(amp, angle)` with
/// `A - B = 2 v amp cos(2 angle)` and `C - (A+B)/2 = v amp sin(2 angle)`.
struct SinusoidFit {
    sum: f64,
    amp: f64,
    angle: f64,
    /// 3-sigma noise floor on `amp`; zero on analytic data.
    amp_floor: f64,
    /// 3-sigma tolerance for squared-magnitude positivity checks.
    sq_tol: f64,
}

fn fit_sinusoid(
    a: f64,
    b: f64,
    c: f64,
    ses: Option<(f64, f64, f64)>,
    co: &EstimatorCoefficients,
) -> SinusoidFit {
    let sum = (a + b) / (2.0 * co.u);
    let cospart = (a - b) / (2.0 * co.v);
    let sinpart = (c - (a + b) / 2.0) / co.v;
    let amp = cospart.hypot(sinpart);
    let angle = wrap_half_turn(0.5 * sinpart.atan2(cospart));
    let (amp_floor, sq_tol) = match ses {
        Some((sa, sc, sb)) => {
            let se_cos = sa.hypot(sb) / (2.0 * co.v);
            let se_sin = (sc * sc + (sa * sa + sb * sb) / 4.0).sqrt() / co.v;
            let se_sum = sa.hypot(sb) / (2.0 * co.u);
            let se_amp = se_cos.hypot(se_sin);
            (3.0 * se_amp, 3.0 * 0.5 * (se_sum + se_amp))
        }
        None => (0.0, 1e-9 * (1.0 + sum.abs() + amp.abs())),
    };
    SinusoidFit { sum, amp, angle, amp_floor, sq_tol }
}

/// Splits `sum = b^2 + c^2` and `amp = b^2 - c^2` into `(b, c)`, handling
/// noise-driven negatives. Returns `(b, c, warnings)`.
fn split_shape(
    fit: &SinusoidFit,
    warnings: &mut Vec<EstimateWarning>,
) -> (Option<f64>, Option<f64>, f64) {
    let mut amp = fit.amp;
    let mut angle = fit.angle;
    if amp <= fit.amp_floor {
        // Oscillation indistinguishable from zero: collapse to an
        // isotropic shape. An exactly zero amplitude is a clean
        // degeneracy, not a data problem, so it carries no warning.
        if amp > 0.0 {
            warnings.push(EstimateWarning::DegenerateShape);
        }
        amp = 0.0;
        angle = 0.0;
    }
    let b2 = (fit.sum + amp) / 2.0;
    let c2 = (fit.sum - amp) / 2.0;
    let b = sq_root_checked(b2, "b^2", fit.sq_tol, warnings);
    let c = sq_root_checked(c2, "c^2", fit.sq_tol, warnings);
    (b, c, angle)
}

/// Square root of a fitted squared magnitude: clamps small negatives,
/// flags large ones.
fn sq_root_checked(
    value: f64,
    quantity: &'static str,
    tol: f64,
    warnings: &mut Vec<EstimateWarning>,
) -> Option<f64> {
    if value < -tol {
        warnings.push(EstimateWarning::NegativeEnergy { quantity, value });
        return None;
    }
    Some(value.max(0.0).sqrt())
}

/// Alternative full-signal path: subtract the displacement's contribution
/// to the second-moment sinusoid (computed from the estimated means), then
/// read the covariance shape off the remaining oscillation. Must agree
/// with [`estimate_general`] exactly on noise-free data.
pub fn estimate_cosine_fit(
    ms: &StokesMomentSet,
    reference: &ReferenceSpec,
) -> Result<SignalEstimate, EstimatorError> {
    let co = EstimatorCoefficients::from_reference(reference);
    let (mean_x, mean_p) = estimate_mean(ms, reference)?;
    if !co.seconds_feasible() {
        return Err(infeasible_seconds());
    }
    let e0 = entry_at(ms, 0.0)?;
    let e45 = entry_at(ms, FRAC_PI_4)?;
    let e90 = entry_at(ms, FRAC_PI_2)?;

    let d2 = mean_x * mean_x + mean_p * mean_p;
    let beta = wrap_full_turn(mean_p.atan2(mean_x));
    let w_offset = |phi: f64| co.u * d2 + co.v * d2 * (2.0 * beta - 2.0 * phi).cos();

    let a = symmetric_second_s2(ms, e0) - w_offset(0.0);
    let c = symmetric_second_s2(ms, e45) - w_offset(FRAC_PI_4);
    let b = symmetric_second_s2(ms, e90) - w_offset(FRAC_PI_2);

    let mut est = SignalEstimate::blank(Feasibility::Full);
    if co.v_over_u().abs() < CONDITION_WARN {
        est.warnings.push(EstimateWarning::IllConditioned { v_over_u: co.v_over_u() });
    }
    let fit = fit_sinusoid(a, b, c, second_ses(e0, e45, e90), &co);
    let (b_est, c_est, alpha) = split_shape(&fit, &mut est.warnings);

    est.mean_x = Some(mean_x);
    est.mean_p = Some(mean_p);
    est.b = b_est;
    est.c = c_est;
    est.alpha = Some(alpha);
    est.d = Some(d2.max(0.0).sqrt());
    est.beta = Some(beta);
    est.beta_period = Some(TAU);
    let (energy, se_energy) = energy_from_s0(ms, &co);
    est.energy = Some(energy);
    est.se.energy = se_energy;
    if let (Some(b), Some(c)) = (b_est, c_est) {
        est.physical = Some(b * c >= 1.0);
    }
    Ok(est)
}

/// Shape estimate for a signal known to carry no displacement: the
/// sinusoid is pure covariance, so no first moments are needed and any
/// phase-asymmetric reference works, displaced or not.
pub fn estimate_squeezed_signal(
    ms: &StokesMomentSet,
    reference: &ReferenceSpec,
) -> Result<SignalEstimate, EstimatorError> {
    let co = EstimatorCoefficients::from_reference(reference);
    if !co.seconds_feasible() {
        return Err(infeasible_seconds());
    }
    let e0 = entry_at(ms, 0.0)?;
    let e45 = entry_at(ms, FRAC_PI_4)?;
    let e90 = entry_at(ms, FRAC_PI_2)?;
    let a = symmetric_second_s2(ms, e0);
    let c = symmetric_second_s2(ms, e45);
    let b = symmetric_second_s2(ms, e90);

    let mut est = SignalEstimate::blank(Feasibility::Full);
    if co.v_over_u().abs() < CONDITION_WARN {
        est.warnings.push(EstimateWarning::IllConditioned { v_over_u: co.v_over_u() });
    }
    let fit = fit_sinusoid(a, b, c, second_ses(e0, e45, e90), &co);
    let (b_est, c_est, alpha) = split_shape(&fit, &mut est.warnings);
    est.b = b_est;
    est.c = c_est;
    est.alpha = Some(alpha);
    est.d = Some(0.0);
    let (energy, se_energy) = energy_from_s0(ms, &co);
    est.energy = Some(energy);
    est.se.energy = se_energy;
    if let (Some(b), Some(c)) = (b_est, c_est) {
        est.physical = Some(b * c >= 1.0);
    }
    Ok(est)
}

/// Displacement estimate for a signal known to have an isotropic
/// covariance (`b = c = r`): the oscillation is then pure displacement,
/// `sum = d^2 + 2 r^2` and `amp = d^2`, so the displacement magnitude and
/// its direction modulo pi come out of second moments alone.
pub fn estimate_displaced_symmetric(
    ms: &StokesMomentSet,
    reference: &ReferenceSpec,
) -> Result<SignalEstimate, EstimatorError> {
    let co = EstimatorCoefficients::from_reference(reference);
    if !co.seconds_feasible() {
        return Err(infeasible_seconds());
    }
    let e0 = entry_at(ms, 0.0)?;
    let e45 = entry_at(ms, FRAC_PI_4)?;
    let e90 = entry_at(ms, FRAC_PI_2)?;
    let a = symmetric_second_s2(ms, e0);
    let c = symmetric_second_s2(ms, e45);
    let b = symmetric_second_s2(ms, e90);

    let mut est = SignalEstimate::blank(Feasibility::Full);
    if co.v_over_u().abs() < CONDITION_WARN {
        est.warnings.push(EstimateWarning::IllConditioned { v_over_u: co.v_over_u() });
    }
    let fit = fit_sinusoid(a, b, c, second_ses(e0, e45, e90), &co);
    let d2 = fit.amp;
    let beta = fit.angle;
    let r2 = (fit.sum - d2) / 2.0;
    let r = sq_root_checked(r2, "r^2", fit.sq_tol, &mut est.warnings);
    est.d = Some(d2.max(0.0).sqrt());
    est.beta = Some(beta);
    est.beta_period = Some(PI);
    est.b = r;
    est.c = r;
    est.alpha = Some(0.0);
    let (energy, se_energy) = energy_from_s0(ms, &co);
    est.energy = Some(energy);
    est.se.energy = se_energy;
    est.physical = r.map(|r| r >= 1.0);
    Ok(est)
}

/// With a thermal reference nothing oscillates and the means vanish; the
/// sum observable still delivers the signal energy.
pub fn estimate_thermal_reference(
    ms: &StokesMomentSet,
    reference: &ReferenceSpec,
) -> SignalEstimate {
    let co = EstimatorCoefficients::from_reference(reference);
    let mut est = SignalEstimate::blank(Feasibility::EnergyOnly);
    let (energy, se_energy) = energy_from_s0(ms, &co);
    est.energy = Some(energy);
    est.se.energy = se_energy;
    est
}

/// Quantum number moments of the reference. Thermal references use the
/// calibrated quartic coefficient; any other known reference falls back to
/// the Gaussian closed form, so the estimator accepts non-thermal
/// references as a superset of the thermal case it is designed for.
fn reference_number_moments(reference: &ReferenceSpec) -> (f64, f64) {
    let p = reference.params();
    if reference.is_thermal() {
        let oc = OrderingConstants::VERIFIED;
        let n1 = (p.r() * p.r() - 1.0) / 2.0;
        (n1, oc.f_reference(p.r()) + n1)
    } else {
        crate::moments::mode_number_moments(&params_to_moments(p))
    }
}

/// Gaussian-assumption inversion of the sum-observable moments: with the
/// signal known Gaussian and of a stated shape, `<S0>` and `<S0^2>`
/// determine the magnitudes (b, c) or (r, d). Directions are untouchable;
/// a phase-symmetric reference sees identical statistics at every angle.
pub fn estimate_gaussian_s02(
    ms: &StokesMomentSet,
    reference: &ReferenceSpec,
    case: GaussianCase,
) -> Result<SignalEstimate, EstimatorError> {
    let co = EstimatorCoefficients::from_reference(reference);
    let (nr1, nr2) = reference_number_moments(reference);
    let s0_mean = ms.mean_s0;
    let s0_second = ms.quantum_second_s0();
    let ns1 = s0_mean - nr1;
    let ns2 = s0_second - 2.0 * ns1 * nr1 - nr2;

    // 3-sigma tolerance on derived squared quantities, from the sampling
    // errors of the sum-observable moments when present.
    let tol = match (ms.se_mean_s0, ms.se_second_s0) {
        (Some(se1), Some(se2)) => {
            let cross = ms.cov_s0.unwrap_or(0.0);
            let var_ns2 = (se2 * se2 + 4.0 * nr1 * nr1 * se1 * se1
                - 4.0 * nr1 * cross)
                .max(0.0);
            3.0 * (16.0 * var_ns2.sqrt() + 8.0 * se1)
        }
        _ => 1e-9 * (1.0 + 16.0 * ns2.abs() + 4.0 * ns1.abs()),
    };

    let mut est = SignalEstimate::blank(Feasibility::EnergyPlusMagnitudes);
    let (energy, se_energy) = energy_from_s0(ms, &co);
    est.energy = Some(energy);
    est.se.energy = se_energy;

    match case {
        GaussianCase::Squeezed => {
            // P = b^2 + c^2, G = b^2 c^2 from the quartic moment.
            let p = 4.0 * ns1 + 2.0;
            let g = (3.0 * p * p - 4.0 * p - 16.0 * ns2) / 4.0;
            if p < -tol {
                return Err(EstimatorError::NoRealSolution(format!(
                    "total second moment b^2 + c^2 = {p} is negative"
                )));
            }
            let disc = p * p - 4.0 * g;
            if disc < -tol {
                return Err(EstimatorError::NoRealSolution(format!(
                    "discriminant {disc} of the shape quadratic is negative beyond tolerance {tol}"
                )));
            }
            let root = disc.max(0.0).sqrt();
            let b2 = (p + root) / 2.0;
            let c2 = (p - root) / 2.0;
            if c2 < -tol {
                return Err(EstimatorError::NoRealSolution(format!(
                    "smaller squared axis c^2 = {c2} is negative beyond tolerance {tol}"
                )));
            }
            est.b = Some(b2.max(0.0).sqrt());
            est.c = Some(c2.max(0.0).sqrt());
            est.d = Some(0.0);
            est.physical = Some(b2.max(0.0).sqrt() * c2.max(0.0).sqrt() >= 1.0);
            // Within tolerance of a double root the split and degenerate
            // readings are statistically equivalent; report both.
            if tol > 0.0 && disc.abs() <= tol && root > 0.0 {
                let mut alt = SignalEstimate::blank(Feasibility::EnergyPlusMagnitudes);
                let r_eq = (p / 2.0).max(0.0).sqrt();
                alt.b = Some(r_eq);
                alt.c = Some(r_eq);
                alt.d = Some(0.0);
                alt.energy = est.energy;
                alt.physical = Some(r_eq * r_eq >= 1.0);
                est.warnings
                    .push(EstimateWarning::AmbiguousSolution { discriminant: disc, tolerance: tol });
                est.alternate = Some(Box::new(alt));
            }
        }
        GaussianCase::DisplacedSymmetric => {
            // E = d^2 + 2 r^2, and the quartic moment gives
            // W = 8 r^4 + 8 r^2 d^2 + d^4, so d^4 = 2 E^2 - W.
            let e = 4.0 * ns1 + 2.0;
            let w = 16.0 * ns2 + 4.0 * e;
            let d4 = 2.0 * e * e - w;
            if d4 < -tol * e.abs().max(1.0) {
                return Err(EstimatorError::NoRealSolution(format!(
                    "d^4 = {d4} is negative beyond tolerance"
                )));
            }
            let d2 = d4.max(0.0).sqrt();
            let r2 = (e - d2) / 2.0;
            if r2 < -tol {
                return Err(EstimatorError::NoRealSolution(format!(
                    "r^2 = {r2} is negative beyond tolerance"
                )));
            }
            let r = r2.max(0.0).sqrt();
            est.d = Some(d2.sqrt());
            est.b = Some(r);
            est.c = Some(r);
            est.physical = Some(r2 >= 1.0);
        }
    }
    Ok(est)
}

/// Human-readable rendering of an estimate, one `key = value` line per
/// populated field.
pub fn format_estimate(est: &SignalEstimate) -> String {
    let mut out = String::new();
    out.push_str(&format!("feasibility = {}\n", est.feasibility));
    let mut field = |name: &str, v: Option<f64>, se: Option<f64>| {
        if let Some(v) = v {
            match se {
                Some(se) => out.push_str(&format!("{name} = {v} (se {se:.3e})\n")),
                None => out.push_str(&format!("{name} = {v}\n")),
            }
        }
    };
    field("mean_x", est.mean_x, est.se.mean_x);
    field("mean_p", est.mean_p, est.se.mean_p);
    field("second_x", est.second_x, est.se.second_x);
    field("second_p", est.second_p, est.se.second_p);
    field("second_xp", est.second_xp, est.se.second_xp);
    field("var_x", est.var_x, None);
    field("var_p", est.var_p, None);
    field("cov_xp", est.cov_xp, None);
    field("b", est.b, est.se.b);
    field("c", est.c, est.se.c);
    field("alpha", est.alpha, est.se.alpha);
    field("d", est.d, est.se.d);
    field("beta", est.beta, est.se.beta);
    field("beta_period", est.beta_period, None);
    field("energy", est.energy, est.se.energy);
    if let Some(p) = est.physical {
        out.push_str(&format!("physical = {p}\n"));
    }
    for w in &est.warnings {
        out.push_str(&format!("warning: {w:?}\n"));
    }
    if est.alternate.is_some() {
        out.push_str("alternate solution attached\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{
        mean_s0, mean_s2, moment_set, second_s0, second_s2, second_s2_from_moments,
        MeasurementModel, Provenance, DEFAULT_ANGLES,
    };
    use crate::sampler::{equal_split_plan, sample_moments, SamplerMode};
    use crate::states::{ner, reference_from_ner, rotate, GaussianParams};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn bright_signal() -> GaussianParams {
        GaussianParams::from_eigen(237.0, 86.0, 0.7, 158.0, 0.2).unwrap()
    }

    fn displaced_reference() -> ReferenceSpec {
        // r_R = 1, NER 10, all of it displacement.
        reference_from_ner(1.0, 10.0, 1.0).unwrap()
    }

    fn analytic_set(signal: &GaussianParams, reference: &ReferenceSpec) -> StokesMomentSet {
        moment_set(signal, reference, &DEFAULT_ANGLES)
    }

    fn assert_wrapped_eq(a: f64, b: f64, period: f64, scale: f64) {
        let d = wrapped_diff(a, b, period).abs();
        assert!(d <= 1e-9 * scale.max(1.0), "wrapped |{a} - {b}| = {d}");
    }

    #[test]
    fn coefficients_match_reference_shape() {
        let co = EstimatorCoefficients::from_reference(&ReferenceSpec::coherent(2.0).unwrap());
        assert_relative_eq!(co.u, 0.75);
        assert_relative_eq!(co.v, 0.5);
        assert!(co.mean_feasible() && co.seconds_feasible());
        let th = EstimatorCoefficients::from_reference(&ReferenceSpec::thermal(1.5).unwrap());
        assert_abs_diff_eq!(th.v, 0.0);
        assert!(!th.mean_feasible() && !th.seconds_feasible());
        let sq =
            EstimatorCoefficients::from_reference(&ReferenceSpec::from_rqd(1.0, 1.4, 0.0).unwrap());
        assert!(!sq.mean_feasible() && sq.seconds_feasible());
    }

    #[test]
    fn feasibility_classification() {
        let displaced = displaced_reference();
        let squeezed_only = reference_from_ner(1.0, 1.0, 0.0).unwrap();
        let thermal = ReferenceSpec::thermal(1.5).unwrap();
        let none = Assumptions::default();
        assert_eq!(feasibility_check(&displaced, &none), Feasibility::Full);
        assert_eq!(
            feasibility_check(&squeezed_only, &none),
            Feasibility::SecondMomentsOnly
        );
        assert_eq!(feasibility_check(&thermal, &none), Feasibility::EnergyOnly);
        let squeezed_case = Assumptions { squeezed_signal: true, ..Default::default() };
        assert_eq!(
            feasibility_check(&squeezed_only, &squeezed_case),
            Feasibility::Full
        );
        let gauss = Assumptions { gaussian: true, squeezed_signal: true, ..Default::default() };
        assert_eq!(
            feasibility_check(&thermal, &gauss),
            Feasibility::EnergyPlusMagnitudes
        );
        assert_eq!(
            feasibility_check(&thermal, &Assumptions { gaussian: true, ..Default::default() }),
            Feasibility::EnergyOnly
        );
    }

    #[test]
    fn mean_estimate_inverts_the_projection() {
        let signal = GaussianParams::new(1.0, 1.0, 0.0, 158.0, 0.2).unwrap();
        let reference = ReferenceSpec::coherent(2.0).unwrap();
        let ms = analytic_set(&signal, &reference);
        assert_relative_eq!(ms.entries[0].mean_s2, 154.85051929891617, max_relative = 1e-12);
        let (mx, mp) = estimate_mean(&ms, &reference).unwrap();
        assert_relative_eq!(mx, 158.0 * 0.2f64.cos(), max_relative = 1e-12);
        assert_relative_eq!(mp, 158.0 * 0.2f64.sin(), max_relative = 1e-12);
    }

    #[test]
    fn mean_estimate_of_zero_moments_is_zero() {
        let ms = analytic_set(&GaussianParams::vacuum(), &ReferenceSpec::coherent(2.0).unwrap());
        let (mx, mp) = estimate_mean(&ms, &ReferenceSpec::coherent(2.0).unwrap()).unwrap();
        assert_eq!((mx, mp), (0.0, 0.0));
    }

    #[test]
    fn mean_estimate_needs_a_displaced_reference() {
        let reference = ReferenceSpec::from_rqd(1.0, 1.5, 0.0).unwrap();
        let ms = analytic_set(&bright_signal(), &reference);
        assert!(matches!(
            estimate_mean(&ms, &reference),
            Err(EstimatorError::Infeasible(_))
        ));
    }

    #[test]
    fn missing_angles_are_reported() {
        let reference = ReferenceSpec::coherent(2.0).unwrap();
        let ms = moment_set(&bright_signal(), &reference, &[0.0, FRAC_PI_4]);
        assert!(matches!(
            estimate_mean(&ms, &reference),
            Err(EstimatorError::MissingAngle(_))
        ));
        assert!(matches!(
            estimate_second_moments(&ms, &reference),
            Err(EstimatorError::MissingAngle(_))
        ));
    }

    #[test]
    fn second_moments_round_trip() {
        let signal = bright_signal();
        let reference = displaced_reference();
        let ms = analytic_set(&signal, &reference);
        let want = params_to_moments(&signal);
        let (x, p, xp) = estimate_second_moments(&ms, &reference).unwrap();
        assert_relative_eq!(x, want.second_x(), max_relative = 1e-9);
        assert_relative_eq!(p, want.second_p(), max_relative = 1e-9);
        assert_relative_eq!(xp, want.second_xp(), max_relative = 1e-9);
    }

    #[test]
    fn second_moments_refuse_thermal_reference() {
        let reference = ReferenceSpec::thermal(2.0).unwrap();
        let ms = analytic_set(&bright_signal(), &reference);
        let err = estimate_second_moments(&ms, &reference).unwrap_err();
        assert!(err.to_string().contains("thermal"));
    }

    #[test]
    fn symmetric_signal_forces_equal_seconds() {
        let signal = GaussianParams::new(1.4, 1.0, 0.0, 0.0, 0.0).unwrap();
        let reference = displaced_reference();
        let ms = analytic_set(&signal, &reference);
        let (x, p, xp) = estimate_second_moments(&ms, &reference).unwrap();
        assert_relative_eq!(x, p, max_relative = 1e-12);
        assert_abs_diff_eq!(xp, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn general_round_trip_is_exact() {
        let signal = bright_signal();
        let reference = displaced_reference();
        let ms = analytic_set(&signal, &reference);
        let est = estimate_general(&ms, &reference).unwrap();
        assert_eq!(est.feasibility, Feasibility::Full);
        assert_relative_eq!(est.b.unwrap(), 237.0, max_relative = 1e-9);
        assert_relative_eq!(est.c.unwrap(), 86.0, max_relative = 1e-9);
        assert_wrapped_eq(est.alpha.unwrap(), 0.7, PI, 1.0);
        assert_relative_eq!(est.d.unwrap(), 158.0, max_relative = 1e-9);
        assert_wrapped_eq(est.beta.unwrap(), 0.2, TAU, 1.0);
        assert_relative_eq!(est.energy.unwrap(), signal.total_second_moment(), max_relative = 1e-9);
        assert_eq!(est.physical, Some(true));
        assert_eq!(est.beta_period, Some(TAU));
        // Analytic input carries no standard errors.
        assert_eq!(est.se.b, None);
    }

    #[test]
    fn general_degrades_without_reference_displacement() {
        let signal = bright_signal();
        let reference = reference_from_ner(1.0, 1.0, 0.0).unwrap();
        let ms = analytic_set(&signal, &reference);
        let est = estimate_general(&ms, &reference).unwrap();
        assert_eq!(est.feasibility, Feasibility::SecondMomentsOnly);
        assert_eq!(est.mean_x, None);
        assert_eq!(est.b, None);
        let want = params_to_moments(&signal);
        assert_relative_eq!(est.second_x.unwrap(), want.second_x(), max_relative = 1e-9);
        assert_relative_eq!(est.second_p.unwrap(), want.second_p(), max_relative = 1e-9);
        assert_relative_eq!(est.second_xp.unwrap(), want.second_xp(), max_relative = 1e-9);
        assert_relative_eq!(
            est.energy.unwrap(),
            signal.total_second_moment(),
            max_relative = 1e-9
        );
    }

    #[test]
    fn general_degrades_to_energy_for_thermal_reference() {
        let signal = bright_signal();
        let reference = ReferenceSpec::thermal(1.5).unwrap();
        let ms = analytic_set(&signal, &reference);
        let est = estimate_general(&ms, &reference).unwrap();
        assert_eq!(est.feasibility, Feasibility::EnergyOnly);
        assert_eq!(est.second_x, None);
        assert_relative_eq!(est.energy.unwrap(), 88529.0, max_relative = 1e-9);
    }

    #[test]
    fn cosine_fit_agrees_with_general() {
        let signal = bright_signal();
        for reference in [
            displaced_reference(),
            ReferenceSpec::coherent(2.0).unwrap(),
            ReferenceSpec::from_rqd(1.3, 1.2, 1.7).unwrap(),
        ] {
            let ms = analytic_set(&signal, &reference);
            let g = estimate_general(&ms, &reference).unwrap();
            let f = estimate_cosine_fit(&ms, &reference).unwrap();
            assert_relative_eq!(f.b.unwrap(), g.b.unwrap(), max_relative = 1e-9);
            assert_relative_eq!(f.c.unwrap(), g.c.unwrap(), max_relative = 1e-9);
            assert_wrapped_eq(f.alpha.unwrap(), g.alpha.unwrap(), PI, 1.0);
            assert_relative_eq!(f.d.unwrap(), g.d.unwrap(), max_relative = 1e-9);
            assert_wrapped_eq(f.beta.unwrap(), g.beta.unwrap(), TAU, 1.0);
        }
    }

    #[test]
    fn cosine_fit_requires_first_moments() {
        let reference = reference_from_ner(1.0, 1.0, 0.0).unwrap();
        let ms = analytic_set(&bright_signal(), &reference);
        assert!(matches!(
            estimate_cosine_fit(&ms, &reference),
            Err(EstimatorError::Infeasible(_))
        ));
    }

    #[test]
    fn cosine_fit_ties_break_symmetric_shapes_silently() {
        let signal = GaussianParams::new(1.3, 1.0, 0.0, 2.0, 1.1).unwrap();
        let reference = displaced_reference();
        let ms = analytic_set(&signal, &reference);
        let est = estimate_cosine_fit(&ms, &reference).unwrap();
        assert_relative_eq!(est.b.unwrap(), 1.3, max_relative = 1e-9);
        assert_relative_eq!(est.c.unwrap(), 1.3, max_relative = 1e-9);
        assert_eq!(est.alpha, Some(0.0));
        assert!(est.warnings.is_empty());
    }

    #[test]
    fn squeezed_signal_path_works_without_displacement_anywhere() {
        let signal = GaussianParams::from_eigen(237.0, 86.0, 0.7, 0.0, 0.0).unwrap();
        // gamma = 0: all reference resource in squeezing.
        let reference = reference_from_ner(1.0, 1.0, 0.0).unwrap();
        let ms = analytic_set(&signal, &reference);
        let est = estimate_squeezed_signal(&ms, &reference).unwrap();
        assert_relative_eq!(est.b.unwrap(), 237.0, max_relative = 1e-9);
        assert_relative_eq!(est.c.unwrap(), 86.0, max_relative = 1e-9);
        assert_wrapped_eq(est.alpha.unwrap(), 0.7, PI, 1.0);
        assert_eq!(est.d, Some(0.0));
        assert_eq!(est.beta, None);
    }

    #[test]
    fn squeezed_signal_path_recovers_vacuum() {
        let reference = reference_from_ner(1.0, 1.0, 0.0).unwrap();
        let ms = analytic_set(&GaussianParams::vacuum(), &reference);
        let est = estimate_squeezed_signal(&ms, &reference).unwrap();
        assert_relative_eq!(est.b.unwrap(), 1.0, max_relative = 1e-9);
        assert_relative_eq!(est.c.unwrap(), 1.0, max_relative = 1e-9);
        assert_eq!(est.physical, Some(true));
    }

    #[test]
    fn squeezed_signal_path_refuses_thermal_reference() {
        let reference = ReferenceSpec::thermal(1.4).unwrap();
        let ms = analytic_set(&GaussianParams::vacuum(), &reference);
        let err = estimate_squeezed_signal(&ms, &reference).unwrap_err();
        assert!(err.to_string().contains("thermal"));
    }

    #[test]
    fn displaced_symmetric_round_trip() {
        let signal = GaussianParams::from_eigen(86.0, 86.0, 0.0, 158.0, 0.2).unwrap();
        let reference = reference_from_ner(1.0, 1.0, 0.0).unwrap();
        let ms = analytic_set(&signal, &reference);
        let est = estimate_displaced_symmetric(&ms, &reference).unwrap();
        assert_relative_eq!(est.d.unwrap(), 158.0, max_relative = 1e-9);
        assert_wrapped_eq(est.beta.unwrap(), 0.2, PI, 1.0);
        assert_eq!(est.beta_period, Some(PI));
        assert_relative_eq!(est.b.unwrap(), 86.0, max_relative = 1e-9);
        assert_relative_eq!(est.c.unwrap(), 86.0, max_relative = 1e-9);
    }

    #[test]
    fn displaced_symmetric_direction_wraps_to_half_turn() {
        // True direction in the second half-turn comes back folded.
        let signal = GaussianParams::from_eigen(2.0, 2.0, 0.0, 3.0, 0.2 + PI).unwrap();
        let reference = displaced_reference();
        let ms = analytic_set(&signal, &reference);
        let est = estimate_displaced_symmetric(&ms, &reference).unwrap();
        assert_wrapped_eq(est.beta.unwrap(), 0.2, PI, 1.0);
    }

    #[test]
    fn displaced_symmetric_zero_displacement_tie_break() {
        let signal = GaussianParams::thermal(1.6).unwrap();
        let reference = reference_from_ner(1.0, 1.0, 0.0).unwrap();
        let ms = analytic_set(&signal, &reference);
        let est = estimate_displaced_symmetric(&ms, &reference).unwrap();
        assert_eq!(est.d, Some(0.0));
        assert_eq!(est.beta, Some(0.0));
        assert_relative_eq!(est.b.unwrap(), 1.6, max_relative = 1e-9);
        assert!(est.warnings.is_empty());
    }

    #[test]
    fn displaced_symmetric_flags_negative_thermal_part() {
        // Hand-built inconsistent data: oscillation larger than the level.
        let reference = ReferenceSpec::from_rqd(1.0, 2.0, 0.0).unwrap();
        let co = EstimatorCoefficients::from_reference(&reference);
        let oc = OrderingConstants::VERIFIED;
        // sum = 10, amp = 14 -> r^2 = -2.
        let mk = |phi: f64, val: f64| AngleMoments::analytic(phi, 0.0, val + oc.kappa2);
        let a = co.u * 10.0 + co.v * 14.0;
        let b = co.u * 10.0 - co.v * 14.0;
        let c = co.u * 10.0;
        let ms = StokesMomentSet {
            entries: vec![mk(0.0, a), mk(FRAC_PI_4, c), mk(FRAC_PI_2, b)],
            mean_s0: 3.0,
            second_s0: 20.0,
            n_s0: None,
            se_mean_s0: None,
            se_second_s0: None,
            cov_s0: None,
            provenance: Provenance::Analytic,
        };
        let est = estimate_displaced_symmetric(&ms, &reference).unwrap();
        assert_eq!(est.b, None);
        assert!(matches!(
            est.warnings.as_slice(),
            [EstimateWarning::NegativeEnergy { quantity: "r^2", .. }]
        ));
        assert_relative_eq!(est.d.unwrap(), 14f64.sqrt(), max_relative = 1e-9);
    }

    #[test]
    fn thermal_reference_reports_energy_only() {
        let reference = ReferenceSpec::vacuum();
        let ms = analytic_set(&GaussianParams::vacuum(), &reference);
        let est = estimate_thermal_reference(&ms, &reference);
        assert_eq!(est.feasibility, Feasibility::EnergyOnly);
        assert_relative_eq!(est.energy.unwrap(), 2.0, max_relative = 1e-12);
        assert_eq!(est.b, None);

        let ms = analytic_set(&bright_signal(), &ReferenceSpec::thermal(1.5).unwrap());
        let est = estimate_thermal_reference(&ms, &ReferenceSpec::thermal(1.5).unwrap());
        assert_relative_eq!(est.energy.unwrap(), 88529.0, max_relative = 1e-12);
    }

    #[test]
    fn thermal_reference_energy_is_rotation_invariant() {
        let reference = ReferenceSpec::thermal(1.5).unwrap();
        let signal = bright_signal();
        let base = estimate_thermal_reference(&analytic_set(&signal, &reference), &reference);
        for phi in [0.4, 1.3, 2.8] {
            let turned =
                estimate_thermal_reference(&analytic_set(&rotate(&signal, phi), &reference), &reference);
            assert_relative_eq!(
                turned.energy.unwrap(),
                base.energy.unwrap(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn gaussian_s02_recovers_squeezed_magnitudes() {
        let signal = GaussianParams::from_eigen(2.0, 1.2, 0.9, 0.0, 0.0).unwrap();
        let reference = ReferenceSpec::thermal(1.5).unwrap();
        let ms = analytic_set(&signal, &reference);
        let est = estimate_gaussian_s02(&ms, &reference, GaussianCase::Squeezed).unwrap();
        assert_eq!(est.feasibility, Feasibility::EnergyPlusMagnitudes);
        assert_relative_eq!(est.b.unwrap(), 2.0, max_relative = 1e-9);
        assert_relative_eq!(est.c.unwrap(), 1.2, max_relative = 1e-9);
        assert_eq!(est.alpha, None);
        assert_eq!(est.beta, None);
        assert!(est.alternate.is_none());
    }

    #[test]
    fn gaussian_s02_recovers_displaced_magnitudes() {
        let signal = GaussianParams::new(1.5, 1.0, 0.0, 2.0, 1.3).unwrap();
        let reference = ReferenceSpec::thermal(2.0).unwrap();
        let ms = analytic_set(&signal, &reference);
        let est =
            estimate_gaussian_s02(&ms, &reference, GaussianCase::DisplacedSymmetric).unwrap();
        assert_relative_eq!(est.d.unwrap(), 2.0, max_relative = 1e-9);
        assert_relative_eq!(est.b.unwrap(), 1.5, max_relative = 1e-9);
        assert_eq!(est.beta, None);
    }

    #[test]
    fn gaussian_s02_accepts_non_thermal_references() {
        let signal = GaussianParams::from_eigen(2.0, 1.2, 0.9, 0.0, 0.0).unwrap();
        let reference = ReferenceSpec::from_rqd(1.2, 1.3, 0.8).unwrap();
        let ms = analytic_set(&signal, &reference);
        let est = estimate_gaussian_s02(&ms, &reference, GaussianCase::Squeezed).unwrap();
        assert_relative_eq!(est.b.unwrap(), 2.0, max_relative = 1e-9);
        assert_relative_eq!(est.c.unwrap(), 1.2, max_relative = 1e-9);
    }

    #[test]
    fn gaussian_s02_exact_degenerate_shape_is_unambiguous() {
        let signal = GaussianParams::thermal(1.5).unwrap();
        let reference = ReferenceSpec::thermal(1.2).unwrap();
        let ms = analytic_set(&signal, &reference);
        let est = estimate_gaussian_s02(&ms, &reference, GaussianCase::Squeezed).unwrap();
        assert_relative_eq!(est.b.unwrap(), 1.5, max_relative = 1e-6);
        assert_relative_eq!(est.c.unwrap(), 1.5, max_relative = 1e-6);
        assert!(est.alternate.is_none());
    }

    #[test]
    fn gaussian_s02_near_degenerate_attaches_alternate() {
        let signal = GaussianParams::from_eigen(1.62, 1.6, 0.0, 0.0, 0.0).unwrap();
        let reference = ReferenceSpec::thermal(1.2).unwrap();
        let mut ms = analytic_set(&signal, &reference);
        // Pretend the sum-observable moments carry sampling noise.
        ms.provenance = Provenance::Empirical { model: MeasurementModel::Quantum };
        ms.se_mean_s0 = Some(0.02);
        ms.se_second_s0 = Some(0.2);
        ms.cov_s0 = Some(0.0);
        ms.n_s0 = Some(10_000);
        let est = estimate_gaussian_s02(&ms, &reference, GaussianCase::Squeezed).unwrap();
        assert!(matches!(
            est.warnings.as_slice(),
            [EstimateWarning::AmbiguousSolution { .. }]
        ));
        let alt = est.alternate.as_deref().unwrap();
        assert_relative_eq!(alt.b.unwrap(), alt.c.unwrap());
    }

    #[test]
    fn gaussian_s02_rejects_inconsistent_data() {
        let signal = GaussianParams::from_eigen(2.0, 1.2, 0.0, 0.0, 0.0).unwrap();
        let reference = ReferenceSpec::thermal(1.5).unwrap();
        let mut ms = analytic_set(&signal, &reference);
        // A quartic moment far too small for the energy.
        ms.second_s0 = ms.second_s0 - 5.0;
        let err = estimate_gaussian_s02(&ms, &reference, GaussianCase::Squeezed).unwrap_err();
        assert!(matches!(err, EstimatorError::NoRealSolution(_)));
    }

    #[test]
    fn symmetric_model_data_estimates_like_quantum_data() {
        // The same physics presented as raw phase-space moments must give
        // the identical estimate once the ordering constants are applied.
        let signal = bright_signal();
        let reference = displaced_reference();
        let quantum = analytic_set(&signal, &reference);
        let oc = OrderingConstants::VERIFIED;
        let mut raw = quantum.clone();
        raw.provenance = Provenance::Empirical { model: MeasurementModel::Symmetric };
        for e in &mut raw.entries {
            e.second_s2 -= oc.kappa2;
        }
        raw.second_s0 -= oc.s0_total_correction();
        let a = estimate_general(&quantum, &reference).unwrap();
        let b = estimate_general(&raw, &reference).unwrap();
        assert_relative_eq!(a.b.unwrap(), b.b.unwrap(), max_relative = 1e-12);
        assert_relative_eq!(a.d.unwrap(), b.d.unwrap(), max_relative = 1e-12);
        assert_relative_eq!(a.energy.unwrap(), b.energy.unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn phase_miscalibration_shifts_the_recovered_directions() {
        // Data taken at phi + delta but labeled phi: the sinusoids depend
        // on (2 alpha - 2 phi) and (beta - phi), so the signal appears
        // rotated by -delta. Shape magnitudes survive.
        let signal = GaussianParams::from_eigen(3.0, 1.5, 0.8, 2.0, 1.0).unwrap();
        let reference = displaced_reference();
        let delta = 0.15;
        let entries: Vec<AngleMoments> = DEFAULT_ANGLES
            .iter()
            .map(|&phi| {
                AngleMoments::analytic(
                    phi,
                    mean_s2(&signal, &reference, phi + delta),
                    second_s2(&signal, &reference, phi + delta),
                )
            })
            .collect();
        let ms = StokesMomentSet {
            entries,
            mean_s0: mean_s0(&signal, &reference),
            second_s0: second_s0(&signal, &reference),
            n_s0: None,
            se_mean_s0: None,
            se_second_s0: None,
            cov_s0: None,
            provenance: Provenance::Analytic,
        };
        let est = estimate_general(&ms, &reference).unwrap();
        assert_relative_eq!(est.b.unwrap(), 3.0, max_relative = 1e-6);
        assert_relative_eq!(est.c.unwrap(), 1.5, max_relative = 1e-6);
        assert_wrapped_eq(est.alpha.unwrap(), 0.8 - delta, PI, 1.0);
        assert_wrapped_eq(est.beta.unwrap(), 1.0 - delta, TAU, 1.0);
    }

    #[test]
    fn wrapped_directions_near_the_seam_are_recovered() {
        let signal = GaussianParams::from_eigen(2.0, 1.1, 3.14, 1.5, 6.28).unwrap();
        let reference = displaced_reference();
        let ms = analytic_set(&signal, &reference);
        let est = estimate_general(&ms, &reference).unwrap();
        assert_wrapped_eq(est.alpha.unwrap(), 3.14, PI, 1.0);
        assert_wrapped_eq(est.beta.unwrap(), 6.28, TAU, 1.0);
    }

    #[test]
    fn moment_matched_mixture_is_estimated_as_its_gaussian_twin() {
        // An equal mixture of coherent states at +/- d has Gaussian first
        // and second moments (mean 0, Var(x) = 1 + d^2), so every
        // second-moment path sees exactly the moment-matched Gaussian.
        let d = 1.5;
        let comp_plus = GaussianParams::coherent(d, 0.0).unwrap();
        let comp_minus = GaussianParams::coherent(d, PI).unwrap();
        let reference = displaced_reference();

        let mixture_m = MomentForm {
            mean_x: 0.0,
            mean_p: 0.0,
            var_x: 1.0 + d * d,
            var_p: 1.0,
            cov_xp: 0.0,
        };
        let twin = moments_to_params(&mixture_m).unwrap();

        let entries: Vec<AngleMoments> = DEFAULT_ANGLES
            .iter()
            .map(|&phi| {
                // Mixture moments are component averages; S2 moments are
                // at most quadratic in the signal, so the mixture values
                // follow from the two coherent components.
                let m1 = 0.5 * (mean_s2(&comp_plus, &reference, phi)
                    + mean_s2(&comp_minus, &reference, phi));
                let m2 = 0.5 * (second_s2(&comp_plus, &reference, phi)
                    + second_s2(&comp_minus, &reference, phi));
                AngleMoments::analytic(phi, m1, m2)
            })
            .collect();
        let ms = StokesMomentSet {
            entries,
            mean_s0: 0.5 * (mean_s0(&comp_plus, &reference) + mean_s0(&comp_minus, &reference)),
            second_s0: 0.5
                * (second_s0(&comp_plus, &reference) + second_s0(&comp_minus, &reference)),
            n_s0: None,
            se_mean_s0: None,
            se_second_s0: None,
            cov_s0: None,
            provenance: Provenance::Analytic,
        };
        // Cross-check the construction against the twin's S2 sinusoid.
        for e in &ms.entries {
            assert_relative_eq!(
                e.second_s2,
                second_s2_from_moments(&mixture_m, &reference, e.phi),
                max_relative = 1e-12
            );
        }
        let est = estimate_general(&ms, &reference).unwrap();
        assert_relative_eq!(est.b.unwrap(), twin.b(), max_relative = 1e-9);
        assert_relative_eq!(est.c.unwrap(), twin.c(), max_relative = 1e-9);
        assert_relative_eq!(est.energy.unwrap(), twin.total_second_moment(), max_relative = 1e-9);
        // The quartic route is the one place the Gaussian assumption
        // actually bites: the mixture's sum-observable second moment
        // differs from the twin's.
        let twin_ms = analytic_set(&twin, &reference);
        assert!((ms.second_s0 - twin_ms.second_s0).abs() > 1e-3);
    }

    #[test]
    fn sampled_estimates_agree_with_truth_within_errors() {
        let signal = GaussianParams::from_eigen(3.0, 1.5, 0.8, 2.5, 1.0).unwrap();
        let reference = displaced_reference();
        let plan = equal_split_plan(&DEFAULT_ANGLES, 60_000, 0);
        let ms = sample_moments(&signal, &reference, &plan, SamplerMode::Wigner, 314).unwrap();
        let est = estimate_general(&ms, &reference).unwrap();
        let checks = [
            (est.b, est.se.b, signal.b(), None),
            (est.c, est.se.c, signal.c(), None),
            (est.alpha, est.se.alpha, signal.alpha(), Some(PI)),
            (est.d, est.se.d, signal.d(), None),
            (est.beta, est.se.beta, signal.beta(), Some(TAU)),
            (est.energy, est.se.energy, signal.total_second_moment(), None),
        ];
        for (got, se, truth, period) in checks {
            let (got, se) = (got.unwrap(), se.unwrap());
            let diff = match period {
                Some(p) => wrapped_diff(got, truth, p),
                None => got - truth,
            };
            let z = diff.abs() / se;
            assert!(z < 5.0, "estimate {got} vs truth {truth}: z = {z:.2}");
            assert!(se.is_finite() && se > 0.0);
        }
    }

    #[test]
    fn reported_errors_match_the_spread_over_trials() {
        let signal = GaussianParams::from_eigen(3.0, 1.5, 0.8, 2.5, 1.0).unwrap();
        let reference = displaced_reference();
        let trials = 40;
        let mut bs = Vec::new();
        let mut mean_se = 0.0;
        for t in 0..trials {
            let plan = equal_split_plan(&DEFAULT_ANGLES, 20_000, 100 * t);
            let ms = sample_moments(&signal, &reference, &plan, SamplerMode::Wigner, 77).unwrap();
            let est = estimate_general(&ms, &reference).unwrap();
            bs.push(est.b.unwrap());
            mean_se += est.se.b.unwrap() / trials as f64;
        }
        let m = bs.iter().sum::<f64>() / bs.len() as f64;
        let sd =
            (bs.iter().map(|b| (b - m) * (b - m)).sum::<f64>() / (bs.len() - 1) as f64).sqrt();
        let ratio = sd / mean_se;
        assert!(
            (0.5..2.0).contains(&ratio),
            "spread {sd:.4} vs reported se {mean_se:.4} (ratio {ratio:.2})"
        );
    }

    #[test]
    fn ner_reference_construction_matches_decomposition() {
        // The references used throughout the tests really carry the NER
        // they claim.
        let reference = displaced_reference();
        let n = ner(&reference);
        assert_relative_eq!(n.delta, 10.0, max_relative = 1e-12);
        assert_relative_eq!(n.gamma.unwrap(), 1.0, max_relative = 1e-12);
    }
}
