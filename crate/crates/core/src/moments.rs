//! Exact quantum moments of the Stokes observables for independent Gaussian
//! signal and reference modes.
//!
//! For the canonical reference (directions zero) the second moment of the
//! difference observable takes the three-part form
//!
//! ```text
//! <S2^2(phi)> = u (d_S^2 + b_S^2 + c_S^2)
//!             + v (b_S^2 - c_S^2) cos(2 alpha_S - 2 phi)
//!             + v d_S^2 cos(2 beta_S - 2 phi)
//!             + kappa2
//! u = (d_R^2 + b_R^2 + c_R^2) / 8,   v = (d_R^2 + b_R^2 - c_R^2) / 8
//! ```
//!
//! with `kappa2` the operator-ordering constant separating quantum from
//! symmetric-ordered (phase-space) moments. The sum observable's moments come
//! from a Gaussian fourth-moment (Wick) expansion plus per-mode ordering
//! corrections. All constants are held in [`OrderingConstants`] and verified
//! against the independent brute-force oracle in [`crate::fockcheck`] rather
//! than trusted from any closed-form source.

use std::io::{Read, Write};

use thiserror::Error;

use crate::states::{params_to_moments, same_angle, GaussianParams, MomentForm, ReferenceSpec};

#[derive(Debug, Error)]
pub enum MomentError {
    #[error("moment-set csv: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("second moment {second} is below squared mean {mean}^2 at phi = {phi}")]
    NotASecondMoment { phi: f64, mean: f64, second: f64 },
}

/// Additive constants relating measured (quantum) moments to the
/// symmetric-ordered moments of the underlying phase-space distribution.
///
/// `VERIFIED` holds the values pinned by [`crate::fockcheck::calibrate_ordering`];
/// the calibration must reproduce them before estimators consume data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrderingConstants {
    /// Additive constant in `<S2^2(phi)>`: quantum minus symmetric-ordered.
    pub kappa2: f64,
    /// Per-mode additive constant in `<S0^2>`: quantum `<n^2>` minus the
    /// naive phase-space evaluation of `<((x^2+p^2-2)/4)^2>`.
    pub s0_mode_correction: f64,
    /// Coefficient `k` of the reference-only term `f(r) = k (r^2 - 1)^2`
    /// appearing in sum-observable second moments for thermal references;
    /// equivalently `<n^2> - <n>` of a thermal state.
    pub f_quartic_coeff: f64,
}

impl OrderingConstants {
    pub const VERIFIED: OrderingConstants = OrderingConstants {
        kappa2: -0.5,
        s0_mode_correction: -0.25,
        f_quartic_coeff: 0.5,
    };

    /// Thermal-reference factorial moment `f(r) = <n^2> - <n> = k (r^2-1)^2`.
    pub fn f_reference(&self, r: f64) -> f64 {
        let g = r * r - 1.0;
        self.f_quartic_coeff * g * g
    }

    /// Total `<S0^2>` correction for a two-mode product state.
    pub fn s0_total_correction(&self) -> f64 {
        2.0 * self.s0_mode_correction
    }
}

/// What a raw second moment in a [`StokesMomentSet`] represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasurementModel {
    /// True quantum expectation values (analytic sets).
    Quantum,
    /// Symmetric-ordered phase-space moments (Wigner sampling); estimators
    /// must add the ordering constants.
    Symmetric,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Analytic,
    Empirical { model: MeasurementModel },
}

impl Provenance {
    pub fn model(&self) -> MeasurementModel {
        match self {
            Provenance::Analytic => MeasurementModel::Quantum,
            Provenance::Empirical { model } => *model,
        }
    }
}

/// First and raw second moment of `S2` at one reference phase, with
/// standard errors when empirical.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AngleMoments {
    pub phi: f64,
    pub mean_s2: f64,
    /// Raw (non-central) second moment `<S2^2>`.
    pub second_s2: f64,
    pub n: Option<u64>,
    pub se_mean_s2: Option<f64>,
    pub se_second_s2: Option<f64>,
    /// Sampling covariance between the mean and the raw second moment
    /// (same shots enter both).
    pub cov_mean_second: Option<f64>,
}

impl AngleMoments {
    pub fn analytic(phi: f64, mean_s2: f64, second_s2: f64) -> Self {
        Self {
            phi,
            mean_s2,
            second_s2,
            n: None,
            se_mean_s2: None,
            se_second_s2: None,
            cov_mean_second: None,
        }
    }
}

/// Moments of the measured Stokes observables: one entry per reference
/// phase plus the phase-independent sum-observable moments.
#[derive(Clone, Debug, PartialEq)]
pub struct StokesMomentSet {
    pub entries: Vec<AngleMoments>,
    pub mean_s0: f64,
    pub second_s0: f64,
    pub n_s0: Option<u64>,
    pub se_mean_s0: Option<f64>,
    pub se_second_s0: Option<f64>,
    pub cov_s0: Option<f64>,
    pub provenance: Provenance,
}

impl StokesMomentSet {
    pub fn entry_at(&self, phi: f64) -> Option<&AngleMoments> {
        self.entries.iter().find(|e| same_angle(e.phi, phi))
    }

    pub fn model(&self) -> MeasurementModel {
        self.provenance.model()
    }

    /// Quantum second moment of `S2` at this entry, applying the ordering
    /// constant when the raw data is symmetric-ordered.
    pub fn quantum_second_s2(&self, entry: &AngleMoments) -> f64 {
        match self.model() {
            MeasurementModel::Quantum => entry.second_s2,
            MeasurementModel::Symmetric => entry.second_s2 + OrderingConstants::VERIFIED.kappa2,
        }
    }

    /// Quantum second moment of `S0`.
    pub fn quantum_second_s0(&self) -> f64 {
        match self.model() {
            MeasurementModel::Quantum => self.second_s0,
            MeasurementModel::Symmetric => {
                self.second_s0 + OrderingConstants::VERIFIED.s0_total_correction()
            }
        }
    }

    /// Checks that every stored second moment dominates its squared mean.
    pub fn validate(&self) -> Result<(), MomentError> {
        for e in &self.entries {
            // Allow a small slack: empirical raw moments satisfy the bound
            // exactly, but serialized values are rounded.
            let slack = 1e-9 * (1.0 + e.second_s2.abs());
            if e.second_s2 < e.mean_s2 * e.mean_s2 - slack {
                return Err(MomentError::NotASecondMoment {
                    phi: e.phi,
                    mean: e.mean_s2,
                    second: e.second_s2,
                });
            }
        }
        let slack = 1e-9 * (1.0 + self.second_s0.abs());
        if self.second_s0 < self.mean_s0 * self.mean_s0 - slack {
            return Err(MomentError::NotASecondMoment {
                phi: f64::NAN,
                mean: self.mean_s0,
                second: self.second_s0,
            });
        }
        Ok(())
    }
}

/// Reference-dependent coefficients of the `<S2^2>` formula.
pub(crate) fn uv_coefficients(reference: &ReferenceSpec) -> (f64, f64) {
    let p = reference.params();
    let (b2, c2, d2) = (p.b() * p.b(), p.c() * p.c(), p.d() * p.d());
    ((d2 + b2 + c2) / 8.0, (d2 + b2 - c2) / 8.0)
}

/// `<S2(phi)> = (1/2) d_R (<x_S> cos(phi) + <p_S> sin(phi))`.
pub fn mean_s2(signal: &GaussianParams, reference: &ReferenceSpec, phi: f64) -> f64 {
    let m = params_to_moments(signal);
    let d_r = reference.params().d();
    0.5 * d_r * (m.mean_x * phi.cos() + m.mean_p * phi.sin())
}

/// Symmetric-ordered part of `<S2^2(phi)>` (the phase-space moment).
pub fn second_s2_symmetric(signal: &GaussianParams, reference: &ReferenceSpec, phi: f64) -> f64 {
    let (u, v) = uv_coefficients(reference);
    let (b2, c2, d2) = (
        signal.b() * signal.b(),
        signal.c() * signal.c(),
        signal.d() * signal.d(),
    );
    u * (d2 + b2 + c2)
        + v * (b2 - c2) * (2.0 * signal.alpha() - 2.0 * phi).cos()
        + v * d2 * (2.0 * signal.beta() - 2.0 * phi).cos()
}

/// Quantum `<S2^2(phi)>`.
pub fn second_s2(signal: &GaussianParams, reference: &ReferenceSpec, phi: f64) -> f64 {
    second_s2_symmetric(signal, reference, phi) + OrderingConstants::VERIFIED.kappa2
}

/// `<S2^2(phi)>` written against the signal's raw second moments; used by
/// the estimator's linear-system path and equal to [`second_s2`] by the
/// angle-addition identities.
pub fn second_s2_from_moments(signal: &MomentForm, reference: &ReferenceSpec, phi: f64) -> f64 {
    let (u, v) = uv_coefficients(reference);
    let (sx, sp, sxp) = (signal.second_x(), signal.second_p(), signal.second_xp());
    let (s2p, c2p) = (2.0 * phi).sin_cos();
    u * (sx + sp) + v * (c2p * (sx - sp) + 2.0 * s2p * sxp) + OrderingConstants::VERIFIED.kappa2
}

/// `<S0> = (b_S^2+c_S^2+d_S^2)/4 + (b_R^2+c_R^2+d_R^2)/4 - 1`.
pub fn mean_s0(signal: &GaussianParams, reference: &ReferenceSpec) -> f64 {
    (signal.total_second_moment() + reference.params().total_second_moment()) / 4.0 - 1.0
}

/// Quantum `<n>` and `<n^2>` of a single Gaussian mode via the Wick
/// expansion of its quadrature moments.
pub fn mode_number_moments(m: &MomentForm) -> (f64, f64) {
    let (mx, mp) = (m.mean_x, m.mean_p);
    let (vx, vp, vxp) = (m.var_x, m.var_p, m.cov_xp);
    let q = vx + vp + mx * mx + mp * mp;
    // Symmetric-ordered fourth moments of a Gaussian with means.
    let x4 = 3.0 * vx * vx + 6.0 * vx * mx * mx + mx.powi(4);
    let p4 = 3.0 * vp * vp + 6.0 * vp * mp * mp + mp.powi(4);
    let x2p2 = vx * vp + 2.0 * vxp * vxp
        + vx * mp * mp
        + vp * mx * mx
        + 4.0 * vxp * mx * mp
        + mx * mx * mp * mp;
    let f = x4 + p4 + 2.0 * x2p2;
    // n = (x^2 + p^2 - 2)/4 is an operator identity; the quantum <n^2>
    // carries the per-mode ordering correction relative to the naive
    // phase-space square.
    let n_mean = (q - 2.0) / 4.0;
    let naive = (f - 4.0 * q + 4.0) / 16.0;
    let n_second = naive + OrderingConstants::VERIFIED.s0_mode_correction;
    (n_mean, n_second)
}

/// Naive symmetric-ordered `<S0^2>`: the population second moment a
/// phase-space sampler produces for `s0 = (x_S^2+p_S^2-2)/4 + (x_R^2+p_R^2-2)/4`.
pub fn second_s0_symmetric(signal: &GaussianParams, reference: &ReferenceSpec) -> f64 {
    second_s0(signal, reference) - OrderingConstants::VERIFIED.s0_total_correction()
}

/// Quantum `<S0^2> = <n_S^2> + 2 <n_S><n_R> + <n_R^2>` for the product state.
pub fn second_s0(signal: &GaussianParams, reference: &ReferenceSpec) -> f64 {
    let (ns, ns2) = mode_number_moments(&params_to_moments(signal));
    let (nr, nr2) = mode_number_moments(&params_to_moments(reference.params()));
    ns2 + 2.0 * ns * nr + nr2
}

/// Batches the analytic moments for a list of reference phases.
pub fn moment_set(
    signal: &GaussianParams,
    reference: &ReferenceSpec,
    phis: &[f64],
) -> StokesMomentSet {
    StokesMomentSet {
        entries: phis
            .iter()
            .map(|&phi| {
                AngleMoments::analytic(
                    phi,
                    mean_s2(signal, reference, phi),
                    second_s2(signal, reference, phi),
                )
            })
            .collect(),
        mean_s0: mean_s0(signal, reference),
        second_s0: second_s0(signal, reference),
        n_s0: None,
        se_mean_s0: None,
        se_second_s0: None,
        cov_s0: None,
        provenance: Provenance::Analytic,
    }
}

/// The three canonical reference phases: unaltered, diagonal, orthogonal.
pub const DEFAULT_ANGLES: [f64; 3] = [
    0.0,
    std::f64::consts::FRAC_PI_4,
    std::f64::consts::FRAC_PI_2,
];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn parse_opt(s: &str, what: &str) -> Result<Option<f64>, MomentError> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| MomentError::Format(format!("bad float {s:?} in {what}")))
}

/// Writes a moment set as CSV: a `#` header line carrying the
/// sum-observable moments and provenance, then one row per phase with
/// columns `phi,mean_s2,second_s2,n,se_mean_s2,se_second_s2,cov_mean_second`.
pub fn write_moment_csv<W: Write>(w: &mut W, ms: &StokesMomentSet) -> Result<(), MomentError> {
    let (prov, model) = match ms.provenance {
        Provenance::Analytic => ("analytic", "quantum"),
        Provenance::Empirical { model: MeasurementModel::Quantum } => ("empirical", "quantum"),
        Provenance::Empirical { model: MeasurementModel::Symmetric } => ("empirical", "symmetric"),
    };
    write!(
        w,
        "# mean_s0={} second_s0={} provenance={prov} model={model}",
        ms.mean_s0, ms.second_s0
    )?;
    if let Some(n) = ms.n_s0 {
        write!(w, " n_s0={n}")?;
    }
    for (k, v) in [
        ("se_mean_s0", ms.se_mean_s0),
        ("se_second_s0", ms.se_second_s0),
        ("cov_s0", ms.cov_s0),
    ] {
        if let Some(v) = v {
            write!(w, " {k}={v}")?;
        }
    }
    writeln!(w)?;
    writeln!(w, "phi,mean_s2,second_s2,n,se_mean_s2,se_second_s2,cov_mean_second")?;
    for e in &ms.entries {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            e.phi,
            e.mean_s2,
            e.second_s2,
            e.n.map(|n| n.to_string()).unwrap_or_default(),
            fmt_opt(e.se_mean_s2),
            fmt_opt(e.se_second_s2),
            fmt_opt(e.cov_mean_second),
        )?;
    }
    Ok(())
}

/// Reads the format produced by [`write_moment_csv`].
pub fn read_moment_csv<R: Read>(r: &mut R) -> Result<StokesMomentSet, MomentError> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut lines = text.lines().peekable();
    let mut header_tokens: Vec<String> = Vec::new();
    while let Some(line) = lines.peek() {
        match line.strip_prefix('#') {
            Some(rest) => {
                header_tokens.extend(rest.split_whitespace().map(str::to_string));
                lines.next();
            }
            None => break,
        }
    }
    if header_tokens.is_empty() {
        return Err(MomentError::Format(
            "first line must be the '#' summary header".into(),
        ));
    }

    let mut mean_s0 = None;
    let mut second_s0 = None;
    let mut n_s0 = None;
    let mut se_mean_s0 = None;
    let mut se_second_s0 = None;
    let mut cov_s0 = None;
    let mut prov = None;
    let mut model = None;
    for tok in &header_tokens {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| MomentError::Format(format!("bad header token {tok:?}")))?;
        match k {
            // Written by tooling for provenance of the file itself; not a moment.
            "timestamp" => {}
            "mean_s0" => mean_s0 = parse_opt(v, "header")?,
            "second_s0" => second_s0 = parse_opt(v, "header")?,
            "n_s0" => {
                n_s0 = Some(v.parse::<u64>().map_err(|_| {
                    MomentError::Format(format!("bad shot count {v:?} in header"))
                })?)
            }
            "se_mean_s0" => se_mean_s0 = parse_opt(v, "header")?,
            "se_second_s0" => se_second_s0 = parse_opt(v, "header")?,
            "cov_s0" => cov_s0 = parse_opt(v, "header")?,
            "provenance" => prov = Some(v.to_string()),
            "model" => model = Some(v.to_string()),
            _ => return Err(MomentError::Format(format!("unknown header key {k:?}"))),
        }
    }
    let provenance = match (prov.as_deref(), model.as_deref()) {
        (Some("analytic"), _) => Provenance::Analytic,
        (Some("empirical"), Some("quantum")) => {
            Provenance::Empirical { model: MeasurementModel::Quantum }
        }
        (Some("empirical"), Some("symmetric")) | (Some("empirical"), None) => {
            Provenance::Empirical { model: MeasurementModel::Symmetric }
        }
        (p, m) => {
            return Err(MomentError::Format(format!(
                "bad provenance/model: {p:?}/{m:?}"
            )))
        }
    };

    let columns = lines
        .next()
        .ok_or_else(|| MomentError::Format("missing column header".into()))?;
    if columns.trim() != "phi,mean_s2,second_s2,n,se_mean_s2,se_second_s2,cov_mean_second" {
        return Err(MomentError::Format(format!(
            "unexpected column header {columns:?}"
        )));
    }
    let mut entries = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(MomentError::Format(format!(
                "row {}: expected 7 fields, got {}",
                i + 1,
                fields.len()
            )));
        }
        let req = |s: &str, what: &str| -> Result<f64, MomentError> {
            parse_opt(s, what)?.ok_or_else(|| MomentError::Format(format!("missing {what}")))
        };
        entries.push(AngleMoments {
            phi: req(fields[0], "phi")?,
            mean_s2: req(fields[1], "mean_s2")?,
            second_s2: req(fields[2], "second_s2")?,
            n: match fields[3].trim() {
                "" => None,
                s => Some(s.parse::<u64>().map_err(|_| {
                    MomentError::Format(format!("bad shot count {s:?}"))
                })?),
            },
            se_mean_s2: parse_opt(fields[4], "se_mean_s2")?,
            se_second_s2: parse_opt(fields[5], "se_second_s2")?,
            cov_mean_second: parse_opt(fields[6], "cov_mean_second")?,
        });
    }
    let set = StokesMomentSet {
        entries,
        mean_s0: mean_s0.ok_or_else(|| MomentError::Format("header lacks mean_s0".into()))?,
        second_s0: second_s0
            .ok_or_else(|| MomentError::Format("header lacks second_s0".into()))?,
        n_s0,
        se_mean_s0,
        se_second_s0,
        cov_s0,
        provenance,
    };
    set.validate()?;
    Ok(set)
}
