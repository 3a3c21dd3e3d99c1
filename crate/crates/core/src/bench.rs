//! Monte Carlo experiment harness: empirical MSE of the estimators over
//! repeated sampled trials, parameter sweeps, convergence trajectories,
//! and two analytic demonstrations (indistinguishable states under a
//! non-displaced reference, and the bright-reference limit).
//!
//! Reproducibility contract: every trial draws from counter-derived
//! streams laid out as `(point * TRIALS_PER_POINT + trial) *
//! STREAMS_PER_TRIAL + angle`, so results are bit-identical for a given
//! (config, seed) regardless of thread count, and sweep points never
//! share draws.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::angles::wrapped_diff;
use crate::estimator::{
    estimate_cosine_fit, estimate_displaced_symmetric, estimate_general,
    estimate_squeezed_signal, feasibility_check, Assumptions, EstimatorError, Feasibility,
    SignalEstimate,
};
use crate::moments::{mean_s0, mean_s2, second_s0, second_s2, DEFAULT_ANGLES};
use crate::sampler::{equal_split_plan, sample_moments, SamplerError, SamplerMode};
use crate::states::{
    moments_to_params, ner, params_to_moments, reference_from_ner, GaussianParams, MomentForm,
    ReferenceSpec, StateError,
};

/// Stream slots reserved per trial; one angle per slot.
pub const STREAMS_PER_TRIAL: u64 = 64;
/// Trial slots reserved per sweep point.
pub const TRIALS_PER_POINT: u64 = 1 << 20;

pub const PARAM_NAMES: [&str; 5] = ["b", "c", "alpha", "d", "beta"];

#[derive(Debug, Error)]
pub enum BenchError {
    /// The configured estimator cannot work on this reference; the message
    /// names the violated condition.
    #[error("estimation is infeasible for this configuration: {0}")]
    Infeasible(String),
    #[error("invalid benchmark configuration: {0}")]
    Config(String),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error("csv write failed: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which reconstruction the benchmark drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimatorPath {
    General,
    CosineFit,
    SqueezedSignal,
    DisplacedSymmetric,
}

impl EstimatorPath {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorPath::General => "general",
            EstimatorPath::CosineFit => "cosine-fit",
            EstimatorPath::SqueezedSignal => "squeezed-signal",
            EstimatorPath::DisplacedSymmetric => "displaced-symmetric",
        }
    }

    /// Which of the five parameters this path estimates.
    pub fn param_mask(&self) -> [bool; 5] {
        match self {
            EstimatorPath::General | EstimatorPath::CosineFit => [true; 5],
            EstimatorPath::SqueezedSignal => [true, true, true, false, false],
            EstimatorPath::DisplacedSymmetric => [true, true, false, true, true],
        }
    }

    pub fn run(
        &self,
        ms: &crate::moments::StokesMomentSet,
        reference: &ReferenceSpec,
    ) -> Result<SignalEstimate, EstimatorError> {
        match self {
            EstimatorPath::General => estimate_general(ms, reference),
            EstimatorPath::CosineFit => estimate_cosine_fit(ms, reference),
            EstimatorPath::SqueezedSignal => estimate_squeezed_signal(ms, reference),
            EstimatorPath::DisplacedSymmetric => estimate_displaced_symmetric(ms, reference),
        }
    }

    /// Up-front feasibility gate: the benchmark refuses configurations the
    /// estimator cannot serve, naming the reason, instead of burning trials.
    pub fn check_feasible(&self, reference: &ReferenceSpec) -> Result<(), BenchError> {
        let class = match self {
            EstimatorPath::General | EstimatorPath::CosineFit => {
                feasibility_check(reference, &Assumptions::default())
            }
            EstimatorPath::SqueezedSignal => feasibility_check(
                reference,
                &Assumptions { squeezed_signal: true, ..Default::default() },
            ),
            EstimatorPath::DisplacedSymmetric => feasibility_check(
                reference,
                &Assumptions { displaced_symmetric: true, ..Default::default() },
            ),
        };
        match class {
            Feasibility::Full => Ok(()),
            Feasibility::SecondMomentsOnly => Err(BenchError::Infeasible(format!(
                "{} path cannot recover mean parameters: reference carries no displacement (d_R = 0)",
                self.name()
            ))),
            _ => Err(BenchError::Infeasible("reference is thermal: v = 0".to_string())),
        }
    }
}

/// One MSE experiment: M independent trials of N shots each.
#[derive(Clone, Debug)]
pub struct TrialConfig {
    pub signal: GaussianParams,
    pub reference: ReferenceSpec,
    /// Shots per trial, split across the angle set.
    pub shots: u64,
    /// Trial count M.
    pub trials: u32,
    pub angles: Vec<f64>,
    pub mode: SamplerMode,
    pub seed: u64,
    pub path: EstimatorPath,
    /// Stream block index; sweeps give each point its own block.
    pub point: u64,
    /// Bootstrap resamples for the MSE error bars.
    pub bootstrap: u32,
}

impl TrialConfig {
    /// Desk-scale defaults: M = 200 trials of N = 10^4 shots. Full-scale
    /// runs raise these through the public fields.
    pub fn new(signal: GaussianParams, reference: ReferenceSpec) -> Self {
        TrialConfig {
            signal,
            reference,
            shots: 10_000,
            trials: 200,
            angles: DEFAULT_ANGLES.to_vec(),
            mode: SamplerMode::Wigner,
            seed: 0,
            path: EstimatorPath::General,
            point: 0,
            bootstrap: 200,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.angles.is_empty() || self.angles.len() as u64 > STREAMS_PER_TRIAL {
            return Err(BenchError::Config(format!(
                "angle count must be in 1..={STREAMS_PER_TRIAL}"
            )));
        }
        if self.shots < self.angles.len() as u64 {
            return Err(BenchError::Config(format!(
                "shot budget {} cannot cover {} angles",
                self.shots,
                self.angles.len()
            )));
        }
        if self.trials < 2 {
            return Err(BenchError::Config(
                "at least 2 trials are needed for error bars".to_string(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ParamMse {
    pub name: &'static str,
    pub mse: f64,
    /// Bootstrap standard error of the MSE.
    pub se: Option<f64>,
    /// Trials that produced this parameter.
    pub n: u32,
}

#[derive(Clone, Debug)]
pub struct MseReport {
    /// Sweep coordinate, when produced by [`sweep`].
    pub axis: Option<(&'static str, f64)>,
    pub params: Vec<ParamMse>,
    pub trials: u32,
    /// Trials whose estimate failed outright (estimator error).
    pub trials_failed: u32,
    pub shots: u64,
    pub path: EstimatorPath,
    pub seed: u64,
}

impl MseReport {
    pub fn param(&self, name: &str) -> Option<&ParamMse> {
        self.params.iter().find(|p| p.name == name)
    }
}

fn truth_values(signal: &GaussianParams) -> [f64; 5] {
    [signal.b(), signal.c(), signal.alpha(), signal.d(), signal.beta()]
}

/// Squared wrapped errors of one estimate against the truth, masked to
/// the path's parameter set.
fn squared_errors(
    est: &SignalEstimate,
    truth: &[f64; 5],
    mask: &[bool; 5],
) -> [Option<f64>; 5] {
    let got = [est.b, est.c, est.alpha, est.d, est.beta];
    let mut out = [None; 5];
    for i in 0..5 {
        if !mask[i] {
            continue;
        }
        out[i] = got[i].map(|g| {
            let diff = match i {
                2 => wrapped_diff(g, truth[2], PI),
                4 => wrapped_diff(g, truth[4], est.beta_period.unwrap_or(TAU)),
                _ => g - truth[i],
            };
            diff * diff
        });
    }
    out
}

fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Bootstrap standard error of the mean of `errs`.
fn bootstrap_se(errs: &[f64], resamples: u32, rng: &mut ChaCha8Rng) -> Option<f64> {
    if errs.len() < 2 || resamples < 2 {
        return None;
    }
    let n = errs.len();
    let means: Vec<f64> = (0..resamples)
        .map(|_| {
            let mut s = 0.0;
            for _ in 0..n {
                s += errs[rng.random_range(0..n)];
            }
            s / n as f64
        })
        .collect();
    Some(sample_std(&means))
}

/// Runs M independent trials and reports the per-parameter empirical MSE
/// with bootstrap error bars. Trials run in parallel on independent
/// streams; the reduction is order-independent.
pub fn run_mse(cfg: &TrialConfig) -> Result<MseReport, BenchError> {
    cfg.validate()?;
    cfg.path.check_feasible(&cfg.reference)?;
    let truth = truth_values(&cfg.signal);
    let mask = cfg.path.param_mask();

    let outcomes: Vec<Result<Option<[Option<f64>; 5]>, BenchError>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let base = (cfg.point * TRIALS_PER_POINT + t as u64) * STREAMS_PER_TRIAL;
            let plan = equal_split_plan(&cfg.angles, cfg.shots, base);
            let ms = sample_moments(&cfg.signal, &cfg.reference, &plan, cfg.mode, cfg.seed)?;
            Ok(cfg
                .path
                .run(&ms, &cfg.reference)
                .ok()
                .map(|est| squared_errors(&est, &truth, &mask)))
        })
        .collect();

    let mut per_param: [Vec<f64>; 5] = Default::default();
    let mut trials_failed = 0;
    for outcome in outcomes {
        match outcome? {
            Some(errs) => {
                for (i, e) in errs.iter().enumerate() {
                    if let Some(e) = e {
                        per_param[i].push(*e);
                    }
                }
            }
            None => trials_failed += 1,
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ cfg.point.rotate_left(17) ^ 0xb007);
    let mut params = Vec::new();
    for i in 0..5 {
        if !mask[i] {
            continue;
        }
        let errs = &per_param[i];
        if errs.is_empty() {
            continue;
        }
        params.push(ParamMse {
            name: PARAM_NAMES[i],
            mse: errs.iter().sum::<f64>() / errs.len() as f64,
            se: bootstrap_se(errs, cfg.bootstrap, &mut rng),
            n: errs.len() as u32,
        });
    }
    Ok(MseReport {
        axis: None,
        params,
        trials: cfg.trials,
        trials_failed,
        shots: cfg.shots,
        path: cfg.path,
        seed: cfg.seed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Gamma,
    Delta,
    RRef,
    NStates,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Gamma => "gamma",
            SweepAxis::Delta => "delta",
            SweepAxis::RRef => "r_ref",
            SweepAxis::NStates => "n_states",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gamma" => Ok(SweepAxis::Gamma),
            "delta" => Ok(SweepAxis::Delta),
            "r_ref" => Ok(SweepAxis::RRef),
            "n_states" => Ok(SweepAxis::NStates),
            other => Err(format!(
                "unknown sweep axis '{other}' (expected gamma, delta, r_ref or n_states)"
            )),
        }
    }
}

#[derive(Debug)]
pub struct SweepPoint {
    pub axis: SweepAxis,
    pub value: f64,
    pub outcome: Result<MseReport, BenchError>,
}

/// Applies one sweep coordinate to a copy of the base config. Reference
/// axes re-derive the reference from its non-equilibrium decomposition
/// with one component replaced.
fn apply_axis(cfg: &TrialConfig, axis: SweepAxis, value: f64) -> Result<TrialConfig, BenchError> {
    let mut out = cfg.clone();
    match axis {
        SweepAxis::NStates => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(BenchError::Config(format!(
                    "n_states must be a positive integer, got {value}"
                )));
            }
            out.shots = value as u64;
        }
        _ => {
            let dec = ner(&cfg.reference);
            let base_r = cfg.reference.params().r();
            let (r, delta, gamma) = match axis {
                SweepAxis::Gamma => (base_r, dec.delta, Some(value)),
                SweepAxis::Delta => (base_r, value, dec.gamma),
                SweepAxis::RRef => (value, dec.delta, dec.gamma),
                SweepAxis::NStates => unreachable!(),
            };
            let gamma = gamma.ok_or_else(|| {
                BenchError::Config(
                    "displacement ratio is undefined for a thermal base reference; \
                     sweep from a non-thermal one"
                        .to_string(),
                )
            })?;
            out.reference = reference_from_ner(r, delta, gamma)?;
        }
    }
    Ok(out)
}

/// One MSE report per axis value. Points share the base seed but occupy
/// disjoint stream blocks; a failing point is recorded and the sweep
/// continues.
pub fn sweep(cfg: &TrialConfig, axis: SweepAxis, values: &[f64]) -> Vec<SweepPoint> {
    values
        .iter()
        .enumerate()
        .map(|(i, &value)| {
            let outcome = apply_axis(cfg, axis, value).and_then(|mut point_cfg| {
                point_cfg.point = cfg.point + 1 + i as u64;
                let mut report = run_mse(&point_cfg)?;
                report.axis = Some((axis.name(), value));
                Ok(report)
            });
            SweepPoint { axis, value, outcome }
        })
        .collect()
}

/// Sweep results in plot-ready long format. Failed points become comment
/// lines so the file still records them.
pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], mut w: W) -> Result<(), BenchError> {
    writeln!(w, "axis_value,param,mse,mse_err")?;
    for p in points {
        match &p.outcome {
            Ok(report) => {
                for pm in &report.params {
                    writeln!(
                        w,
                        "{},{},{},{}",
                        p.value,
                        pm.name,
                        pm.mse,
                        pm.se.map(|s| s.to_string()).unwrap_or_default()
                    )?;
                }
            }
            Err(e) => writeln!(w, "# {}={} error: {}", p.axis.name(), p.value, e)?,
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergencePoint {
    pub n: u64,
    pub param: &'static str,
    pub estimate: Option<f64>,
    pub stderr: Option<f64>,
    pub truth: f64,
}

/// Single-trial estimate trajectories against the shot budget: one
/// estimation run per n, all five parameters (or the path's subset), with
/// the estimator's own standard errors as the band.
pub fn convergence_study(
    cfg: &TrialConfig,
    n_values: &[u64],
) -> Result<Vec<ConvergencePoint>, BenchError> {
    cfg.validate()?;
    cfg.path.check_feasible(&cfg.reference)?;
    let truth = truth_values(&cfg.signal);
    let mask = cfg.path.param_mask();
    let mut out = Vec::new();
    for (i, &n) in n_values.iter().enumerate() {
        if n < cfg.angles.len() as u64 {
            return Err(BenchError::Config(format!(
                "shot budget {n} cannot cover {} angles",
                cfg.angles.len()
            )));
        }
        let base = (cfg.point * TRIALS_PER_POINT + i as u64) * STREAMS_PER_TRIAL;
        let plan = equal_split_plan(&cfg.angles, n, base);
        let ms = sample_moments(&cfg.signal, &cfg.reference, &plan, cfg.mode, cfg.seed)?;
        let est = cfg.path.run(&ms, &cfg.reference).ok();
        for p in 0..5 {
            if !mask[p] {
                continue;
            }
            let (estimate, stderr) = match &est {
                Some(e) => {
                    let got = [e.b, e.c, e.alpha, e.d, e.beta];
                    let ses = [e.se.b, e.se.c, e.se.alpha, e.se.d, e.se.beta];
                    (got[p], ses[p])
                }
                None => (None, None),
            };
            out.push(ConvergencePoint { n, param: PARAM_NAMES[p], estimate, stderr, truth: truth[p] });
        }
    }
    Ok(out)
}

pub fn write_convergence_csv<W: Write>(
    points: &[ConvergencePoint],
    mut w: W,
) -> Result<(), BenchError> {
    writeln!(w, "n,param,estimate,stderr,truth")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{}",
            p.n,
            p.param,
            p.estimate.map(|v| v.to_string()).unwrap_or_default(),
            p.stderr.map(|v| v.to_string()).unwrap_or_default(),
            p.truth
        )?;
    }
    Ok(())
}

/// One compared moment in the indistinguishability report.
#[derive(Clone, Debug)]
pub struct MomentPair {
    pub what: String,
    pub value_a: f64,
    pub value_b: f64,
    pub rel_diff: f64,
}

fn pair(what: impl Into<String>, a: f64, b: f64) -> MomentPair {
    MomentPair {
        what: what.into(),
        value_a: a,
        value_b: b,
        rel_diff: (a - b).abs() / a.abs().max(b.abs()).max(1e-300),
    }
}

#[derive(Debug)]
pub struct IndistinguishabilityReport {
    pub signal_a: GaussianParams,
    pub signal_b: GaussianParams,
    /// The non-displaced squeezed reference both signals are measured with.
    pub reference: ReferenceSpec,
    /// Moments identical under that reference, plus the conserved
    /// combinations that force the degeneracy.
    pub matched: Vec<MomentPair>,
    /// The same moments under a displaced reference, where the two states
    /// separate again.
    pub resolved: Vec<MomentPair>,
    pub max_matched_rel_diff: f64,
}

/// Two distinct Gaussian signals that no non-displaced reference can tell
/// apart: they share b^2 + c^2, d^2 and the number moments, which is all
/// such a reference ever sees. A displaced reference resolves them
/// immediately.
pub fn indistinguishability_demo() -> IndistinguishabilityReport {
    let signal_a = GaussianParams::from_eigen(2.0, 2.0, 0.0, 3.0, 0.0).unwrap();
    // The second signal is specified by its axes (1.5118, 2.3905), axis
    // direction 4.0228 and mean vector (2.9451, 0.5714); build it through
    // its covariance so the constructor's canonical form is irrelevant.
    let (bb, cc, aa) = (1.5118f64, 2.3905f64, 4.0228f64);
    let (b2, c2) = (bb * bb, cc * cc);
    let (ca, sa) = (aa.cos(), aa.sin());
    let m = MomentForm {
        mean_x: 2.9451,
        mean_p: 0.5714,
        var_x: b2 * ca * ca + c2 * sa * sa,
        var_p: b2 * sa * sa + c2 * ca * ca,
        cov_xp: (b2 - c2) * ca * sa,
    };
    let signal_b = moments_to_params(&m).unwrap();

    let squeezed = ReferenceSpec::from_rqd(1.0, 2.0, 0.0).unwrap();
    let displaced = ReferenceSpec::coherent(2.0).unwrap();

    let compare = |reference: &ReferenceSpec| -> Vec<MomentPair> {
        let mut rows = Vec::new();
        for phi in DEFAULT_ANGLES {
            rows.push(pair(
                format!("second_s2(phi={phi:.6})"),
                second_s2(&signal_a, reference, phi),
                second_s2(&signal_b, reference, phi),
            ));
            rows.push(pair(
                format!("mean_s2(phi={phi:.6})"),
                mean_s2(&signal_a, reference, phi),
                mean_s2(&signal_b, reference, phi),
            ));
        }
        rows.push(pair(
            "mean_s0",
            mean_s0(&signal_a, reference),
            mean_s0(&signal_b, reference),
        ));
        rows.push(pair(
            "second_s0",
            second_s0(&signal_a, reference),
            second_s0(&signal_b, reference),
        ));
        rows
    };

    let mut matched = compare(&squeezed);
    let sq = |p: &GaussianParams| (p.b() * p.b() + p.c() * p.c(), p.d() * p.d());
    let (bc_a, d2_a) = sq(&signal_a);
    let (bc_b, d2_b) = sq(&signal_b);
    matched.push(pair("b^2 + c^2", bc_a, bc_b));
    matched.push(pair("d^2", d2_a, d2_b));

    let resolved = compare(&displaced);
    let max_matched_rel_diff =
        matched.iter().map(|r| r.rel_diff).fold(0.0, f64::max);
    IndistinguishabilityReport {
        signal_a,
        signal_b,
        reference: squeezed,
        matched,
        resolved,
        max_matched_rel_diff,
    }
}

impl std::fmt::Display for IndistinguishabilityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "two distinct signals measured against a non-displaced squeezed reference \
             (r = {:.3}, q = {:.3}):",
            self.reference.params().r(),
            self.reference.params().q()
        )?;
        writeln!(f, "  A: {}", self.signal_a)?;
        writeln!(f, "  B: {}", self.signal_b)?;
        writeln!(f, "matched moments (max relative difference {:.3e}):", self.max_matched_rel_diff)?;
        for r in &self.matched {
            writeln!(
                f,
                "  {:<24} A = {:<22.12} B = {:<22.12} rel diff {:.3e}",
                r.what, r.value_a, r.value_b, r.rel_diff
            )?;
        }
        writeln!(f, "under a displaced reference (d_R = 2) the same states separate:")?;
        for r in &self.resolved {
            if r.rel_diff > 1e-3 {
                writeln!(
                    f,
                    "  {:<24} A = {:<22.12} B = {:<22.12} rel diff {:.3e}",
                    r.what, r.value_a, r.value_b, r.rel_diff
                )?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct HomodynePoint {
    pub d_r: f64,
    pub phi: f64,
    /// `4 <S2^2(phi)> / d_R^2`.
    pub normalized: f64,
    /// The signal's second moment along phi.
    pub target: f64,
    pub rel_dev: f64,
}

/// Bright-coherent-reference limit: with b_R = c_R = 1 the normalized
/// second moment `4 <S2^2(phi)> / d_R^2` tends to the signal's directional
/// second moment as d_R grows, with error falling as 1/d_R^2. This is the
/// regime where the scheme degenerates into plain quadrature tomography.
pub fn homodyne_limit_check(
    signal: &GaussianParams,
    d_r_values: &[f64],
) -> Result<Vec<HomodynePoint>, BenchError> {
    let m = params_to_moments(signal);
    let mut out = Vec::new();
    for &d_r in d_r_values {
        let reference = ReferenceSpec::coherent(d_r)?;
        for phi in DEFAULT_ANGLES {
            let normalized = 4.0 * second_s2(signal, &reference, phi) / (d_r * d_r);
            let target = m.directional_second(phi);
            out.push(HomodynePoint {
                d_r,
                phi,
                normalized,
                target,
                rel_dev: (normalized - target).abs() / target.abs().max(1e-300),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::OrderingConstants;
    use approx::assert_relative_eq;

    fn bright_signal() -> GaussianParams {
        GaussianParams::from_eigen(237.0, 86.0, 0.7, 158.0, 0.2).unwrap()
    }

    fn quick_cfg(shots: u64, trials: u32) -> TrialConfig {
        let mut cfg = TrialConfig::new(
            bright_signal(),
            reference_from_ner(1.0, 10.0, 1.0).unwrap(),
        );
        cfg.shots = shots;
        cfg.trials = trials;
        cfg.bootstrap = 100;
        cfg
    }

    #[test]
    fn config_invariants_are_enforced() {
        let mut cfg = quick_cfg(100, 10);
        cfg.shots = 2;
        assert!(matches!(run_mse(&cfg), Err(BenchError::Config(_))));
        let mut cfg = quick_cfg(100, 1);
        cfg.trials = 1;
        assert!(matches!(run_mse(&cfg), Err(BenchError::Config(_))));
    }

    #[test]
    fn mse_reports_are_deterministic() {
        let cfg = quick_cfg(900, 8);
        let a = run_mse(&cfg).unwrap();
        let b = run_mse(&cfg).unwrap();
        for (pa, pb) in a.params.iter().zip(&b.params) {
            assert_eq!(pa.mse, pb.mse);
            assert_eq!(pa.se, pb.se);
        }
    }

    #[test]
    fn general_path_reports_all_five_parameters() {
        // Enough shots that no trial loses its eigen decomposition to noise.
        let report = run_mse(&quick_cfg(5_000, 6)).unwrap();
        let names: Vec<_> = report.params.iter().map(|p| p.name).collect();
        assert_eq!(names, PARAM_NAMES.to_vec());
        assert_eq!(report.trials_failed, 0);
        for p in &report.params {
            assert!(p.mse >= 0.0);
            assert!(p.se.unwrap() > 0.0);
            assert_eq!(p.n, 6);
        }
    }

    #[test]
    fn special_paths_report_their_parameter_subsets() {
        let squeezed = GaussianParams::from_eigen(237.0, 86.0, 0.7, 0.0, 0.0).unwrap();
        let mut cfg = quick_cfg(900, 4);
        cfg.signal = squeezed;
        cfg.reference = reference_from_ner(1.0, 1.0, 0.0).unwrap();
        cfg.path = EstimatorPath::SqueezedSignal;
        let names: Vec<_> =
            run_mse(&cfg).unwrap().params.iter().map(|p| p.name).collect();
        assert_eq!(names, vec!["b", "c", "alpha"]);

        let displaced = GaussianParams::from_eigen(86.0, 86.0, 0.0, 158.0, 0.2).unwrap();
        let mut cfg = quick_cfg(900, 4);
        cfg.signal = displaced;
        cfg.reference = reference_from_ner(1.0, 1.0, 0.0).unwrap();
        cfg.path = EstimatorPath::DisplacedSymmetric;
        let names: Vec<_> =
            run_mse(&cfg).unwrap().params.iter().map(|p| p.name).collect();
        assert_eq!(names, vec!["b", "c", "d", "beta"]);
    }

    #[test]
    fn mse_scales_inversely_with_shots() {
        let mut small = quick_cfg(1_500, 40);
        small.point = 5;
        let mut large = quick_cfg(6_000, 40);
        large.point = 6;
        let a = run_mse(&small).unwrap();
        let b = run_mse(&large).unwrap();
        // 4x the shots should cut the MSE by about 4; allow a wide band.
        for name in ["b", "c", "d"] {
            let ratio = a.param(name).unwrap().mse / b.param(name).unwrap().mse;
            assert!(
                (2.0..8.0).contains(&ratio),
                "{name}: MSE ratio {ratio:.2} not near 4"
            );
        }
    }

    #[test]
    fn general_path_refuses_squeezed_only_reference() {
        let mut cfg = quick_cfg(900, 4);
        cfg.reference = reference_from_ner(1.0, 1.0, 0.0).unwrap();
        let err = run_mse(&cfg).unwrap_err();
        match err {
            BenchError::Infeasible(msg) => {
                assert!(msg.contains("displacement"), "message: {msg}")
            }
            other => panic!("expected Infeasible, got {other:?}"),
        }
    }

    #[test]
    fn all_paths_refuse_thermal_references() {
        for path in [
            EstimatorPath::General,
            EstimatorPath::CosineFit,
            EstimatorPath::SqueezedSignal,
            EstimatorPath::DisplacedSymmetric,
        ] {
            let mut cfg = quick_cfg(900, 4);
            cfg.reference = ReferenceSpec::thermal(1.5).unwrap();
            cfg.path = path;
            let err = run_mse(&cfg).unwrap_err();
            assert!(err.to_string().contains("thermal"), "{path:?}: {err}");
        }
    }

    #[test]
    fn sweep_records_failures_and_continues() {
        let mut cfg = quick_cfg(900, 4);
        cfg.reference = reference_from_ner(1.0, 1.0, 1.0).unwrap();
        let points = sweep(&cfg, SweepAxis::Gamma, &[1.0, 0.0, 0.5]);
        assert_eq!(points.len(), 3);
        assert!(points[0].outcome.is_ok());
        assert!(matches!(points[1].outcome, Err(BenchError::Infeasible(_))));
        assert!(points[2].outcome.is_ok());
        let report = points[2].outcome.as_ref().unwrap();
        assert_eq!(report.axis, Some(("gamma", 0.5)));
    }

    #[test]
    fn sweep_points_use_disjoint_streams() {
        let cfg = quick_cfg(900, 4);
        let points = sweep(&cfg, SweepAxis::NStates, &[900.0, 900.0]);
        let a = points[0].outcome.as_ref().unwrap();
        let b = points[1].outcome.as_ref().unwrap();
        // Same coordinate, different stream block: independent draws.
        assert_ne!(a.param("b").unwrap().mse, b.param("b").unwrap().mse);
    }

    #[test]
    fn sweeps_are_reproducible() {
        let cfg = quick_cfg(900, 4);
        let a = sweep(&cfg, SweepAxis::Delta, &[1.0, 10.0]);
        let b = sweep(&cfg, SweepAxis::Delta, &[1.0, 10.0]);
        for (pa, pb) in a.iter().zip(&b) {
            let (ra, rb) = (pa.outcome.as_ref().unwrap(), pb.outcome.as_ref().unwrap());
            for (x, y) in ra.params.iter().zip(&rb.params) {
                assert_eq!(x.mse, y.mse);
            }
        }
    }

    #[test]
    fn sweep_csv_is_long_format_with_error_comments() {
        let mut cfg = quick_cfg(900, 4);
        cfg.reference = reference_from_ner(1.0, 1.0, 1.0).unwrap();
        let points = sweep(&cfg, SweepAxis::Gamma, &[1.0, 0.0]);
        let mut buf = Vec::new();
        write_sweep_csv(&points, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("axis_value,param,mse,mse_err\n"));
        assert!(text.lines().any(|l| l.starts_with("1,b,")));
        assert!(text.lines().any(|l| l.starts_with("# gamma=0 error:")));
    }

    #[test]
    fn convergence_study_is_deterministic_and_tightens() {
        let mut cfg = quick_cfg(900, 4);
        cfg.seed = 42;
        let ns = [100u64, 100_000];
        let a = convergence_study(&cfg, &ns).unwrap();
        let b = convergence_study(&cfg, &ns).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        // The big-shot point lands within 3 standard errors of truth on
        // every parameter.
        for p in a.iter().filter(|p| p.n == 100_000) {
            let (est, se) = (p.estimate.unwrap(), p.stderr.unwrap());
            let diff = match p.param {
                "alpha" => wrapped_diff(est, p.truth, PI),
                "beta" => wrapped_diff(est, p.truth, TAU),
                _ => est - p.truth,
            };
            assert!(
                diff.abs() <= 3.0 * se,
                "{}: {est} vs {} (se {se})",
                p.param,
                p.truth
            );
        }
        // The bands shrink by roughly sqrt(1000) between the two budgets.
        let se_at = |n: u64, name: &str| {
            a.iter().find(|p| p.n == n && p.param == name).unwrap().stderr.unwrap()
        };
        assert!(se_at(100, "b") > 5.0 * se_at(100_000, "b"));
        let mut buf = Vec::new();
        write_convergence_csv(&a, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("n,param,estimate,stderr,truth\n"));
    }

    #[test]
    fn indistinguishable_pair_matches_under_squeezed_reference() {
        let report = indistinguishability_demo();
        assert!(
            report.max_matched_rel_diff <= 1e-3,
            "max rel diff {:.3e}",
            report.max_matched_rel_diff
        );
        // The two states are genuinely different...
        let (a, b) = (&report.signal_a, &report.signal_b);
        assert!((a.b() - b.b()).abs() > 0.3);
        // ...and a displaced reference tells them apart.
        let max_resolved = report
            .resolved
            .iter()
            .map(|r| r.rel_diff)
            .fold(0.0, f64::max);
        assert!(max_resolved > 1e-2, "displaced reference should separate the pair");
        // Conserved combinations pin the degeneracy.
        let d2 = report.matched.iter().find(|r| r.what == "d^2").unwrap();
        assert_relative_eq!(d2.value_a, 9.0, max_relative = 1e-12);
        assert!((d2.value_b - 9.0001).abs() < 2e-4);
        let text = report.to_string();
        assert!(text.contains("b^2 + c^2"));
    }

    #[test]
    fn homodyne_limit_reaches_the_directional_second_moment() {
        let signal = bright_signal();
        let points = homodyne_limit_check(&signal, &[1e2, 1e3, 1e4]).unwrap();
        for p in points.iter().filter(|p| p.d_r == 1e4) {
            assert!(p.rel_dev < 0.01, "phi {}: rel dev {}", p.phi, p.rel_dev);
        }
        // Error falls as 1/d_R^2: two decades in d_R = four in deviation,
        // checked between adjacent decades.
        let dev = |d: f64, phi: f64| {
            points.iter().find(|p| p.d_r == d && p.phi == phi).unwrap().rel_dev
        };
        for phi in DEFAULT_ANGLES {
            let ratio = dev(1e2, phi) / dev(1e3, phi);
            assert!(
                (80.0..130.0).contains(&ratio),
                "phi {phi}: deviation ratio {ratio:.1} not near 100"
            );
        }
    }

    #[test]
    fn homodyne_limit_of_vacuum_is_unity() {
        let points = homodyne_limit_check(&GaussianParams::vacuum(), &[1e4]).unwrap();
        for p in points {
            assert_relative_eq!(p.normalized, 1.0, max_relative = 0.01);
            assert_relative_eq!(p.target, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn ordering_gap_is_visible_in_the_sampler_modes() {
        // Wigner sampling measures symmetric-ordered moments; the
        // estimator corrects for it, so both presentations give the same
        // MSE scale. This pins the end-to-end ordering plumbing.
        let oc = OrderingConstants::VERIFIED;
        assert_eq!(oc.kappa2, -0.5);
        let mut cfg = quick_cfg(2_000, 6);
        cfg.point = 9;
        let report = run_mse(&cfg).unwrap();
        assert_eq!(report.trials_failed, 0);
    }
}
