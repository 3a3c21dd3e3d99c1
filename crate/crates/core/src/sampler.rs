//! Monte Carlo generation of Stokes measurement data by phase-space
//! sampling.
//!
//! Shots are drawn from the Wigner function of the two-mode product state,
//! which for Gaussian states is an ordinary bivariate normal per mode. The
//! per-shot statistics `s2 = (x_S x_R + p_S p_R)/2` and
//! `s0 = (x_S^2+p_S^2-2)/4 + (x_R^2+p_R^2-2)/4` reproduce the quantum
//! means exactly, while their raw second moments converge to the
//! symmetric-ordered values; the gap to the quantum second moments is the
//! ordering constants of [`crate::moments`]. [`SamplerMode`] controls
//! whether that gap is left in the data (`Wigner`) or applied as recorded
//! offsets (`Calibrated`).
//!
//! Reproducibility contract: a shot stream is fully determined by
//! `(seed, stream, chunk index)`. Chunks of `CHUNK` shots get independent
//! ChaCha8 generators keyed through a SplitMix64 chain and are merged in
//! index order, so results are bit-identical for any thread count.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::moments::{
    AngleMoments, MeasurementModel, OrderingConstants, Provenance, StokesMomentSet,
};
use crate::states::{params_to_moments, rotate, GaussianParams, MomentForm, ReferenceSpec};

/// Shots per RNG chunk; the parallel unit of work.
pub const CHUNK: u64 = 1 << 16;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("no measurement phases were requested")]
    EmptyPlan,
    #[error("zero shots requested at phi = {0}")]
    ZeroShots(f64),
    #[error("covariance is not positive definite: {0}")]
    BadCovariance(&'static str),
    #[error(
        "calibrated output would need per-shot noise of variance {required_variance} (negative); \
         enable offset bookkeeping or keep the raw moments"
    )]
    CalibrationUnavailable { required_variance: f64 },
    #[error("shot csv: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Identifies an independent shot stream. Streams with the same seed but
/// different stream numbers are statistically independent, as are chunks
/// within a stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedSpec {
    pub seed: u64,
    pub stream: u64,
}

impl SeedSpec {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// ChaCha8 generator for one chunk, keyed by (seed, stream, chunk).
    pub fn chunk_rng(&self, chunk: u64) -> ChaCha8Rng {
        let mut state = self.seed;
        let _ = splitmix64(&mut state);
        state ^= self.stream.wrapping_mul(0xbf58476d1ce4e5b9);
        let _ = splitmix64(&mut state);
        state ^= chunk.wrapping_mul(0x94d049bb133111eb);
        let mut key = [0u8; 32];
        for word in key.chunks_exact_mut(8) {
            word.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}

/// How sampled second moments are reported.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplerMode {
    /// Raw phase-space moments (symmetric-ordered).
    Wigner,
    /// Quantum-ordered moments. The required per-shot noise variance is
    /// negative, so this only works by applying the ordering constants as
    /// recorded offsets; `offset_bookkeeping` must be enabled.
    Calibrated { offset_bookkeeping: bool },
}

/// One measurement phase in a sampling run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnglePlan {
    pub phi: f64,
    pub shots: u64,
    /// Stream number for this angle; angles must not share streams unless
    /// identical draws are wanted.
    pub stream: u64,
}

/// Splits `total` shots over the phases, remainder to the earliest angles,
/// with consecutive streams from `base_stream`.
pub fn equal_split_plan(phis: &[f64], total: u64, base_stream: u64) -> Vec<AnglePlan> {
    let k = phis.len() as u64;
    phis.iter()
        .enumerate()
        .map(|(i, &phi)| AnglePlan {
            phi,
            shots: total / k + u64::from((i as u64) < total % k),
            stream: base_stream + i as u64,
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShotRecord {
    pub phi: f64,
    pub s2: f64,
    pub s0: f64,
}

/// Samples one mode's phase-space distribution: mean vector plus the
/// Cholesky factor of the 2x2 covariance.
struct BivariateSampler {
    mean_x: f64,
    mean_p: f64,
    l11: f64,
    l21: f64,
    l22: f64,
}

impl BivariateSampler {
    fn new(m: &MomentForm) -> Result<Self, SamplerError> {
        if !(m.var_x > 0.0) {
            return Err(SamplerError::BadCovariance("var_x must be positive"));
        }
        let l11 = m.var_x.sqrt();
        let l21 = m.cov_xp / l11;
        let rem = m.var_p - l21 * l21;
        if !(rem > 0.0) {
            return Err(SamplerError::BadCovariance(
                "covariance matrix has a non-positive eigenvalue",
            ));
        }
        Ok(Self {
            mean_x: m.mean_x,
            mean_p: m.mean_p,
            l11,
            l21,
            l22: rem.sqrt(),
        })
    }

    #[inline]
    fn draw(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        (
            self.mean_x + self.l11 * z1,
            self.mean_p + self.l21 * z1 + self.l22 * z2,
        )
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct PowerSums {
    p1: f64,
    p2: f64,
    p3: f64,
    p4: f64,
}

impl PowerSums {
    #[inline]
    fn add(&mut self, v: f64) {
        let v2 = v * v;
        self.p1 += v;
        self.p2 += v2;
        self.p3 += v2 * v;
        self.p4 += v2 * v2;
    }

    fn merge(&mut self, o: &PowerSums) {
        self.p1 += o.p1;
        self.p2 += o.p2;
        self.p3 += o.p3;
        self.p4 += o.p4;
    }

    /// Point estimates and delta-method standard errors of the mean and
    /// raw second moment.
    fn stats(&self, n: u64) -> MomentStats {
        let nf = n as f64;
        let mean = self.p1 / nf;
        let second = self.p2 / nf;
        if n < 2 {
            return MomentStats { mean, second, se_mean: None, se_second: None, cov: None };
        }
        let var = ((second - mean * mean) * nf / (nf - 1.0)).max(0.0);
        let m3 = self.p3 / nf;
        let m4 = self.p4 / nf;
        MomentStats {
            mean,
            second,
            se_mean: Some((var / nf).sqrt()),
            se_second: Some(((m4 - second * second).max(0.0) / nf).sqrt()),
            cov: Some((m3 - mean * second) / nf),
        }
    }
}

struct MomentStats {
    mean: f64,
    second: f64,
    se_mean: Option<f64>,
    se_second: Option<f64>,
    cov: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default)]
struct ChunkSums {
    n: u64,
    s2: PowerSums,
    s0: PowerSums,
}

impl ChunkSums {
    #[inline]
    fn add(&mut self, s2: f64, s0: f64) {
        self.n += 1;
        self.s2.add(s2);
        self.s0.add(s0);
    }

    fn merge(&mut self, o: &ChunkSums) {
        self.n += o.n;
        self.s2.merge(&o.s2);
        self.s0.merge(&o.s0);
    }
}

#[inline]
fn shot_stats(xs: f64, ps: f64, xr: f64, pr: f64) -> (f64, f64) {
    (
        0.5 * (xs * xr + ps * pr),
        (xs * xs + ps * ps + xr * xr + pr * pr - 4.0) / 4.0,
    )
}

/// Accumulates one angle's shots in parallel chunks, merging in chunk
/// order so the result is independent of the thread count.
fn run_angle(
    signal: &BivariateSampler,
    reference: &BivariateSampler,
    shots: u64,
    seed: SeedSpec,
) -> ChunkSums {
    let n_chunks = shots.div_ceil(CHUNK);
    let partials: Vec<ChunkSums> = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let mut rng = seed.chunk_rng(ci);
            let n = CHUNK.min(shots - ci * CHUNK);
            let mut sums = ChunkSums::default();
            for _ in 0..n {
                let (xs, ps) = signal.draw(&mut rng);
                let (xr, pr) = reference.draw(&mut rng);
                let (s2, s0) = shot_stats(xs, ps, xr, pr);
                sums.add(s2, s0);
            }
            sums
        })
        .collect();
    let mut total = ChunkSums::default();
    for p in &partials {
        total.merge(p);
    }
    total
}

fn check_plan(plan: &[AnglePlan]) -> Result<(), SamplerError> {
    if plan.is_empty() {
        return Err(SamplerError::EmptyPlan);
    }
    for a in plan {
        if a.shots == 0 {
            return Err(SamplerError::ZeroShots(a.phi));
        }
    }
    Ok(())
}

/// The per-mode samplers for a configuration: the reference is rotated by
/// `-phi`, which is where the measurement phase physically acts.
fn mode_samplers(
    signal: &GaussianParams,
    reference: &ReferenceSpec,
    phi: f64,
) -> Result<(BivariateSampler, BivariateSampler), SamplerError> {
    let sig = BivariateSampler::new(&params_to_moments(signal))?;
    let refr = BivariateSampler::new(&params_to_moments(&rotate(reference.params(), -phi)))?;
    Ok((sig, refr))
}

fn assemble(
    entries: Vec<AngleMoments>,
    s0: MomentStats,
    n_total: u64,
    mode: SamplerMode,
) -> Result<StokesMomentSet, SamplerError> {
    let mut set = StokesMomentSet {
        entries,
        mean_s0: s0.mean,
        second_s0: s0.second,
        n_s0: Some(n_total),
        se_mean_s0: s0.se_mean,
        se_second_s0: s0.se_second,
        cov_s0: s0.cov,
        provenance: Provenance::Empirical { model: MeasurementModel::Symmetric },
    };
    match mode {
        SamplerMode::Wigner => Ok(set),
        SamplerMode::Calibrated { offset_bookkeeping } => {
            let oc = OrderingConstants::VERIFIED;
            // Turning raw into quantum moments per shot would mean adding
            // independent noise of variance kappa2; kappa2 < 0, so no noise
            // channel exists and the constants can only be applied as
            // deterministic offsets. Offsets move the point estimates and
            // leave every standard error unchanged.
            if !offset_bookkeeping {
                return Err(SamplerError::CalibrationUnavailable {
                    required_variance: oc.kappa2,
                });
            }
            for e in &mut set.entries {
                e.second_s2 += oc.kappa2;
            }
            set.second_s0 += oc.s0_total_correction();
            set.provenance = Provenance::Empirical { model: MeasurementModel::Quantum };
            Ok(set)
        }
    }
}

/// Samples the full measurement plan and reduces it to moments without
/// materializing shots.
pub fn sample_moments(
    signal: &GaussianParams,
    reference: &ReferenceSpec,
    plan: &[AnglePlan],
    mode: SamplerMode,
    seed: u64,
) -> Result<StokesMomentSet, SamplerError> {
    check_plan(plan)?;
    let mut entries = Vec::with_capacity(plan.len());
    let mut s0_sums = PowerSums::default();
    let mut n_total = 0u64;
    for a in plan {
        let (sig, refr) = mode_samplers(signal, reference, a.phi)?;
        let sums = run_angle(&sig, &refr, a.shots, SeedSpec::new(seed, a.stream));
        let st = sums.s2.stats(sums.n);
        entries.push(AngleMoments {
            phi: a.phi,
            mean_s2: st.mean,
            second_s2: st.second,
            n: Some(sums.n),
            se_mean_s2: st.se_mean,
            se_second_s2: st.se_second,
            cov_mean_second: st.cov,
        });
        s0_sums.merge(&sums.s0);
        n_total += sums.n;
    }
    assemble(entries, s0_sums.stats(n_total), n_total, mode)
}

/// Materializes individual shots; draws are identical to what
/// [`sample_moments`] consumes for the same plan and seed.
pub fn sample_batch(
    signal: &GaussianParams,
    reference: &ReferenceSpec,
    plan: &[AnglePlan],
    seed: u64,
) -> Result<Vec<ShotRecord>, SamplerError> {
    check_plan(plan)?;
    let mut out = Vec::with_capacity(plan.iter().map(|a| a.shots as usize).sum());
    for a in plan {
        let (sig, refr) = mode_samplers(signal, reference, a.phi)?;
        let seed = SeedSpec::new(seed, a.stream);
        let n_chunks = a.shots.div_ceil(CHUNK);
        for ci in 0..n_chunks {
            let mut rng = seed.chunk_rng(ci);
            let n = CHUNK.min(a.shots - ci * CHUNK);
            for _ in 0..n {
                let (xs, ps) = sig.draw(&mut rng);
                let (xr, pr) = refr.draw(&mut rng);
                let (s2, s0) = shot_stats(xs, ps, xr, pr);
                out.push(ShotRecord { phi: a.phi, s2, s0 });
            }
        }
    }
    Ok(out)
}

/// Reduces materialized shots to a moment set, grouping by phase in
/// first-appearance order.
pub fn empirical_moments(
    shots: &[ShotRecord],
    mode: SamplerMode,
) -> Result<StokesMomentSet, SamplerError> {
    if shots.is_empty() {
        return Err(SamplerError::EmptyPlan);
    }
    let mut phis: Vec<f64> = Vec::new();
    let mut groups: Vec<ChunkSums> = Vec::new();
    let mut s0_sums = PowerSums::default();
    for s in shots {
        let idx = match phis.iter().position(|&p| p == s.phi) {
            Some(i) => i,
            None => {
                phis.push(s.phi);
                groups.push(ChunkSums::default());
                phis.len() - 1
            }
        };
        groups[idx].add(s.s2, s.s0);
        s0_sums.add(s.s0);
    }
    let entries = phis
        .iter()
        .zip(&groups)
        .map(|(&phi, g)| {
            let st = g.s2.stats(g.n);
            AngleMoments {
                phi,
                mean_s2: st.mean,
                second_s2: st.second,
                n: Some(g.n),
                se_mean_s2: st.se_mean,
                se_second_s2: st.se_second,
                cov_mean_second: st.cov,
            }
        })
        .collect();
    let n_total = shots.len() as u64;
    assemble(entries, s0_sums.stats(n_total), n_total, mode)
}

/// Writes shots as CSV with header `phi,s2,s0`.
pub fn write_shots_csv<W: Write>(w: W, shots: &[ShotRecord]) -> Result<(), SamplerError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["phi", "s2", "s0"])?;
    for s in shots {
        wtr.write_record(&[s.phi.to_string(), s.s2.to_string(), s.s0.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_shots_csv<R: Read>(r: R) -> Result<Vec<ShotRecord>, SamplerError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_reader(r);
    {
        let headers = rdr.headers()?;
        if headers != &csv::StringRecord::from(vec!["phi", "s2", "s0"]) {
            return Err(SamplerError::Format(format!(
                "expected header phi,s2,s0 but found {headers:?}"
            )));
        }
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(SamplerError::Format(format!(
                "row {:?} does not have 3 fields",
                rec.position().map(|p| p.line())
            )));
        }
        let field = |i: usize| -> Result<f64, SamplerError> {
            rec[i]
                .trim()
                .parse::<f64>()
                .map_err(|_| SamplerError::Format(format!("bad float {:?}", &rec[i])))
        };
        out.push(ShotRecord { phi: field(0)?, s2: field(1)?, s0: field(2)? });
    }
    Ok(out)
}
