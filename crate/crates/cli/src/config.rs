//! Flag and file configuration: a strict TOML schema, the inline state
//! grammars behind `--signal` and `--ref`, and the resolution rule used
//! everywhere: flag beats config file beats documented default.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Deserialize;
use stokesfit::angles::{parse_angle, parse_angle_list};
use stokesfit::bench::{BenchError, EstimatorPath};
use stokesfit::estimator::GaussianCase;
use stokesfit::moments::DEFAULT_ANGLES;
use stokesfit::sampler::SamplerMode;
use stokesfit::states::{reference_from_ner, GaussianParams, ReferenceSpec};

/// Seed of last resort when neither flag, config file, nor the
/// environment supply one.
pub const DEFAULT_SEED: u64 = 1;

/// Environment variable consulted for a default seed.
pub const SEED_VAR: &str = "STOKESFIT_SEED";

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, malformed config, unreadable input: exit code 2.
    Config(String),
    /// The requested estimation cannot work for the supplied reference or
    /// data; the message names the violated condition: exit code 1.
    Infeasible(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Infeasible(m) => write!(f, "{m}"),
        }
    }
}

impl From<stokesfit::states::StateError> for CliError {
    fn from(e: stokesfit::states::StateError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<stokesfit::moments::MomentError> for CliError {
    fn from(e: stokesfit::moments::MomentError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<stokesfit::sampler::SamplerError> for CliError {
    fn from(e: stokesfit::sampler::SamplerError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<stokesfit::fockcheck::FockError> for CliError {
    fn from(e: stokesfit::fockcheck::FockError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<stokesfit::estimator::EstimatorError> for CliError {
    fn from(e: stokesfit::estimator::EstimatorError) -> Self {
        CliError::Infeasible(e.to_string())
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Infeasible(m) => CliError::Infeasible(m),
            other => CliError::Config(other.to_string()),
        }
    }
}

fn config_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

/// Everything a config file may carry. Unknown keys anywhere are errors;
/// TOML diagnostics carry the offending line and key.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub signal: Option<StateSection>,
    pub reference: Option<ReferenceSection>,
    pub sampling: Option<SamplingSection>,
    pub bench: Option<BenchSection>,
    pub sweep: Option<SweepSection>,
    pub converge: Option<ConvergeSection>,
    pub output: Option<OutputSection>,
}

/// Signal state by covariance eigenvalues and displacement. `b` and `c`
/// are required when the section is used; directions default to 0.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSection {
    pub b: Option<f64>,
    pub c: Option<f64>,
    pub alpha: Option<f64>,
    pub d: Option<f64>,
    pub beta: Option<f64>,
}

/// Reference in any of the accepted forms: `kind` (vacuum, thermal,
/// coherent), the energy-ratio triple (r, delta, gamma), or direct
/// eigenvalues (b, c, d). Reference directions are fixed to zero.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    pub kind: Option<String>,
    pub r: Option<f64>,
    pub delta: Option<f64>,
    pub gamma: Option<f64>,
    pub q: Option<f64>,
    pub b: Option<f64>,
    pub c: Option<f64>,
    pub d: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    pub shots: Option<u64>,
    /// "wigner" or "calibrated".
    pub mode: Option<String>,
    pub seed: Option<u64>,
    /// Radians as strings so pi fractions like "pi/4" work.
    pub angles: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    pub trials: Option<u32>,
    pub bootstrap: Option<u32>,
    /// "general", "cosine-fit", "squeezed" or "displaced".
    pub path: Option<String>,
    pub point: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// "gamma", "delta", "r_ref" or "n_states".
    pub axis: Option<String>,
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeSection {
    pub n_values: Option<Vec<u64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub out: Option<PathBuf>,
    pub dump_shots: Option<PathBuf>,
    pub no_timestamp: Option<bool>,
}

pub fn load_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
}

/// Comma-separated `key=value` pairs with an optional leading bare kind
/// token, e.g. `b=237,c=86,alpha=0.7`, `vacuum`, `thermal,r=2`.
fn spec_pairs(spec: &str) -> Result<(Option<String>, Vec<(String, f64)>), CliError> {
    let mut kind = None;
    let mut pairs: Vec<(String, f64)> = Vec::new();
    for (i, tok) in spec.split(',').map(str::trim).enumerate() {
        if tok.is_empty() {
            return Err(CliError::Config(format!("empty item in state spec {spec:?}")));
        }
        match tok.split_once('=') {
            Some((k, v)) => {
                let k = k.trim();
                let v: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| CliError::Config(format!("bad number {v:?} for key {k:?}")))?;
                if pairs.iter().any(|(key, _)| key == k) {
                    return Err(CliError::Config(format!("duplicate key {k:?} in {spec:?}")));
                }
                pairs.push((k.to_string(), v));
            }
            None if i == 0 => kind = Some(tok.to_string()),
            None => {
                return Err(CliError::Config(format!(
                    "expected key=value, got {tok:?} in {spec:?}"
                )))
            }
        }
    }
    Ok((kind, pairs))
}

fn lookup(pairs: &[(String, f64)], key: &str) -> Option<f64> {
    pairs.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
}

fn reject_unknown(pairs: &[(String, f64)], allowed: &[&str], what: &str) -> Result<(), CliError> {
    for (k, _) in pairs {
        if !allowed.contains(&k.as_str()) {
            return Err(CliError::Config(format!(
                "unknown key {k:?} in {what} (expected one of {allowed:?})"
            )));
        }
    }
    Ok(())
}

fn require(pairs: &[(String, f64)], key: &str, what: &str) -> Result<f64, CliError> {
    lookup(pairs, key).ok_or_else(|| CliError::Config(format!("{what} requires key {key:?}")))
}

/// `--signal` grammar: `b=..,c=..[,alpha=..][,d=..][,beta=..]` or one of
/// the named kinds `vacuum`, `thermal,r=..`, `coherent,d=..[,beta=..]`.
pub fn parse_signal_spec(spec: &str) -> Result<GaussianParams, CliError> {
    let (kind, pairs) = spec_pairs(spec)?;
    match kind.as_deref() {
        Some("vacuum") => {
            reject_unknown(&pairs, &[], "a vacuum signal")?;
            Ok(GaussianParams::vacuum())
        }
        Some("thermal") => {
            reject_unknown(&pairs, &["r"], "a thermal signal")?;
            Ok(GaussianParams::thermal(require(&pairs, "r", "a thermal signal")?)?)
        }
        Some("coherent") => {
            reject_unknown(&pairs, &["d", "beta"], "a coherent signal")?;
            Ok(GaussianParams::coherent(
                require(&pairs, "d", "a coherent signal")?,
                lookup(&pairs, "beta").unwrap_or(0.0),
            )?)
        }
        Some(other) => Err(CliError::Config(format!(
            "unknown signal kind {other:?} (expected vacuum, thermal or coherent)"
        ))),
        None => {
            reject_unknown(&pairs, &["b", "c", "alpha", "d", "beta"], "a signal spec")?;
            Ok(GaussianParams::from_eigen(
                require(&pairs, "b", "a signal spec")?,
                require(&pairs, "c", "a signal spec")?,
                lookup(&pairs, "alpha").unwrap_or(0.0),
                lookup(&pairs, "d").unwrap_or(0.0),
                lookup(&pairs, "beta").unwrap_or(0.0),
            )?)
        }
    }
}

/// `--ref` grammar: the energy-ratio triple `r=..,delta=..,gamma=..`
/// (delta and gamma default 0), direct `b=..,c=..[,d=..]` or
/// `r=..,q=..[,d=..]`, or the kinds `vacuum`, `thermal,r=..`,
/// `coherent,d=..`. Reference directions are fixed at zero.
pub fn parse_reference_spec(spec: &str) -> Result<ReferenceSpec, CliError> {
    let (kind, pairs) = spec_pairs(spec)?;
    match kind.as_deref() {
        Some("vacuum") => {
            reject_unknown(&pairs, &[], "a vacuum reference")?;
            Ok(ReferenceSpec::vacuum())
        }
        Some("thermal") => {
            reject_unknown(&pairs, &["r"], "a thermal reference")?;
            Ok(ReferenceSpec::thermal(require(&pairs, "r", "a thermal reference")?)?)
        }
        Some("coherent") => {
            reject_unknown(&pairs, &["d"], "a coherent reference")?;
            Ok(ReferenceSpec::coherent(require(&pairs, "d", "a coherent reference")?)?)
        }
        Some(other) => Err(CliError::Config(format!(
            "unknown reference kind {other:?} (expected vacuum, thermal or coherent)"
        ))),
        None => build_reference(&pairs),
    }
}

fn build_reference(pairs: &[(String, f64)]) -> Result<ReferenceSpec, CliError> {
    let has = |k: &str| lookup(pairs, k).is_some();
    if has("delta") || has("gamma") {
        reject_unknown(pairs, &["r", "delta", "gamma"], "an energy-ratio reference")?;
        Ok(reference_from_ner(
            lookup(pairs, "r").unwrap_or(1.0),
            lookup(pairs, "delta").unwrap_or(0.0),
            lookup(pairs, "gamma").unwrap_or(0.0),
        )?)
    } else if has("q") {
        reject_unknown(pairs, &["r", "q", "d"], "an r,q reference")?;
        Ok(ReferenceSpec::from_rqd(
            lookup(pairs, "r").unwrap_or(1.0),
            require(pairs, "q", "an r,q reference")?,
            lookup(pairs, "d").unwrap_or(0.0),
        )?)
    } else if has("b") || has("c") {
        reject_unknown(pairs, &["b", "c", "d"], "an eigenvalue reference")?;
        let p = GaussianParams::from_eigen(
            require(pairs, "b", "an eigenvalue reference")?,
            require(pairs, "c", "an eigenvalue reference")?,
            0.0,
            lookup(pairs, "d").unwrap_or(0.0),
            0.0,
        )?;
        Ok(ReferenceSpec::new(p)?)
    } else if has("r") {
        // Bare r: a thermal reference.
        reject_unknown(pairs, &["r"], "a thermal reference")?;
        Ok(ReferenceSpec::thermal(lookup(pairs, "r").unwrap_or(1.0))?)
    } else {
        Err(CliError::Config(
            "reference spec needs r/delta/gamma, r/q/d, b/c/d or a kind".to_string(),
        ))
    }
}

pub fn signal_from_section(s: &StateSection) -> Result<GaussianParams, CliError> {
    let b = s.b.ok_or_else(|| CliError::Config("[signal] requires b".to_string()))?;
    let c = s.c.ok_or_else(|| CliError::Config("[signal] requires c".to_string()))?;
    Ok(GaussianParams::from_eigen(
        b,
        c,
        s.alpha.unwrap_or(0.0),
        s.d.unwrap_or(0.0),
        s.beta.unwrap_or(0.0),
    )?)
}

pub fn reference_from_section(s: &ReferenceSection) -> Result<ReferenceSpec, CliError> {
    let mut pairs: Vec<(String, f64)> = Vec::new();
    for (k, v) in [
        ("r", s.r),
        ("delta", s.delta),
        ("gamma", s.gamma),
        ("q", s.q),
        ("b", s.b),
        ("c", s.c),
        ("d", s.d),
    ] {
        if let Some(v) = v {
            pairs.push((k.to_string(), v));
        }
    }
    match s.kind.as_deref() {
        Some("vacuum") => {
            reject_unknown(&pairs, &[], "a vacuum reference")?;
            Ok(ReferenceSpec::vacuum())
        }
        Some("thermal") => {
            reject_unknown(&pairs, &["r"], "a thermal reference")?;
            Ok(ReferenceSpec::thermal(require(&pairs, "r", "a thermal reference")?)?)
        }
        Some("coherent") => {
            reject_unknown(&pairs, &["d"], "a coherent reference")?;
            Ok(ReferenceSpec::coherent(require(&pairs, "d", "a coherent reference")?)?)
        }
        Some(other) => Err(CliError::Config(format!(
            "unknown reference kind {other:?} in [reference]"
        ))),
        None => build_reference(&pairs),
    }
}

pub fn resolve_signal(flag: Option<&str>, cfg: &FileConfig) -> Result<GaussianParams, CliError> {
    if let Some(spec) = flag {
        return parse_signal_spec(spec);
    }
    match &cfg.signal {
        Some(sec) => signal_from_section(sec),
        None => Err(CliError::Config(
            "a signal is required: pass --signal or a [signal] config section".to_string(),
        )),
    }
}

pub fn resolve_reference(flag: Option<&str>, cfg: &FileConfig) -> Result<ReferenceSpec, CliError> {
    if let Some(spec) = flag {
        return parse_reference_spec(spec);
    }
    match &cfg.reference {
        Some(sec) => reference_from_section(sec),
        None => Err(CliError::Config(
            "a reference is required: pass --ref or a [reference] config section".to_string(),
        )),
    }
}

pub fn resolve_angles(flag: Option<&str>, cfg: &FileConfig) -> Result<Vec<f64>, CliError> {
    if let Some(list) = flag {
        return parse_angle_list(list).map_err(config_err);
    }
    if let Some(list) = cfg.sampling.as_ref().and_then(|s| s.angles.as_ref()) {
        return list.iter().map(|s| parse_angle(s).map_err(config_err)).collect();
    }
    Ok(DEFAULT_ANGLES.to_vec())
}

pub fn resolve_seed(flag: Option<u64>, cfg: &FileConfig) -> Result<u64, CliError> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    if let Some(seed) = cfg.sampling.as_ref().and_then(|s| s.seed) {
        return Ok(seed);
    }
    match std::env::var(SEED_VAR) {
        Ok(v) => v
            .trim()
            .parse::<u64>()
            .map_err(|_| CliError::Config(format!("{SEED_VAR} must be an unsigned integer, got {v:?}"))),
        Err(std::env::VarError::NotPresent) => Ok(DEFAULT_SEED),
        Err(e) => Err(CliError::Config(format!("{SEED_VAR}: {e}"))),
    }
}

pub fn parse_mode(name: &str) -> Result<SamplerMode, CliError> {
    match name {
        "wigner" => Ok(SamplerMode::Wigner),
        "calibrated" => Ok(SamplerMode::Calibrated { offset_bookkeeping: true }),
        other => Err(CliError::Config(format!(
            "unknown sampler mode {other:?} (expected wigner or calibrated)"
        ))),
    }
}

pub fn resolve_mode(flag: Option<&str>, cfg: &FileConfig) -> Result<SamplerMode, CliError> {
    if let Some(m) = flag {
        return parse_mode(m);
    }
    match cfg.sampling.as_ref().and_then(|s| s.mode.as_deref()) {
        Some(m) => parse_mode(m),
        None => Ok(SamplerMode::Wigner),
    }
}

pub fn parse_bench_path(name: &str) -> Result<EstimatorPath, CliError> {
    match name {
        "general" => Ok(EstimatorPath::General),
        "cosine-fit" => Ok(EstimatorPath::CosineFit),
        "squeezed" => Ok(EstimatorPath::SqueezedSignal),
        "displaced" => Ok(EstimatorPath::DisplacedSymmetric),
        other => Err(CliError::Config(format!(
            "unknown estimator path {other:?} (expected general, cosine-fit, squeezed or displaced)"
        ))),
    }
}

/// `estimate` accepts the benchmark paths plus the pure sum-observable
/// routes, which have no per-direction MSE and so never appear in `bench`.
pub enum EstimateMethod {
    Path(EstimatorPath),
    Thermal,
    S02(GaussianCase),
}

pub fn parse_estimate_method(name: &str) -> Result<EstimateMethod, CliError> {
    match name {
        "thermal" => Ok(EstimateMethod::Thermal),
        "s02-squeezed" => Ok(EstimateMethod::S02(GaussianCase::Squeezed)),
        "s02-displaced" => Ok(EstimateMethod::S02(GaussianCase::DisplacedSymmetric)),
        other => parse_bench_path(other).map(EstimateMethod::Path).map_err(|_| {
            CliError::Config(format!(
                "unknown estimator path {other:?} (expected general, cosine-fit, squeezed, \
                 displaced, thermal, s02-squeezed or s02-displaced)"
            ))
        }),
    }
}

/// Where a command writes, and whether the file gets the provenance
/// header. Stdout never carries a timestamp so pipelines stay clean.
pub struct OutputTarget {
    pub path: Option<PathBuf>,
    pub no_timestamp: bool,
}

impl OutputTarget {
    pub fn resolve(flag: Option<PathBuf>, no_timestamp_flag: bool, cfg: &FileConfig) -> Self {
        let out = cfg.output.as_ref();
        OutputTarget {
            path: flag.or_else(|| out.and_then(|o| o.out.clone())),
            no_timestamp: no_timestamp_flag
                || out.and_then(|o| o.no_timestamp).unwrap_or(false),
        }
    }

    pub fn writer(&self) -> Result<Box<dyn Write>, CliError> {
        match &self.path {
            Some(p) => {
                let f = fs::File::create(p).map_err(|e| {
                    CliError::Config(format!("cannot create {}: {e}", p.display()))
                })?;
                let mut w = BufWriter::new(f);
                if !self.no_timestamp {
                    writeln!(w, "# timestamp={}", epoch_seconds())?;
                }
                Ok(Box::new(w))
            }
            None => Ok(Box::new(std::io::stdout())),
        }
    }

    /// Writer for a secondary file (e.g. a shot dump) sharing the
    /// timestamp policy.
    pub fn sibling(&self, path: PathBuf) -> OutputTarget {
        OutputTarget { path: Some(path), no_timestamp: self.no_timestamp }
    }
}

fn epoch_seconds() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn parse_f64_list(list: &str) -> Result<Vec<f64>, CliError> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| CliError::Config(format!("bad number {s:?} in list")))
        })
        .collect()
}

pub fn parse_u64_list(list: &str) -> Result<Vec<u64>, CliError> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<u64>()
                .map_err(|_| CliError::Config(format!("bad count {s:?} in list")))
        })
        .collect()
}
