//! TOML run configuration. Unknown keys are rejected; every error carries
//! the dotted key it refers to.

use std::fmt;
use std::path::{Path, PathBuf};

use macf_core::diagnostics::TestFunction;
use macf_core::experiments::Axis;
use macf_core::model::AssumptionCheck;
use macf_core::noise::StepReuse;
use macf_core::scheme::{uniform_times, InitialCondition};
use macf_core::{Mobility, Model, NoiseKernel, Potential, Scheme, SchemeConfig, SpectralField, TruncatedPotential};
use serde::{Deserialize, Serialize};

/// Invalid or missing configuration value.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl fmt::Display) -> Self {
        Self {
            key: key.into(),
            message: message.to_string(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            write!(f, "config: {}", self.message)
        } else {
            write!(f, "config key `{}`: {}", self.key, self.message)
        }
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub scheme: SchemeSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub runtime: RuntimeSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converge: Option<ConvergeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub couple: Option<CoupleSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mgtest: Option<MgtestSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semigroup: Option<SemigroupSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub d: usize,
    #[serde(rename = "N")]
    pub grid: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n: usize,
    pub m: usize,
    pub eta: f64,
    pub ell: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialKind {
    Constant,
    Cosines,
    Random,
    Checkpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub kind: InitialKind,
    #[serde(default)]
    pub params: InitialParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_path: Option<PathBuf>,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            kind: InitialKind::Constant,
            params: InitialParams {
                value: Some(0.0),
                ..InitialParams::default()
            },
            checkpoint_path: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<Vec<Vec<i64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    /// Explicit sample times; each must be an inner step time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    /// Number of uniform intervals when `times` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

const DEFAULT_SAMPLE_COUNT: usize = 32;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default)]
    pub potential: PotentialSection,
    #[serde(default)]
    pub mobility: MobilitySection,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub assumptions: AssumptionsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    /// `double_well`, `zero` or `polynomial`
    pub kind: String,
    /// Polynomial coefficients, lowest degree first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convex_edge: Option<f64>,
}

impl Default for PotentialSection {
    fn default() -> Self {
        Self {
            kind: "double_well".into(),
            params: Vec::new(),
            convex_edge: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilitySection {
    /// `default`, `constant`, `polynomial` or `rational`
    pub kind: String,
    /// Constant value, or numerator coefficients lowest degree first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub denominator: Vec<f64>,
}

impl Default for MobilitySection {
    fn default() -> Self {
        Self {
            kind: "default".into(),
            params: Vec::new(),
            denominator: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub r: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for KernelSection {
    fn default() -> Self {
        let j = NoiseKernel::default();
        Self {
            r: j.decay_exponent,
            amplitude: j.amplitude,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssumptionsSection {
    pub range: (f64, f64),
    pub samples: usize,
    pub grid: usize,
}

impl Default for AssumptionsSection {
    fn default() -> Self {
        let c = AssumptionCheck::default();
        Self {
            range: c.range,
            samples: c.samples,
            grid: c.grid,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub replicate: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuntimeSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Outer step counts `n` to compare; defaults to `scheme.n` alone.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<usize>,
    #[serde(default = "default_moment_ratio")]
    pub max_ratio: f64,
}

fn default_replicates() -> usize {
    64
}

fn default_moment_ratio() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeSection {
    /// `n`, `m`, `eta`, `ell` or `N`
    pub axis: String,
    pub levels: Vec<f64>,
}

/// Values of a second scheme that differ from `[scheme]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeOverrides {
    #[serde(default, rename = "N", skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupleSection {
    #[serde(default = "default_pairs")]
    pub pairs: u64,
    #[serde(default)]
    pub other: SchemeOverrides,
    /// Largest accepted shared/independent ratio of mean `sup Ψ`.
    #[serde(default = "default_coupling_ratio")]
    pub max_ratio: f64,
}

fn default_pairs() -> u64 {
    16
}

fn default_coupling_ratio() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReuseSection {
    pub source: usize,
    pub target: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MgtestSection {
    #[serde(default = "default_mg_replicates")]
    pub replicates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_times: Option<Vec<f64>>,
    /// Uniform test intervals when `test_times` is absent.
    #[serde(default = "default_test_count")]
    pub test_count: usize,
    /// Test function `Σ a cos(2π k·x)`; defaults to `cos(2πx₁)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_modes: Option<Vec<Vec<i64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_amplitudes: Option<Vec<f64>>,
    /// Replays noise steps to build a deliberately broken path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reuse: Option<ReuseSection>,
}

fn default_mg_replicates() -> usize {
    1000
}

fn default_test_count() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemigroupSection {
    /// Regularization of the operator under test (`0` for `A`).
    #[serde(default)]
    pub delta: f64,
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default = "default_margins")]
    pub m: Vec<f64>,
    #[serde(default = "default_t")]
    pub t: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_growth_tol")]
    pub growth_tol: f64,
    /// Regularizations of the commutator and convergence sweeps.
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
}

fn default_probes() -> usize {
    64
}

fn default_margins() -> Vec<f64> {
    vec![0.1, 1.0, 10.0]
}

fn default_t() -> f64 {
    0.1
}

fn default_steps() -> usize {
    256
}

fn default_growth_tol() -> f64 {
    0.05
}

fn default_deltas() -> Vec<f64> {
    vec![1e-2, 1e-3, 1e-4, 1e-5]
}

/// Splits serde's "missing field `x`" into the key path.
fn path_error(path: String, message: String) -> ConfigError {
    let missing = message
        .strip_prefix("missing field `")
        .and_then(|rest| rest.split('`').next())
        .map(str::to_owned);
    match missing {
        Some(field) => {
            let key = if path.is_empty() || path == "." { field } else { format!("{path}.{field}") };
            ConfigError::new(key, "missing required key")
        }
        None => ConfigError::new(if path == "." { String::new() } else { path }, message),
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::new("", e.message()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            path_error(path, inner.message().to_owned())
        })
    }

    /// Reads a TOML config, or the `config` member of a run manifest
    /// (`.json`).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|x| x == "json") {
            let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| ConfigError::new("", format!("{}: {e}", path.display())))?;
            let config = value.get("config").ok_or_else(|| ConfigError::new("config", "manifest has no config"))?;
            serde_path_to_error::deserialize(config).map_err(|e| {
                let path = e.path().to_string();
                path_error(path, e.into_inner().to_string())
            })
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn model(&self) -> Result<Model> {
        let p = &self.model.potential;
        let potential = match p.kind.as_str() {
            "double_well" => Potential::double_well(),
            "zero" => Potential::zero(),
            "polynomial" => {
                if p.params.is_empty() {
                    return Err(ConfigError::new("model.potential.params", "polynomial potential needs coefficients"));
                }
                let edge = p
                    .convex_edge
                    .ok_or_else(|| ConfigError::new("model.potential.convex_edge", "missing required key"))?;
                Potential::polynomial(p.params.clone(), edge)
            }
            other => return Err(ConfigError::new("model.potential.kind", format!("unknown potential {other:?}"))),
        };
        let s = &self.model.mobility;
        let key = "model.mobility.params";
        let mobility = match s.kind.as_str() {
            "default" => Mobility::default_mobility(),
            "constant" => match s.params.as_slice() {
                [c] => Mobility::constant(*c).map_err(|e| ConfigError::new(key, e))?,
                _ => return Err(ConfigError::new(key, "constant mobility takes exactly one value")),
            },
            "polynomial" => Mobility::polynomial(s.params.clone()).map_err(|e| ConfigError::new(key, e))?,
            "rational" => {
                if s.denominator.is_empty() {
                    return Err(ConfigError::new("model.mobility.denominator", "missing required key"));
                }
                Mobility::rational(s.params.clone(), s.denominator.clone()).map_err(|e| ConfigError::new(key, e))?
            }
            other => return Err(ConfigError::new("model.mobility.kind", format!("unknown mobility {other:?}"))),
        };
        let k = &self.model.kernel;
        if !(k.amplitude >= 0.0) || !k.amplitude.is_finite() {
            return Err(ConfigError::new("model.kernel.amplitude", "must be finite and non-negative"));
        }
        if !k.r.is_finite() {
            return Err(ConfigError::new("model.kernel.r", "must be finite"));
        }
        Ok(Model {
            potential,
            mobility,
            kernel: NoiseKernel::new(k.amplitude, k.r),
        })
    }

    pub fn assumption_check(&self) -> Result<AssumptionCheck> {
        let a = &self.model.assumptions;
        if !(a.range.0 < a.range.1) {
            return Err(ConfigError::new("model.assumptions.range", "lower end must be below upper end"));
        }
        if a.samples < 2 {
            return Err(ConfigError::new("model.assumptions.samples", "need at least 2 samples"));
        }
        Ok(AssumptionCheck {
            range: a.range,
            samples: a.samples,
            dim: self.scheme.d,
            grid: a.grid,
        })
    }

    pub fn scheme_config(&self) -> Result<SchemeConfig> {
        let s = &self.scheme;
        if !(1..=3).contains(&s.d) {
            return Err(ConfigError::new("scheme.d", format!("dimension {} not in 1..=3", s.d)));
        }
        if s.grid < 2 || !s.grid.is_multiple_of(2) {
            return Err(ConfigError::new("scheme.N", format!("grid size {} must be even and at least 2", s.grid)));
        }
        if !(s.horizon > 0.0) || !s.horizon.is_finite() {
            return Err(ConfigError::new("scheme.T", "horizon must be positive"));
        }
        if s.n == 0 {
            return Err(ConfigError::new("scheme.n", "need at least one outer step"));
        }
        if s.m == 0 {
            return Err(ConfigError::new("scheme.m", "need at least one inner step"));
        }
        if !(s.eta >= 0.0) || !s.eta.is_finite() {
            return Err(ConfigError::new("scheme.eta", "must be finite and non-negative"));
        }
        let model = self.model()?;
        TruncatedPotential::new(model.potential.clone(), s.ell).map_err(|e| ConfigError::new("scheme.ell", e))?;
        let cfg = SchemeConfig {
            dim: s.d,
            grid: s.grid,
            horizon: s.horizon,
            outer_steps: s.n,
            inner_steps: s.m,
            eta: s.eta,
            ell: s.ell,
            model,
        };
        cfg.validate().map_err(|e| ConfigError::new("scheme", e))?;
        Ok(cfg)
    }

    pub fn initial_condition(&self) -> Result<InitialCondition> {
        let p = &self.initial.params;
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| ConfigError::new(format!("initial.params.{name}"), "missing required key"));
        let ic = match self.initial.kind {
            InitialKind::Constant => InitialCondition::Constant(need(p.value, "value")?),
            InitialKind::Cosines => {
                let terms = cosine_terms(
                    p.modes.as_deref(),
                    p.amplitudes.as_deref(),
                    self.scheme.d,
                    ("initial.params.modes", "initial.params.amplitudes"),
                )?;
                InitialCondition::Cosines(terms)
            }
            InitialKind::Random => InitialCondition::Random {
                seed: p.seed.ok_or_else(|| ConfigError::new("initial.params.seed", "missing required key"))?,
                decay: need(p.decay, "decay")?,
                amplitude: need(p.amplitude, "amplitude")?,
            },
            InitialKind::Checkpoint => {
                let key = "initial.checkpoint_path";
                let path = self
                    .initial
                    .checkpoint_path
                    .as_ref()
                    .ok_or_else(|| ConfigError::new(key, "missing required key"))?;
                let file = std::fs::File::open(path).map_err(|e| ConfigError::new(key, format!("{}: {e}", path.display())))?;
                let field = SpectralField::read_checkpoint(std::io::BufReader::new(file)).map_err(|e| ConfigError::new(key, e))?;
                InitialCondition::Field(field)
            }
        };
        ic.field(self.scheme.d, self.scheme.grid).map_err(|e| ConfigError::new("initial", e))?;
        Ok(ic)
    }

    /// Sample times, checked against the scheme's step grid.
    pub fn sample_times(&self, cfg: &SchemeConfig) -> Result<Vec<f64>> {
        let times = match (&self.sampling.times, self.sampling.count) {
            (Some(_), Some(_)) => return Err(ConfigError::new("sampling", "give either `times` or `count`, not both")),
            (Some(t), None) => t.clone(),
            (None, count) => {
                let count = count.unwrap_or(DEFAULT_SAMPLE_COUNT);
                if count == 0 {
                    return Err(ConfigError::new("sampling.count", "must be at least 1"));
                }
                uniform_times(cfg.horizon, count)
            }
        };
        let scheme = Scheme::new(cfg.clone()).map_err(|e| ConfigError::new("scheme", e))?;
        let key = if self.sampling.times.is_some() { "sampling.times" } else { "sampling.count" };
        scheme.sample_steps(&times).map_err(|e| ConfigError::new(key, e))?;
        Ok(times)
    }

    pub fn threads(&self) -> Option<usize> {
        self.runtime.threads
    }
}

/// Zips mode and amplitude lists into cosine terms.
pub fn cosine_terms(
    modes: Option<&[Vec<i64>]>,
    amplitudes: Option<&[f64]>,
    dim: usize,
    keys: (&str, &str),
) -> Result<Vec<(Vec<i64>, f64)>> {
    let modes = modes.ok_or_else(|| ConfigError::new(keys.0, "missing required key"))?;
    let amps = amplitudes.ok_or_else(|| ConfigError::new(keys.1, "missing required key"))?;
    if modes.len() != amps.len() {
        return Err(ConfigError::new(keys.1, format!("{} amplitudes for {} modes", amps.len(), modes.len())));
    }
    if let Some(k) = modes.iter().find(|k| k.len() != dim) {
        return Err(ConfigError::new(keys.0, format!("wavevector {k:?} does not have {dim} components")));
    }
    Ok(modes.iter().cloned().zip(amps.iter().copied()).collect())
}

impl ConvergeSection {
    pub fn axis(&self) -> Result<Axis> {
        self.axis.parse().map_err(|e| ConfigError::new("converge.axis", e))
    }
}

impl CoupleSection {
    pub fn other_config(&self, base: &SchemeConfig) -> Result<SchemeConfig> {
        let o = &self.other;
        let cfg = SchemeConfig {
            grid: o.grid.unwrap_or(base.grid),
            outer_steps: o.n.unwrap_or(base.outer_steps),
            inner_steps: o.m.unwrap_or(base.inner_steps),
            eta: o.eta.unwrap_or(base.eta),
            ell: o.ell.unwrap_or(base.ell),
            ..base.clone()
        };
        cfg.validate().map_err(|e| ConfigError::new("couple.other", e))?;
        Ok(cfg)
    }
}

impl MgtestSection {
    pub fn test_function(&self, dim: usize, n: usize) -> Result<TestFunction> {
        let keys = ("mgtest.psi_modes", "mgtest.psi_amplitudes");
        match (&self.psi_modes, &self.psi_amplitudes) {
            (None, None) => TestFunction::default_cosine(dim, n).map_err(|e| ConfigError::new(keys.0, e)),
            (modes, amps) => {
                let terms = cosine_terms(modes.as_deref(), amps.as_deref(), dim, keys)?;
                let refs: Vec<(&[i64], f64)> = terms.iter().map(|(k, a)| (k.as_slice(), *a)).collect();
                let f = SpectralField::from_cosines(dim, n, &refs).map_err(|e| ConfigError::new(keys.0, e))?;
                Ok(TestFunction::Fixed(f))
            }
        }
    }

    pub fn test_times(&self, horizon: f64) -> Result<Vec<f64>> {
        match &self.test_times {
            Some(t) => Ok(t.clone()),
            None if self.test_count >= 1 => Ok(uniform_times(horizon, self.test_count)),
            None => Err(ConfigError::new("mgtest.test_count", "must be at least 1")),
        }
    }

    pub fn reuse(&self) -> Option<StepReuse> {
        self.reuse.as_ref().map(|r| StepReuse {
            source: r.source,
            target: r.target,
            len: r.len,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[scheme]\nd = 1\nN = 32\nT = 0.5\nn = 8\nm = 4\neta = 1e-3\nell = 10.0\n";

    #[test]
    fn minimal_config_uses_defaults() {
        let c = Config::from_toml(MINIMAL).unwrap();
        let cfg = c.scheme_config().unwrap();
        assert_eq!(cfg.total_steps(), 32);
        assert_eq!(cfg.model, Model::default());
        assert_eq!(c.sample_times(&cfg).unwrap().len(), DEFAULT_SAMPLE_COUNT + 1);
    }

    #[test]
    fn missing_key_is_named() {
        let err = Config::from_toml(&MINIMAL.replace("N = 32\n", "")).unwrap_err();
        assert_eq!(err.key, "scheme.N");
    }

    #[test]
    fn unknown_key_is_named() {
        let err = Config::from_toml(&format!("{MINIMAL}[noise]\nsede = 3\n")).unwrap_err();
        assert_eq!(err.key, "noise.sede");
        assert!(err.message.contains("sede"), "{err}");
    }

    #[test]
    fn wrong_type_is_named() {
        let err = Config::from_toml(&MINIMAL.replace("m = 4", "m = \"four\"")).unwrap_err();
        assert_eq!(err.key, "scheme.m");
    }

    #[test]
    fn odd_grid_and_bad_truncation_are_rejected() {
        let c = Config::from_toml(&MINIMAL.replace("N = 32", "N = 31")).unwrap();
        assert_eq!(c.scheme_config().unwrap_err().key, "scheme.N");
        let c = Config::from_toml(&MINIMAL.replace("ell = 10.0", "ell = 0.3")).unwrap();
        assert_eq!(c.scheme_config().unwrap_err().key, "scheme.ell");
    }

    #[test]
    fn sample_times_must_hit_steps() {
        let c = Config::from_toml(&format!("{MINIMAL}[sampling]\ntimes = [0.0, 0.1]\n")).unwrap();
        let cfg = c.scheme_config().unwrap();
        assert_eq!(c.sample_times(&cfg).unwrap_err().key, "sampling.times");
    }

    #[test]
    fn initial_params_are_checked_per_kind() {
        let c = Config::from_toml(&format!("{MINIMAL}[initial]\nkind = \"cosines\"\nparams = {{ modes = [[1]] }}\n")).unwrap();
        assert_eq!(c.initial_condition().unwrap_err().key, "initial.params.amplitudes");
        let c = Config::from_toml(&format!("{MINIMAL}[initial]\nkind = \"random\"\nparams = {{ seed = 1, decay = 2.0, amplitude = 0.5 }}\n")).unwrap();
        assert!(c.initial_condition().is_ok());
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let text = format!("{MINIMAL}[model.mobility]\nkind = \"rational\"\nparams = [2.0, 0.1, 1.0]\ndenominator = [1.0, 0.0, 1.0]\n");
        let c = Config::from_toml(&text).unwrap();
        let json = serde_json::to_string(&c).unwrap();
        let back: Config = serde_json::from_str(&json).unwrap();
        assert_eq!(c, back);
    }
}
