use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use wassrisk_core::finance::{spread_penalty, BoundsOptions, MarketSpec};
use wassrisk_core::loss::{LossDescriptor, LossRef};
use wassrisk_core::measure::{Measure, MeasureDescriptor};
use wassrisk_core::objective::{Objective, Regime};
use wassrisk_core::penalty::Penalty;
use wassrisk_core::solvers::{Architecture, SolveOptions, TrainOptions, TransferOptions};
use wassrisk_core::Error;

use crate::failure::Failure;

pub const SCHEMA_VERSION: u32 = 1;

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

/// One value or a list of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub loss: LossDescriptor,
    pub measure: MeasureDescriptor,
    pub p: f64,
    pub penalty: Penalty,
    #[serde(default = "unconstrained")]
    pub regime: Regime,
}

fn unconstrained() -> Regime {
    Regime::Unconstrained
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolverConfig {
    /// Exact shifts for atomic measures.
    Discrete {
        #[serde(default)]
        options: SolveOptions,
    },
    /// Scaling of the first-order direction.
    Ray {
        #[serde(default)]
        batch: Option<usize>,
    },
    Mlp {
        #[serde(default)]
        arch: Architecture,
        #[serde(default)]
        train: TrainOptions,
    },
    /// Pretrain on `pretrain_measure`, then refit the scale layer on the
    /// problem measure.
    Transfer {
        pretrain_measure: MeasureDescriptor,
        #[serde(default)]
        arch: Architecture,
        #[serde(default)]
        train: TrainOptions,
        #[serde(default)]
        options: TransferOptions,
    },
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig::Discrete { options: SolveOptions::default() }
    }
}

impl SolverConfig {
    pub fn name(&self) -> &'static str {
        match self {
            SolverConfig::Discrete { .. } => "discrete",
            SolverConfig::Ray { .. } => "ray",
            SolverConfig::Mlp { .. } => "mlp",
            SolverConfig::Transfer { .. } => "transfer",
        }
    }
}

/// Square grid for field snapshots of two-dimensional problems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { lo: [-3.0, -3.0], hi: [3.0, 3.0], n: 21 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub grid: GridConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpandConfig {
    /// Monte Carlo batch for non-atomic measures.
    pub batch: usize,
}

impl Default for ExpandConfig {
    fn default() -> Self {
        Self { batch: 1 << 16 }
    }
}

/// An estimation experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "schema_version")]
    pub version: u32,
    pub name: String,
    #[serde(default)]
    pub description: Option<String>,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    pub h: OneOrMany<f64>,
    #[serde(default)]
    pub seeds: Option<OneOrMany<u64>>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub expand: ExpandConfig,
}

/// Martingale price bounds for a bull spread.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    #[serde(default = "schema_version")]
    pub version: u32,
    pub name: String,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub market: MarketSpec,
    /// Exponent `n` of `φ(x) = (1/n)(x/σ²)^n`; ignored when `penalty` is set.
    #[serde(default = "default_n")]
    pub n: f64,
    #[serde(default)]
    pub penalty: Option<Penalty>,
    #[serde(default)]
    pub bounds: BoundsOptions,
    pub h: OneOrMany<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_n() -> f64 {
    5.0
}

impl BoundsConfig {
    pub fn penalty(&self) -> Result<Penalty, Error> {
        match &self.penalty {
            Some(p) => Ok(p.clone()),
            None => spread_penalty(self.market.sigma, self.n),
        }
    }
}

pub enum Config {
    Experiment(ExperimentConfig),
    Bounds(BoundsConfig),
}

/// A config file after overrides, with the directory it came from.
pub struct Loaded {
    pub config: Config,
    pub base_dir: PathBuf,
    /// The JSON that was deserialized, overrides included.
    pub json: Value,
}

/// Reads a config, applies `--key value` overrides and deserializes it.
/// Configs with a `market` section are bound computations.
pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Loaded, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut json: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::Config(format!("{}: invalid JSON: {e}", path.display())))?;
    for (key, value) in overrides {
        apply_override(&mut json, key, value)?;
    }
    if let Some(v) = json.get("version") {
        if v.as_u64() != Some(u64::from(SCHEMA_VERSION)) {
            return Err(Failure::Config(format!("version: unsupported schema version {v}")));
        }
    }
    let config = if json.get("market").is_some() {
        Config::Bounds(
            serde_json::from_value(json.clone()).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?,
        )
    } else {
        Config::Experiment(
            serde_json::from_value(json.clone()).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?,
        )
    };
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { config, base_dir, json })
}

/// Splits `--a.b 1 --c x` into `(a.b, 1), (c, x)`. `--seed` and
/// `--problem.h` are aliases of the top-level `seeds` and `h`.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>, Failure> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(flag) = it.next() {
        let key = flag
            .strip_prefix("--")
            .filter(|k| !k.is_empty())
            .ok_or_else(|| Failure::Config(format!("expected --key value, got `{flag}`")))?;
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| Failure::Config(format!("--{key} needs a value")))?;
                (key.to_string(), v.clone())
            }
        };
        let key = match key.as_str() {
            "seed" => "seeds".to_string(),
            "problem.h" => "h".to_string(),
            _ => key,
        };
        out.push((key, value));
    }
    Ok(out)
}

/// Sets a dotted path. The value is parsed as JSON when it can be, and
/// kept as a string otherwise. Every parent must already be an object.
pub fn apply_override(json: &mut Value, key: &str, raw: &str) -> Result<(), Failure> {
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = json;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Failure::Config(format!("{}: not an object", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Err(Failure::Config("empty override key".into()))
}

/// Resolves the seed list: config, then `WASSRISK_SEED`, then 0.
pub fn seeds(config: Option<&OneOrMany<u64>>) -> Result<Vec<u64>, Failure> {
    if let Some(s) = config {
        let v = s.to_vec();
        if v.is_empty() {
            return Err(Failure::Config("seeds: empty list".into()));
        }
        return Ok(v);
    }
    match std::env::var("WASSRISK_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map(|v| vec![v])
            .map_err(|_| Failure::Config(format!("WASSRISK_SEED: not an unsigned integer: `{s}`"))),
        Err(_) => Ok(vec![0]),
    }
}

pub fn h_values(h: &OneOrMany<f64>, allow_zero: bool) -> Result<Vec<f64>, Failure> {
    let hs = h.to_vec();
    if hs.is_empty() {
        return Err(Failure::Config("h: empty list".into()));
    }
    for v in &hs {
        let ok = v.is_finite() && (*v > 0.0 || (allow_zero && *v == 0.0));
        if !ok {
            return Err(Failure::Config(format!("h: invalid value {v}")));
        }
    }
    Ok(hs)
}

/// A validated problem, ready for any `h`.
pub struct Problem {
    pub loss: LossRef,
    pub penalty: Penalty,
    pub p: f64,
    pub regime: Regime,
}

impl Problem {
    pub fn build(cfg: &ProblemConfig) -> Result<Self, Failure> {
        let loss = cfg.loss.build().map_err(|e| Failure::config("problem.loss", e))?;
        cfg.regime.check_penalty(&cfg.penalty, cfg.p).map_err(|e| Failure::config("problem.penalty", e))?;
        let problem = Self { loss, penalty: cfg.penalty.clone(), p: cfg.p, regime: cfg.regime };
        // construction validates p and the loss dimension
        problem.objective(1.0).map_err(|e| Failure::config("problem", e))?;
        Ok(problem)
    }

    /// Stricter checks for the first-order expansion.
    pub fn check_expansion(&self) -> Result<(), Failure> {
        match self.regime {
            Regime::Mean if (self.p - 2.0).abs() > 1e-12 => {
                Err(Failure::config("problem.p", Error::RegimeRequiresP2 { p: self.p }))
            }
            Regime::Martingale if !self.loss.has_hessian() => {
                Err(Failure::config("problem.loss", Error::RegimeRequiresHessian))
            }
            Regime::Martingale if self.p <= 2.0 => {
                Err(Failure::config("problem.p", Error::ExponentUndefined { p: self.p }))
            }
            _ => Ok(()),
        }
    }

    pub fn objective(&self, h: f64) -> Result<Objective, Error> {
        Objective::new(self.loss.clone(), self.penalty.clone(), self.p, h, self.regime)
    }
}

pub fn build_measure(desc: &MeasureDescriptor, seed: u64, base_dir: &Path, key: &str) -> Result<Measure, Failure> {
    desc.build(seed, Some(base_dir)).map_err(|e| Failure::config(key, e))
}
