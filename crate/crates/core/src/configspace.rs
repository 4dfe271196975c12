//! Hierarchical pipeline search space.
//!
//! A space is an ordered list of hyperparameters. Each may be conditional on
//! one categorical parent that appears earlier in the list, so walking the
//! list front to back always visits parents first. A [`Configuration`] holds
//! values for active hyperparameters only.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::sampling::{SampleStrategy, ScalerMethod};
use crate::zoo::{
    ArchitectureSpec, DecoderKind, DistKind, EncoderKind, HeadKind, HeadSpec, InferenceKind,
    OptimizerConfig, OptimizerKind, ScalarLoss, ZooError,
};

/// Vector entry for inactive hyperparameters.
pub const INACTIVE: f64 = -1.0;

/// Step of numeric neighbor moves in normalized units.
pub const NEIGHBOR_SIGMA: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("unknown hyperparameter '{0}'")]
    Unknown(String),
    #[error("active hyperparameter '{0}' has no value")]
    MissingActive(String),
    #[error("inactive hyperparameter '{0}' has a value")]
    InactivePresent(String),
    #[error("value {value} out of domain for '{name}'")]
    OutOfDomain { name: String, value: Value },
    #[error("invalid space: {0}")]
    InvalidSpace(String),
    #[error("configuration belongs to space {found}, expected {expected}")]
    SpaceMismatch { expected: String, found: String },
    #[error(transparent)]
    Architecture(#[from] ZooError),
}

/// A hyperparameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Real(f64),
    Cat(String),
}

impl Value {
    pub fn cat(s: &str) -> Self {
        Value::Cat(s.to_string())
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Real(r) => Some(*r),
            Value::Cat(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Cat(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Real(r) => write!(f, "{r}"),
            Value::Cat(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Categorical(Vec<String>),
    Integer { lo: i64, hi: i64, log: bool },
    Real { lo: f64, hi: f64, log: bool },
}

/// Active iff the categorical `parent` is active and takes one of `values`.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub parent: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperparameterDef {
    pub name: String,
    pub domain: Domain,
    pub default: Value,
    pub condition: Option<Condition>,
}

impl HyperparameterDef {
    pub fn categorical(name: &str, choices: &[&str], default: &str) -> Self {
        Self {
            name: name.into(),
            domain: Domain::Categorical(choices.iter().map(|c| c.to_string()).collect()),
            default: Value::cat(default),
            condition: None,
        }
    }

    pub fn integer(name: &str, lo: i64, hi: i64, log: bool, default: i64) -> Self {
        Self {
            name: name.into(),
            domain: Domain::Integer { lo, hi, log },
            default: Value::Int(default),
            condition: None,
        }
    }

    pub fn real(name: &str, lo: f64, hi: f64, log: bool, default: f64) -> Self {
        Self {
            name: name.into(),
            domain: Domain::Real { lo, hi, log },
            default: Value::Real(default),
            condition: None,
        }
    }

    pub fn when(mut self, parent: &str, values: &[&str]) -> Self {
        self.condition = Some(Condition {
            parent: parent.into(),
            values: values.iter().map(|v| v.to_string()).collect(),
        });
        self
    }

    pub fn contains(&self, v: &Value) -> bool {
        match (&self.domain, v) {
            (Domain::Categorical(c), Value::Cat(s)) => c.contains(s),
            (Domain::Integer { lo, hi, .. }, Value::Int(i)) => lo <= i && i <= hi,
            (Domain::Real { lo, hi, .. }, Value::Real(r)) => *lo <= *r && *r <= *hi,
            (Domain::Real { lo, hi, .. }, Value::Int(i)) => *lo <= *i as f64 && *i as f64 <= *hi,
            _ => false,
        }
    }

    /// Position of `v` in `[0, 1]`: log-scaled where flagged, choice index
    /// over `choices - 1` for categoricals.
    pub fn to_unit(&self, v: &Value) -> f64 {
        match &self.domain {
            Domain::Categorical(c) => {
                let idx = v
                    .as_str()
                    .and_then(|s| c.iter().position(|x| x == s))
                    .unwrap_or(0);
                if c.len() > 1 {
                    idx as f64 / (c.len() - 1) as f64
                } else {
                    0.0
                }
            }
            Domain::Integer { lo, hi, log } => unit(
                v.as_f64().unwrap_or(*lo as f64),
                *lo as f64,
                *hi as f64,
                *log,
            ),
            Domain::Real { lo, hi, log } => unit(v.as_f64().unwrap_or(*lo), *lo, *hi, *log),
        }
    }

    /// Inverse of [`to_unit`](Self::to_unit) for numeric domains (integers round).
    fn from_unit(&self, u: f64) -> Value {
        let u = u.clamp(0.0, 1.0);
        match &self.domain {
            Domain::Categorical(c) => {
                let idx = (u * (c.len() - 1) as f64).round() as usize;
                Value::Cat(c[idx.min(c.len() - 1)].clone())
            }
            Domain::Integer { lo, hi, log } => {
                let x = from_unit(u, *lo as f64, *hi as f64, *log).round() as i64;
                Value::Int(x.clamp(*lo, *hi))
            }
            Domain::Real { lo, hi, log } => {
                Value::Real(from_unit(u, *lo, *hi, *log).clamp(*lo, *hi))
            }
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Value {
        match &self.domain {
            Domain::Categorical(c) => Value::Cat(c[rng.random_range(0..c.len())].clone()),
            Domain::Integer { lo, hi, log: false } => Value::Int(rng.random_range(*lo..=*hi)),
            Domain::Integer { lo, hi, log: true } => {
                // uniform in log space over [lo, hi + 1), floored
                let x = rng
                    .random_range((*lo as f64).ln()..((*hi + 1) as f64).ln())
                    .exp()
                    .floor() as i64;
                Value::Int(x.clamp(*lo, *hi))
            }
            Domain::Real { lo, hi, log: false } => Value::Real(rng.random_range(*lo..=*hi)),
            Domain::Real { lo, hi, log: true } => {
                Value::Real(rng.random_range(lo.ln()..=hi.ln()).exp().clamp(*lo, *hi))
            }
        }
    }

    fn describe(&self) -> String {
        let mut s = match &self.domain {
            Domain::Categorical(c) => format!("{} categorical {{{}}}", self.name, c.join(",")),
            Domain::Integer { lo, hi, log } => format!(
                "{} integer [{lo},{hi}]{}",
                self.name,
                if *log { " log" } else { "" }
            ),
            Domain::Real { lo, hi, log } => format!(
                "{} real [{lo:e},{hi:e}]{}",
                self.name,
                if *log { " log" } else { "" }
            ),
        };
        write!(s, " default={}", self.default).expect("write to string");
        if let Some(c) = &self.condition {
            write!(s, " if {} in {{{}}}", c.parent, c.values.join(",")).expect("write to string");
        }
        s
    }
}

fn unit(v: f64, lo: f64, hi: f64, log: bool) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    if log {
        (v.ln() - lo.ln()) / (hi.ln() - lo.ln())
    } else {
        (v - lo) / (hi - lo)
    }
}

fn from_unit(u: f64, lo: f64, hi: f64, log: bool) -> f64 {
    if log {
        (lo.ln() + u * (hi.ln() - lo.ln())).exp()
    } else {
        lo + u * (hi - lo)
    }
}

/// Values of the active hyperparameters of one point in a space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub values: BTreeMap<String, Value>,
    pub space_hash: String,
}

impl Configuration {
    pub fn get(&self, name: &str) -> Option<&Value> {
        self.values.get(name)
    }

    pub fn is_active(&self, name: &str) -> bool {
        self.values.contains_key(name)
    }

    pub fn real(&self, name: &str) -> Option<f64> {
        self.get(name).and_then(Value::as_f64)
    }

    pub fn int(&self, name: &str) -> Option<i64> {
        match self.get(name) {
            Some(Value::Int(i)) => Some(*i),
            _ => None,
        }
    }

    pub fn cat(&self, name: &str) -> Option<&str> {
        self.get(name).and_then(Value::as_str)
    }

    /// `name=value` pairs in name order.
    pub fn describe(&self) -> String {
        self.values
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// An ordered, conditional hyperparameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSpace {
    defs: Vec<HyperparameterDef>,
    /// Overrides applied to the defaults, one entry per initial configuration.
    initial: Vec<Vec<(String, Value)>>,
    hash: String,
}

impl ConfigSpace {
    /// Checks that conditions point at earlier categorical parents and that
    /// defaults and overrides lie in their domains.
    pub fn new(
        defs: Vec<HyperparameterDef>,
        initial: Vec<Vec<(String, Value)>>,
    ) -> Result<Self, ConfigError> {
        if defs.is_empty() {
            return Err(ConfigError::InvalidSpace("no hyperparameters".into()));
        }
        for (i, d) in defs.iter().enumerate() {
            if defs[..i].iter().any(|p| p.name == d.name) {
                return Err(ConfigError::InvalidSpace(format!(
                    "duplicate name '{}'",
                    d.name
                )));
            }
            if !d.contains(&d.default) {
                return Err(ConfigError::InvalidSpace(format!(
                    "default of '{}' outside its domain",
                    d.name
                )));
            }
            match &d.domain {
                Domain::Categorical(c) if c.is_empty() => {
                    return Err(ConfigError::InvalidSpace(format!(
                        "'{}' has no choices",
                        d.name
                    )));
                }
                Domain::Integer { lo, hi, log } if lo > hi || (*log && *lo < 1) => {
                    return Err(ConfigError::InvalidSpace(format!(
                        "bad integer bounds for '{}'",
                        d.name
                    )));
                }
                Domain::Real { lo, hi, log } if lo > hi || (*log && *lo <= 0.0) => {
                    return Err(ConfigError::InvalidSpace(format!(
                        "bad real bounds for '{}'",
                        d.name
                    )));
                }
                _ => {}
            }
            if let Some(c) = &d.condition {
                let parent = defs[..i]
                    .iter()
                    .find(|p| p.name == c.parent)
                    .ok_or_else(|| {
                        ConfigError::InvalidSpace(format!(
                            "'{}' depends on '{}', which must come first",
                            d.name, c.parent
                        ))
                    })?;
                let Domain::Categorical(choices) = &parent.domain else {
                    return Err(ConfigError::InvalidSpace(format!(
                        "parent '{}' is not categorical",
                        c.parent
                    )));
                };
                if let Some(bad) = c.values.iter().find(|v| !choices.contains(v)) {
                    return Err(ConfigError::InvalidSpace(format!(
                        "'{}' conditions on unknown value '{bad}'",
                        d.name
                    )));
                }
            }
        }
        let mut space = Self {
            defs,
            initial,
            hash: String::new(),
        };
        for row in &space.initial {
            for (name, v) in row {
                let d = space
                    .def(name)
                    .ok_or_else(|| ConfigError::Unknown(name.clone()))?;
                if !d.contains(v) {
                    return Err(ConfigError::OutOfDomain {
                        name: name.clone(),
                        value: v.clone(),
                    });
                }
            }
        }
        space.hash = hex::encode(Sha256::digest(space.definition_text().as_bytes()));
        Ok(space)
    }

    pub fn defs(&self) -> &[HyperparameterDef] {
        &self.defs
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }

    pub fn def(&self, name: &str) -> Option<&HyperparameterDef> {
        self.defs.iter().find(|d| d.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.defs.iter().position(|d| d.name == name)
    }

    /// SHA-256 of [`definition_text`](Self::definition_text), hex encoded.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// One line per hyperparameter (name, kind, bounds, default, condition),
    /// followed by one `initial` line per initial-design override set.
    pub fn definition_text(&self) -> String {
        let mut s = String::new();
        for d in &self.defs {
            s.push_str(&d.describe());
            s.push('\n');
        }
        for row in &self.initial {
            let parts: Vec<String> = row.iter().map(|(k, v)| format!("{k}={v}")).collect();
            writeln!(s, "initial {}", parts.join(" ")).expect("write to string");
        }
        s
    }

    /// Builds a configuration front to back, taking `pick` for every active
    /// hyperparameter.
    fn complete(
        &self,
        mut pick: impl FnMut(&HyperparameterDef, &BTreeMap<String, Value>) -> Value,
    ) -> Configuration {
        let mut values = BTreeMap::new();
        for d in &self.defs {
            if self.condition_holds(d, &values) {
                let v = pick(d, &values);
                values.insert(d.name.clone(), v);
            }
        }
        Configuration {
            values,
            space_hash: self.hash.clone(),
        }
    }

    fn condition_holds(&self, d: &HyperparameterDef, values: &BTreeMap<String, Value>) -> bool {
        match &d.condition {
            None => true,
            Some(c) => values
                .get(&c.parent)
                .and_then(Value::as_str)
                .is_some_and(|p| c.values.iter().any(|v| v == p)),
        }
    }

    pub fn default_configuration(&self) -> Configuration {
        self.complete(|d, _| d.default.clone())
    }

    /// Defaults with the given overrides; overrides for inactive names are ignored.
    pub fn with_overrides(&self, overrides: &[(String, Value)]) -> Configuration {
        self.complete(|d, _| {
            overrides
                .iter()
                .find(|(k, _)| *k == d.name)
                .map_or_else(|| d.default.clone(), |(_, v)| v.clone())
        })
    }

    /// Uniform draw, log-uniform on log-scaled dimensions.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        self.complete(|d, _| d.sample(rng))
    }

    /// One configuration per initial-design override set (the plain default
    /// if the space has none).
    pub fn initial_design(&self) -> Vec<Configuration> {
        if self.initial.is_empty() {
            vec![self.default_configuration()]
        } else {
            self.initial
                .iter()
                .map(|o| self.with_overrides(o))
                .collect()
        }
    }

    /// Checks activity, domains and the space hash.
    pub fn validate(&self, config: &Configuration) -> Result<(), ConfigError> {
        if config.space_hash != self.hash {
            return Err(ConfigError::SpaceMismatch {
                expected: self.hash.clone(),
                found: config.space_hash.clone(),
            });
        }
        if let Some(k) = config.values.keys().find(|k| self.def(k).is_none()) {
            return Err(ConfigError::Unknown(k.clone()));
        }
        let mut seen = BTreeMap::new();
        for d in &self.defs {
            let active = self.condition_holds(d, &seen);
            match (active, config.values.get(&d.name)) {
                (true, None) => return Err(ConfigError::MissingActive(d.name.clone())),
                (false, Some(_)) => return Err(ConfigError::InactivePresent(d.name.clone())),
                (true, Some(v)) => {
                    if !d.contains(v) {
                        return Err(ConfigError::OutOfDomain {
                            name: d.name.clone(),
                            value: v.clone(),
                        });
                    }
                    seen.insert(d.name.clone(), v.clone());
                }
                (false, None) => {}
            }
        }
        Ok(())
    }

    /// One entry per hyperparameter in space order: normalized value, or
    /// [`INACTIVE`].
    pub fn vectorize(&self, config: &Configuration) -> Vec<f64> {
        self.defs
            .iter()
            .map(|d| {
                config
                    .values
                    .get(&d.name)
                    .map_or(INACTIVE, |v| d.to_unit(v))
            })
            .collect()
    }

    /// `k` configurations, each one mutation away from `config`.
    ///
    /// A categorical mutation picks a different choice, drops children that
    /// become inactive and gives newly active children their defaults. A
    /// numeric mutation takes a Gaussian step of [`NEIGHBOR_SIGMA`] in
    /// normalized units, clipped to the domain.
    pub fn neighbors<R: Rng + ?Sized>(
        &self,
        config: &Configuration,
        rng: &mut R,
        k: usize,
    ) -> Vec<Configuration> {
        let step = Normal::new(0.0, NEIGHBOR_SIGMA).expect("positive sigma");
        let mutable: Vec<&HyperparameterDef> = self
            .defs
            .iter()
            .filter(|d| config.is_active(&d.name))
            .filter(|d| !matches!(&d.domain, Domain::Categorical(c) if c.len() < 2))
            .filter(|d| !matches!(d.domain, Domain::Integer { lo, hi, .. } if lo == hi))
            .filter(|d| !matches!(d.domain, Domain::Real { lo, hi, .. } if lo == hi))
            .collect();
        let mut out = Vec::with_capacity(k);
        if mutable.is_empty() {
            return out;
        }
        while out.len() < k {
            let d = mutable[rng.random_range(0..mutable.len())];
            let old = &config.values[&d.name];
            let new = match &d.domain {
                Domain::Categorical(c) => {
                    let others: Vec<&String> = c
                        .iter()
                        .filter(|x| Some(x.as_str()) != old.as_str())
                        .collect();
                    Value::Cat(others[rng.random_range(0..others.len())].clone())
                }
                Domain::Integer { lo, hi, .. } => {
                    let mut v = d.from_unit(d.to_unit(old) + step.sample(rng));
                    if v == *old {
                        // a small step rounded back; move to the adjacent integer instead
                        let i = old.as_f64().expect("integer") as i64;
                        let j = if i == *hi || (i > *lo && rng.random_bool(0.5)) {
                            i - 1
                        } else {
                            i + 1
                        };
                        v = Value::Int(j);
                    }
                    v
                }
                Domain::Real { .. } => {
                    let v = d.from_unit(d.to_unit(old) + step.sample(rng));
                    if v == *old {
                        continue;
                    }
                    v
                }
            };
            let neighbor = self.complete(|h, _| {
                if h.name == d.name {
                    new.clone()
                } else {
                    config
                        .values
                        .get(&h.name)
                        .cloned()
                        .unwrap_or_else(|| h.default.clone())
                }
            });
            out.push(neighbor);
        }
        out
    }
}

/// The forecasting pipeline space.
///
/// Encoder choice gates the decoder and auto-regression switches so that
/// every configuration maps onto a legal architecture row: decoder and
/// auto-regression are inactive for flat encoders, the decoder is inactive
/// (flat) for convolutional encoders. Inactive switches imply `mlp` and
/// `false`.
pub fn default_space() -> ConfigSpace {
    use HyperparameterDef as H;
    let defs = vec![
        H::categorical("encoder", &["mlp", "rnn", "tcn"], "mlp"),
        H::categorical("decoder", &["mlp", "rnn"], "mlp").when("encoder", &["rnn"]),
        H::categorical("auto_regressive", &["false", "true"], "false")
            .when("encoder", &["rnn", "tcn"]),
        H::categorical("head", &["distribution", "quantile", "scalar"], "scalar"),
        H::categorical("dist", &["gaussian", "student_t"], "gaussian")
            .when("head", &["distribution"]),
        H::categorical(
            "inference",
            &["dist_mean", "sample_mean", "sample_median"],
            "dist_mean",
        )
        .when("head", &["distribution"]),
        H::real("q_lower", 0.01, 0.2, false, 0.1).when("head", &["quantile"]),
        H::real("q_upper", 0.8, 0.99, false, 0.9).when("head", &["quantile"]),
        H::categorical("scalar_loss", &["l1", "l2", "mase"], "l2").when("head", &["scalar"]),
        H::integer("hidden_size", 8, 128, true, 32),
        H::integer("num_layers", 1, 3, false, 1),
        H::real("dropout", 0.0, 0.5, false, 0.0),
        H::integer("tcn_kernel", 2, 4, false, 2).when("encoder", &["tcn"]),
        H::integer("tcn_num_blocks", 1, 4, false, 2).when("encoder", &["tcn"]),
        H::real("lr", 1e-4, 1e-1, true, 1e-3),
        H::categorical("optimizer", &["adam", "sgd"], "adam"),
        H::real("weight_decay", 1e-8, 1e-2, true, 1e-8),
        H::integer("batch_size", 16, 128, true, 32),
        H::integer("num_batches_per_epoch", 10, 100, false, 20),
        H::real("window_multiplier", 1.0, 3.0, false, 1.0),
        H::categorical(
            "target_scaler",
            &["none", "mean_abs", "standard", "min_max"],
            "mean_abs",
        ),
        H::categorical("sample_strategy", &["per_series", "uniform"], "uniform"),
        H::integer("num_samples", 50, 200, false, 100)
            .when("inference", &["sample_mean", "sample_median"]),
    ];
    let row = |pairs: &[(&str, &str)]| -> Vec<(String, Value)> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), Value::cat(v)))
            .collect()
    };
    let initial = vec![
        // feed-forward
        row(&[
            ("encoder", "mlp"),
            ("head", "scalar"),
            ("scalar_loss", "l2"),
        ]),
        // seq2seq
        row(&[
            ("encoder", "rnn"),
            ("decoder", "rnn"),
            ("auto_regressive", "true"),
            ("head", "scalar"),
            ("scalar_loss", "l2"),
        ]),
        // recurrent encoder-decoder, one-shot
        row(&[
            ("encoder", "rnn"),
            ("decoder", "rnn"),
            ("auto_regressive", "false"),
            ("head", "scalar"),
            ("scalar_loss", "l2"),
        ]),
        // DeepAR
        row(&[
            ("encoder", "rnn"),
            ("decoder", "mlp"),
            ("auto_regressive", "true"),
            ("head", "distribution"),
            ("dist", "gaussian"),
        ]),
        // MQ-RNN
        row(&[
            ("encoder", "rnn"),
            ("decoder", "mlp"),
            ("auto_regressive", "false"),
            ("head", "quantile"),
        ]),
        // DeepAR with a convolutional encoder
        row(&[
            ("encoder", "tcn"),
            ("auto_regressive", "true"),
            ("head", "distribution"),
            ("dist", "gaussian"),
        ]),
        // MQ-CNN
        row(&[
            ("encoder", "tcn"),
            ("auto_regressive", "false"),
            ("head", "quantile"),
        ]),
    ];
    ConfigSpace::new(defs, initial).expect("default space is well formed")
}

/// Everything a configuration of [`default_space`] decides.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub arch: ArchitectureSpec,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub num_batches_per_epoch: usize,
    pub window_multiplier: f64,
    pub scaler: ScalerMethod,
    pub strategy: SampleStrategy,
}

fn parse_token<T: std::str::FromStr>(
    config: &Configuration,
    name: &str,
    default: &str,
) -> Result<T, ConfigError> {
    let token = config.cat(name).unwrap_or(default);
    token.parse().map_err(|_| ConfigError::OutOfDomain {
        name: name.into(),
        value: Value::cat(token),
    })
}

fn require_int(config: &Configuration, name: &str) -> Result<i64, ConfigError> {
    config
        .int(name)
        .ok_or_else(|| ConfigError::MissingActive(name.into()))
}

fn require_real(config: &Configuration, name: &str) -> Result<f64, ConfigError> {
    config
        .real(name)
        .ok_or_else(|| ConfigError::MissingActive(name.into()))
}

impl Pipeline {
    /// Reads a [`default_space`] configuration and validates the implied
    /// architecture.
    pub fn from_config(config: &Configuration) -> Result<Self, ConfigError> {
        let encoder: EncoderKind = parse_token(config, "encoder", "mlp")?;
        let decoder: DecoderKind = parse_token(config, "decoder", "mlp")?;
        let auto_regressive = config.cat("auto_regressive") == Some("true");
        let head_kind: HeadKind = parse_token(config, "head", "scalar")?;
        let head = match head_kind {
            HeadKind::Scalar => {
                HeadSpec::scalar(parse_token::<ScalarLoss>(config, "scalar_loss", "l2")?)
            }
            HeadKind::Quantile => HeadSpec::quantile(
                require_real(config, "q_lower")?,
                require_real(config, "q_upper")?,
            ),
            HeadKind::Distribution => {
                let mut h = HeadSpec::distribution(
                    parse_token::<DistKind>(config, "dist", "gaussian")?,
                    parse_token::<InferenceKind>(config, "inference", "dist_mean")?,
                );
                if let Some(n) = config.int("num_samples") {
                    h.num_samples = n as usize;
                }
                h
            }
        };
        let mut arch = ArchitectureSpec::new(encoder, decoder, auto_regressive, head);
        arch.hidden_size = require_int(config, "hidden_size")? as usize;
        arch.num_layers = require_int(config, "num_layers")? as usize;
        arch.dropout = require_real(config, "dropout")?;
        if let Some(k) = config.int("tcn_kernel") {
            arch.tcn_kernel = k as usize;
        }
        if let Some(b) = config.int("tcn_num_blocks") {
            arch.tcn_num_blocks = b as usize;
        }
        arch.validate()?;
        Ok(Self {
            arch,
            optimizer: OptimizerConfig {
                kind: parse_token::<OptimizerKind>(config, "optimizer", "adam")?,
                lr: require_real(config, "lr")?,
                weight_decay: require_real(config, "weight_decay")?,
            },
            batch_size: require_int(config, "batch_size")? as usize,
            num_batches_per_epoch: require_int(config, "num_batches_per_epoch")? as usize,
            window_multiplier: require_real(config, "window_multiplier")?,
            scaler: parse_token(config, "target_scaler", "mean_abs")?,
            strategy: parse_token(config, "sample_strategy", "uniform")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn space_has_one_entry_per_listed_hyperparameter() {
        let s = default_space();
        assert_eq!(s.len(), 23);
        assert_eq!(
            s.definition_text()
                .lines()
                .filter(|l| !l.starts_with("initial"))
                .count(),
            23
        );
        assert_eq!(s.hash().len(), 64);
        assert_eq!(default_space().hash(), s.hash());
    }

    #[test]
    fn vectorize_endpoints_and_sentinel() {
        let s = default_space();
        let mut c = s.default_configuration();
        let lr = s.index_of("lr").unwrap();
        c.values.insert("lr".into(), Value::Real(1e-4));
        assert_eq!(s.vectorize(&c)[lr], 0.0);
        c.values.insert("lr".into(), Value::Real(1e-1));
        assert!((s.vectorize(&c)[lr] - 1.0).abs() < 1e-15);
        c.values.insert("lr".into(), Value::Real(10f64.powf(-2.5)));
        assert!((s.vectorize(&c)[lr] - 0.5).abs() < 1e-12);
        assert_eq!(s.vectorize(&c)[s.index_of("dist").unwrap()], INACTIVE);
    }

    #[test]
    fn neighbors_of_k_zero_is_empty() {
        let s = default_space();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(s
            .neighbors(&s.default_configuration(), &mut rng, 0)
            .is_empty());
    }

    #[test]
    fn spaces_reject_bad_conditions() {
        let defs = vec![
            HyperparameterDef::real("x", 0.0, 1.0, false, 0.5),
            HyperparameterDef::real("y", 0.0, 1.0, false, 0.5).when("x", &["a"]),
        ];
        assert!(matches!(
            ConfigSpace::new(defs, vec![]),
            Err(ConfigError::InvalidSpace(_))
        ));
        let later = vec![
            HyperparameterDef::real("y", 0.0, 1.0, false, 0.5).when("c", &["a"]),
            HyperparameterDef::categorical("c", &["a", "b"], "a"),
        ];
        assert!(matches!(
            ConfigSpace::new(later, vec![]),
            Err(ConfigError::InvalidSpace(_))
        ));
        let bad_default = vec![HyperparameterDef::real("x", 0.0, 1.0, false, 2.0)];
        assert!(ConfigSpace::new(bad_default, vec![]).is_err());
    }

    #[test]
    fn values_round_trip_through_json() {
        let s = default_space();
        let c = s.default_configuration();
        let text = serde_json::to_string(&c).unwrap();
        let back: Configuration = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        s.validate(&back).unwrap();
    }
}
