use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use toml::Value;

use super::loss::{RegKind, RegSpec};
use super::optim::OptimizerKind;
use crate::error::{Error, Result};
use crate::models::{InitFamily, InitSpec, ModelKind, ModelSpec, Norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainingType {
    OneVsAll,
    NegSamp,
}

impl TrainingType {
    pub fn name(self) -> &'static str {
        match self {
            TrainingType::OneVsAll => "1vsAll",
            TrainingType::NegSamp => "NegSamp",
        }
    }
}

/// Learning-rate multiplier applied when validation MRR plateaus.
pub const LR_DECAY: f64 = 0.95;
pub const BATCH_SIZES: [usize; 4] = [128, 256, 512, 1024];
pub const EMBEDDING_SIZES: [usize; 4] = [128, 256, 512, 1024];

/// Full hyperparameter record of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub embedding_size: usize,
    pub norm: Norm,
    pub training_type: TrainingType,
    /// Used only with NegSamp.
    pub neg_subjects: usize,
    pub neg_objects: usize,
    pub max_epochs: usize,
    pub reciprocal: bool,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub scheduler_patience: usize,
    pub regularization: RegSpec,
    pub dropout_entity: f64,
    pub dropout_relation: f64,
    pub init: InitSpec,
    /// Epochs between validation checks.
    pub valid_every: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelKind::ComplEx,
            embedding_size: 128,
            norm: Norm::L2,
            training_type: TrainingType::OneVsAll,
            neg_subjects: 1,
            neg_objects: 1,
            max_epochs: 200,
            reciprocal: false,
            optimizer: OptimizerKind::Adagrad,
            batch_size: 128,
            learning_rate: 0.1,
            scheduler_patience: 5,
            regularization: RegSpec::none(),
            dropout_entity: 0.0,
            dropout_relation: 0.0,
            init: InitSpec::default(),
            valid_every: 5,
            seed: 0,
            workers: 1,
        }
    }
}

/// One configuration violation: the dotted key and what is permitted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigIssue {
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", self.key, self.message)
        }
    }
}

fn issue(key: &str, message: impl Into<String>) -> ConfigIssue {
    ConfigIssue {
        key: key.to_owned(),
        message: message.into(),
    }
}

pub fn issues_to_error(issues: &[ConfigIssue]) -> Error {
    Error::Config(issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))
}

/// Every recognised key, in canonical order.
pub const KEYS: [&str; 28] = [
    "model.kind",
    "model.embedding_size",
    "model.norm",
    "training.type",
    "training.max_epochs",
    "training.reciprocal",
    "training.loss",
    "training.valid_every",
    "negsamp.neg_subjects",
    "negsamp.neg_objects",
    "optimizer.type",
    "optimizer.batch_size",
    "optimizer.learning_rate",
    "optimizer.scheduler_patience",
    "regularization.type",
    "regularization.entity_weight",
    "regularization.relation_weight",
    "regularization.frequency_weighting",
    "dropout.entity",
    "dropout.relation",
    "init.type",
    "init.normal_mean",
    "init.normal_std",
    "init.uniform_lower_bound",
    "init.xavier_uniform_gain",
    "init.xavier_normal_gain",
    "seed",
    "workers",
];

fn parse_choice<T: Copy>(s: &str, choices: &[(&str, T)]) -> Option<T> {
    choices
        .iter()
        .find(|(name, _)| name.eq_ignore_ascii_case(s))
        .map(|(_, v)| *v)
}

const TRAINING_TYPES: [(&str, TrainingType); 2] =
    [("1vsAll", TrainingType::OneVsAll), ("NegSamp", TrainingType::NegSamp)];
const OPTIMIZERS: [(&str, OptimizerKind); 2] = [("Adam", OptimizerKind::Adam), ("Adagrad", OptimizerKind::Adagrad)];
const REGULARIZERS: [(&str, RegKind); 4] = [
    ("None", RegKind::None),
    ("L1", RegKind::L1),
    ("F2", RegKind::F2),
    ("N3", RegKind::N3),
];
const INITS: [(&str, InitFamily); 4] = [
    ("Uniform", InitFamily::Uniform),
    ("Normal", InitFamily::Normal),
    ("XavierUniform", InitFamily::XavierUniform),
    ("XavierNormal", InitFamily::XavierNormal),
];
const NORMS: [(&str, Norm); 2] = [("L1", Norm::L1), ("L2", Norm::L2)];

fn choice_list<T>(choices: &[(&str, T)]) -> String {
    let names: Vec<&str> = choices.iter().map(|(n, _)| *n).collect();
    format!("{{{}}}", names.join(", "))
}

fn name_of<T: PartialEq + Copy>(v: T, choices: &[(&'static str, T)]) -> &'static str {
    choices
        .iter()
        .find(|(_, x)| *x == v)
        .map(|(n, _)| *n)
        .expect("choice listed")
}

/// A flat `dotted.key → value` view of a config file, with overrides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigDoc {
    pub entries: BTreeMap<String, Value>,
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

/// Parses a scalar given on the command line: TOML syntax if it parses, else a string.
fn parse_scalar(raw: &str) -> Value {
    let wrapped = format!("v = {raw}");
    toml::from_str::<toml::Table>(&wrapped)
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_owned()))
}

impl ConfigDoc {
    pub fn parse(text: &str) -> std::result::Result<Self, Vec<ConfigIssue>> {
        let table: toml::Table =
            toml::from_str(text).map_err(|e| vec![issue("", format!("malformed config: {}", e.message()))])?;
        let mut entries = BTreeMap::new();
        flatten("", &table, &mut entries);
        Ok(ConfigDoc { entries })
    }

    /// Applies a `key=value` override.
    pub fn set(&mut self, assignment: &str) -> std::result::Result<(), ConfigIssue> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| issue("", format!("override '{assignment}' is not key=value")))?;
        self.entries.insert(key.trim().to_owned(), parse_scalar(raw.trim()));
        Ok(())
    }

    /// Overlays `other`'s entries on this document.
    pub fn merge(&mut self, other: &ConfigDoc) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    /// Defaults overridden by the document, then range-checked. All problems are
    /// reported together.
    pub fn resolve(&self) -> std::result::Result<TrainConfig, Vec<ConfigIssue>> {
        let mut cfg = TrainConfig::default();
        let mut issues = Vec::new();
        for (key, value) in &self.entries {
            if let Err(e) = cfg.set_value(key, value) {
                issues.push(e);
            }
        }
        issues.extend(cfg.check());
        if issues.is_empty() {
            Ok(cfg)
        } else {
            Err(issues)
        }
    }
}

/// Parses and validates config text; `Err` lists every violation.
pub fn validate_config(text: &str) -> std::result::Result<TrainConfig, Vec<ConfigIssue>> {
    ConfigDoc::parse(text)?.resolve()
}

fn as_int(key: &str, v: &Value) -> std::result::Result<i64, ConfigIssue> {
    v.as_integer()
        .ok_or_else(|| issue(key, format!("expected an integer, got {v}")))
}

fn as_uint(key: &str, v: &Value) -> std::result::Result<usize, ConfigIssue> {
    let i = as_int(key, v)?;
    usize::try_from(i).map_err(|_| issue(key, format!("expected a non-negative integer, got {i}")))
}

fn as_float(key: &str, v: &Value) -> std::result::Result<f64, ConfigIssue> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(issue(key, format!("expected a number, got {v}"))),
    }
}

fn as_bool(key: &str, v: &Value) -> std::result::Result<bool, ConfigIssue> {
    match v {
        Value::Boolean(b) => Ok(*b),
        Value::String(s) if matches!(s.to_ascii_lowercase().as_str(), "yes" | "true") => Ok(true),
        Value::String(s) if matches!(s.to_ascii_lowercase().as_str(), "no" | "false") => Ok(false),
        _ => Err(issue(key, format!("expected true or false, got {v}"))),
    }
}

fn as_choice<T: Copy>(key: &str, v: &Value, choices: &[(&str, T)]) -> std::result::Result<T, ConfigIssue> {
    v.as_str()
        .and_then(|s| parse_choice(s, choices))
        .ok_or_else(|| issue(key, format!("got {v}, expected one of {}", choice_list(choices))))
}

fn in_range(issues: &mut Vec<ConfigIssue>, key: &str, v: f64, lo: f64, hi: f64, shown: &str) {
    if !(v >= lo && v <= hi) {
        issues.push(issue(key, format!("{v} outside permitted range {shown}")));
    }
}

impl TrainConfig {
    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec::new(self.model, self.embedding_size)
            .with_norm(self.norm)
            .with_reciprocal(self.reciprocal)
    }

    fn set_value(&mut self, key: &str, v: &Value) -> std::result::Result<(), ConfigIssue> {
        match key {
            "model.kind" => {
                let s = v.as_str().unwrap_or_default();
                self.model = ModelKind::from_str(s).map_err(|_| {
                    let names: Vec<&str> = ModelKind::ALL.iter().map(|k| k.name()).collect();
                    issue(key, format!("got {v}, expected one of {{{}}}", names.join(", ")))
                })?;
            }
            "model.embedding_size" => self.embedding_size = as_uint(key, v)?,
            "model.norm" => self.norm = as_choice(key, v, &NORMS)?,
            "training.type" => self.training_type = as_choice(key, v, &TRAINING_TYPES)?,
            "training.max_epochs" => self.max_epochs = as_uint(key, v)?,
            "training.reciprocal" => self.reciprocal = as_bool(key, v)?,
            "training.loss" => {
                if !v.as_str().is_some_and(|s| s.eq_ignore_ascii_case("CE")) {
                    return Err(issue(key, format!("got {v}, only CE is supported")));
                }
            }
            "training.valid_every" => self.valid_every = as_uint(key, v)?,
            "negsamp.neg_subjects" => self.neg_subjects = as_uint(key, v)?,
            "negsamp.neg_objects" => self.neg_objects = as_uint(key, v)?,
            "optimizer.type" => self.optimizer = as_choice(key, v, &OPTIMIZERS)?,
            "optimizer.batch_size" => self.batch_size = as_uint(key, v)?,
            "optimizer.learning_rate" => self.learning_rate = as_float(key, v)?,
            "optimizer.scheduler_patience" => self.scheduler_patience = as_uint(key, v)?,
            "regularization.type" => self.regularization.kind = as_choice(key, v, &REGULARIZERS)?,
            "regularization.entity_weight" => self.regularization.entity_weight = as_float(key, v)?,
            "regularization.relation_weight" => self.regularization.relation_weight = as_float(key, v)?,
            "regularization.frequency_weighting" => self.regularization.frequency_weighting = as_bool(key, v)?,
            "dropout.entity" => self.dropout_entity = as_float(key, v)?,
            "dropout.relation" => self.dropout_relation = as_float(key, v)?,
            "init.type" => self.init.family = as_choice(key, v, &INITS)?,
            "init.normal_mean" => self.init.normal_mean = as_float(key, v)?,
            "init.normal_std" => self.init.normal_std = as_float(key, v)?,
            "init.uniform_lower_bound" => self.init.uniform_lower = as_float(key, v)?,
            "init.xavier_uniform_gain" => self.init.xavier_uniform_gain = as_float(key, v)?,
            "init.xavier_normal_gain" => self.init.xavier_normal_gain = as_float(key, v)?,
            "seed" => {
                let i = as_int(key, v)?;
                self.seed =
                    u64::try_from(i).map_err(|_| issue(key, format!("expected a non-negative integer, got {i}")))?;
            }
            "workers" => self.workers = as_uint(key, v)?,
            _ => return Err(issue(key, "unknown key")),
        }
        Ok(())
    }

    /// Range checks; NegSamp counts are only checked for NegSamp training.
    pub fn check(&self) -> Vec<ConfigIssue> {
        let mut out = Vec::new();
        if self.embedding_size == 0 {
            out.push(issue("model.embedding_size", "must be at least 1"));
        } else if self.model.is_complex() && self.embedding_size % 2 == 1 {
            out.push(issue(
                "model.embedding_size",
                format!("{} needs an even size, got {}", self.model, self.embedding_size),
            ));
        }
        if self.max_epochs == 0 {
            out.push(issue("training.max_epochs", "must be at least 1"));
        }
        if self.valid_every == 0 {
            out.push(issue("training.valid_every", "must be at least 1"));
        }
        if self.training_type == TrainingType::NegSamp {
            for (key, v) in [
                ("negsamp.neg_subjects", self.neg_subjects),
                ("negsamp.neg_objects", self.neg_objects),
            ] {
                if !(1..=100).contains(&v) {
                    out.push(issue(key, format!("{v} outside permitted range [1, 100]")));
                }
            }
        }
        if !BATCH_SIZES.contains(&self.batch_size) {
            out.push(issue(
                "optimizer.batch_size",
                format!("{} not in permitted set {{128, 256, 512, 1024}}", self.batch_size),
            ));
        }
        in_range(
            &mut out,
            "optimizer.learning_rate",
            self.learning_rate,
            3e-4,
            1.0,
            "[0.0003, 1.0]",
        );
        if self.scheduler_patience > 10 {
            out.push(issue(
                "optimizer.scheduler_patience",
                format!("{} outside permitted range [0, 10]", self.scheduler_patience),
            ));
        }
        let reg = &self.regularization;
        in_range(
            &mut out,
            "regularization.entity_weight",
            reg.entity_weight,
            1e-20,
            1e-1,
            "[1e-20, 1e-1]",
        );
        in_range(
            &mut out,
            "regularization.relation_weight",
            reg.relation_weight,
            1e-20,
            1e-1,
            "[1e-20, 1e-1]",
        );
        in_range(
            &mut out,
            "dropout.entity",
            self.dropout_entity,
            -0.5,
            0.5,
            "[-0.5, 0.5]",
        );
        in_range(
            &mut out,
            "dropout.relation",
            self.dropout_relation,
            -0.5,
            0.5,
            "[-0.5, 0.5]",
        );
        let init = &self.init;
        if init.normal_mean != 0.0 {
            out.push(issue(
                "init.normal_mean",
                format!("{} but fixed at 0.0", init.normal_mean),
            ));
        }
        in_range(
            &mut out,
            "init.normal_std",
            init.normal_std,
            1e-5,
            1.0,
            "[0.00001, 1.0]",
        );
        in_range(
            &mut out,
            "init.uniform_lower_bound",
            init.uniform_lower,
            -1.0,
            -1e-5,
            "[-1.0, -0.00001]",
        );
        for (key, v) in [
            ("init.xavier_uniform_gain", init.xavier_uniform_gain),
            ("init.xavier_normal_gain", init.xavier_normal_gain),
        ] {
            if v != 1.0 {
                out.push(issue(key, format!("{v} but fixed at 1.0")));
            }
        }
        if self.workers == 0 {
            out.push(issue("workers", "must be at least 1"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let issues = self.check();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues_to_error(&issues))
        }
    }

    /// The config as a flat key map, inverse of [`ConfigDoc::resolve`].
    pub fn to_doc(&self) -> ConfigDoc {
        let mut e = BTreeMap::new();
        let mut put = |k: &str, v: Value| {
            e.insert(k.to_owned(), v);
        };
        let s = |x: &str| Value::String(x.to_owned());
        let i = |x: usize| Value::Integer(x as i64);
        put("model.kind", s(self.model.name()));
        put("model.embedding_size", i(self.embedding_size));
        put("model.norm", s(name_of(self.norm, &NORMS)));
        put("training.type", s(self.training_type.name()));
        put("training.max_epochs", i(self.max_epochs));
        put("training.reciprocal", Value::Boolean(self.reciprocal));
        put("training.loss", s("CE"));
        put("training.valid_every", i(self.valid_every));
        put("negsamp.neg_subjects", i(self.neg_subjects));
        put("negsamp.neg_objects", i(self.neg_objects));
        put("optimizer.type", s(name_of(self.optimizer, &OPTIMIZERS)));
        put("optimizer.batch_size", i(self.batch_size));
        put("optimizer.learning_rate", Value::Float(self.learning_rate));
        put("optimizer.scheduler_patience", i(self.scheduler_patience));
        let reg = &self.regularization;
        put("regularization.type", s(name_of(reg.kind, &REGULARIZERS)));
        put("regularization.entity_weight", Value::Float(reg.entity_weight));
        put("regularization.relation_weight", Value::Float(reg.relation_weight));
        put(
            "regularization.frequency_weighting",
            Value::Boolean(reg.frequency_weighting),
        );
        put("dropout.entity", Value::Float(self.dropout_entity));
        put("dropout.relation", Value::Float(self.dropout_relation));
        put("init.type", s(name_of(self.init.family, &INITS)));
        put("init.normal_mean", Value::Float(self.init.normal_mean));
        put("init.normal_std", Value::Float(self.init.normal_std));
        put("init.uniform_lower_bound", Value::Float(self.init.uniform_lower));
        put("init.xavier_uniform_gain", Value::Float(self.init.xavier_uniform_gain));
        put("init.xavier_normal_gain", Value::Float(self.init.xavier_normal_gain));
        put("seed", Value::Integer(self.seed as i64));
        put("workers", i(self.workers));
        ConfigDoc { entries: e }
    }

    /// Config text in the dotted-key dialect, one key per line.
    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.to_doc().entries {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}
