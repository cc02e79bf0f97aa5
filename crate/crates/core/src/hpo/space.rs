use serde::{Deserialize, Serialize};
use toml::Value;

use super::sobol::{ScrambledSobol, MAX_POINTS};
use crate::error::{Error, Result};
use crate::training::{issues_to_error, ConfigDoc, TrainConfig};

/// How one hyperparameter maps a unit coordinate to a value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    /// Level `floor(u · n)`.
    Choice(Vec<Value>),
    /// `lo + u (hi − lo)`.
    Linear(f64, f64),
    /// Integers in `[lo, hi]`, equal-width bins.
    Int(i64, i64),
    /// `exp(ln lo + u (ln hi − ln lo))`; negative bounds sample the magnitude.
    Log(f64, f64),
}

impl Domain {
    pub fn map(&self, u: f64) -> Value {
        match self {
            Domain::Choice(levels) => {
                let i = ((u * levels.len() as f64) as usize).min(levels.len() - 1);
                levels[i].clone()
            }
            Domain::Linear(lo, hi) => Value::Float(lo + u * (hi - lo)),
            Domain::Int(lo, hi) => {
                let span = (hi - lo + 1) as f64;
                Value::Integer((lo + (u * span) as i64).min(*hi))
            }
            Domain::Log(lo, hi) => {
                let sign = if *lo < 0.0 { -1.0 } else { 1.0 };
                let (a, b) = ((lo * sign).ln(), (hi * sign).ln());
                let v = sign * (a + u * (b - a)).exp();
                // keep rounding inside the closed range
                Value::Float(v.clamp(lo.min(*hi), lo.max(*hi)))
            }
        }
    }

    fn levels(&self) -> Option<usize> {
        match self {
            Domain::Choice(v) => Some(v.len()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub key: String,
    pub domain: Domain,
}

/// Hyperparameters to search plus fixed entries applied to every trial.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub dims: Vec<Dimension>,
    pub fixed: ConfigDoc,
}

fn s(x: &str) -> Value {
    Value::String(x.to_owned())
}

fn ints(xs: &[i64]) -> Vec<Value> {
    xs.iter().map(|&x| Value::Integer(x)).collect()
}

impl Default for SearchSpace {
    /// The full LP space. The four 4-level categoricals come first; every Sobol axis
    /// stratifies, so each level gets a balanced share of the trials.
    fn default() -> Self {
        let dims = vec![
            ("model.embedding_size", Domain::Choice(ints(&[128, 256, 512, 1024]))),
            ("optimizer.batch_size", Domain::Choice(ints(&[128, 256, 512, 1024]))),
            (
                "regularization.type",
                Domain::Choice(vec![s("None"), s("L1"), s("F2"), s("N3")]),
            ),
            (
                "init.type",
                Domain::Choice(vec![s("Uniform"), s("Normal"), s("XavierUniform"), s("XavierNormal")]),
            ),
            ("training.type", Domain::Choice(vec![s("NegSamp"), s("1vsAll")])),
            (
                "training.reciprocal",
                Domain::Choice(vec![Value::Boolean(true), Value::Boolean(false)]),
            ),
            ("optimizer.type", Domain::Choice(vec![s("Adam"), s("Adagrad")])),
            ("optimizer.learning_rate", Domain::Log(3e-4, 1.0)),
            ("optimizer.scheduler_patience", Domain::Int(0, 10)),
            ("negsamp.neg_subjects", Domain::Int(1, 100)),
            ("negsamp.neg_objects", Domain::Int(1, 100)),
            ("regularization.entity_weight", Domain::Log(1e-20, 1e-1)),
            ("regularization.relation_weight", Domain::Log(1e-20, 1e-1)),
            (
                "regularization.frequency_weighting",
                Domain::Choice(vec![Value::Boolean(true), Value::Boolean(false)]),
            ),
            ("dropout.entity", Domain::Linear(-0.5, 0.5)),
            ("dropout.relation", Domain::Linear(-0.5, 0.5)),
            ("init.normal_std", Domain::Log(1e-5, 1.0)),
            ("init.uniform_lower_bound", Domain::Log(-1.0, -1e-5)),
        ];
        let mut fixed = ConfigDoc::default();
        fixed.entries.insert("training.max_epochs".into(), Value::Integer(200));
        fixed.entries.insert("training.loss".into(), s("CE"));
        SearchSpace {
            dims: dims
                .into_iter()
                .map(|(k, d)| Dimension {
                    key: k.into(),
                    domain: d,
                })
                .collect(),
            fixed,
        }
    }
}

/// A sampled key is dropped unless the parameter it depends on takes the right value.
fn active(key: &str, doc: &ConfigDoc) -> bool {
    let get = |k: &str| doc.entries.get(k).and_then(Value::as_str).map(str::to_ascii_lowercase);
    match key {
        "negsamp.neg_subjects" | "negsamp.neg_objects" => get("training.type").as_deref() == Some("negsamp"),
        "regularization.entity_weight" | "regularization.relation_weight" | "regularization.frequency_weighting" => {
            get("regularization.type").is_some_and(|t| t != "none")
        }
        "init.normal_std" => get("init.type").as_deref() == Some("normal"),
        "init.uniform_lower_bound" => get("init.type").as_deref() == Some("uniform"),
        _ => true,
    }
}

fn parse_domain(key: &str, table: &toml::Table) -> Result<Domain> {
    let bad = |m: &str| Error::Config(format!("search space key {key}: {m}"));
    let (kind, v) = table.iter().next().ok_or_else(|| bad("empty domain"))?;
    let pair = |v: &Value| -> Result<(f64, f64)> {
        let a = v
            .as_array()
            .filter(|a| a.len() == 2)
            .ok_or_else(|| bad("expected [lo, hi]"))?;
        let num = |x: &Value| x.as_float().or_else(|| x.as_integer().map(|i| i as f64));
        match (num(&a[0]), num(&a[1])) {
            (Some(lo), Some(hi)) if lo < hi => Ok((lo, hi)),
            _ => Err(bad("expected numeric [lo, hi] with lo < hi")),
        }
    };
    let domain = match kind.as_str() {
        "choice" => {
            let levels = v
                .as_array()
                .filter(|a| !a.is_empty())
                .ok_or_else(|| bad("choice needs values"))?;
            Domain::Choice(levels.clone())
        }
        "linear" => {
            let (lo, hi) = pair(v)?;
            Domain::Linear(lo, hi)
        }
        "int" => {
            let (lo, hi) = pair(v)?;
            Domain::Int(lo as i64, hi as i64)
        }
        "log" => {
            let (lo, hi) = pair(v)?;
            if lo * hi <= 0.0 {
                return Err(bad("log range must not include 0"));
            }
            Domain::Log(lo, hi)
        }
        other => return Err(bad(&format!("unknown domain '{other}' (choice, linear, int, log)"))),
    };
    Ok(domain)
}

fn is_domain_table(t: &toml::Table) -> bool {
    t.len() == 1
        && t.keys()
            .all(|k| matches!(k.as_str(), "choice" | "linear" | "int" | "log"))
}

fn collect(prefix: &str, table: &toml::Table, space: &mut SearchSpace) -> Result<()> {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        let known = |key: &str| crate::training::KEYS.contains(&key);
        match v {
            Value::Table(t) if is_domain_table(t) && known(&key) => space.dims.push(Dimension {
                domain: parse_domain(&key, t)?,
                key,
            }),
            Value::Table(t) if !known(&key) => collect(&key, t, space)?,
            _ if !known(&key) => {
                return Err(Error::Config(format!("{key}: unknown configuration key")));
            }
            Value::Table(_) => {
                return Err(Error::Config(format!(
                    "{key}: expected a value or one of log, linear, int, choice"
                )));
            }
            other => {
                space.fixed.entries.insert(key, other.clone());
            }
        }
    }
    Ok(())
}

impl SearchSpace {
    /// Parses a space file: `key = { log = [lo, hi] }` (or `linear`, `int`, `choice`)
    /// for searched keys and plain `key = value` for fixed ones.
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(format!("malformed search space: {}", e.message())))?;
        let mut space = SearchSpace {
            dims: Vec::new(),
            fixed: ConfigDoc::default(),
        };
        collect("", &table, &mut space)?;
        // 4-level categoricals on the leading axes
        space.dims.sort_by_key(|d| match d.domain.levels() {
            Some(4) => 0,
            Some(_) => 1,
            None => 2,
        });
        Ok(space)
    }

    /// Fixes a key for every trial (e.g. the model kind), removing it from the search.
    pub fn fix(&mut self, key: &str, value: Value) {
        self.dims.retain(|d| d.key != key);
        self.fixed.entries.insert(key.to_owned(), value);
    }

    /// The trial document for one unit-cube point.
    pub fn document(&self, u: &[f64]) -> ConfigDoc {
        let mut doc = self.fixed.clone();
        for (d, &x) in self.dims.iter().zip(u) {
            doc.entries.insert(d.key.clone(), d.domain.map(x));
        }
        let inactive: Vec<String> = self
            .dims
            .iter()
            .filter(|d| !active(&d.key, &doc))
            .map(|d| d.key.clone())
            .collect();
        for k in inactive {
            doc.entries.remove(&k);
        }
        doc
    }
}

/// `n` trial configurations from the scrambled Sobol sequence of `seed`.
///
/// Each trial's training seed is `seed` unless the space fixes one.
pub fn sample_configs(space: &SearchSpace, n: usize, seed: u64) -> Result<Vec<TrainConfig>> {
    Ok(sample_documents(space, n, seed)?.into_iter().map(|(_, c)| c).collect())
}

pub(crate) fn sample_documents(space: &SearchSpace, n: usize, seed: u64) -> Result<Vec<(ConfigDoc, TrainConfig)>> {
    if space.dims.is_empty() {
        return Err(Error::Config("search space has no dimensions".into()));
    }
    if n == 0 {
        return Err(Error::Config("at least one trial is required".into()));
    }
    if n as u64 > MAX_POINTS {
        return Err(Error::Config(format!("at most {MAX_POINTS} trials are supported")));
    }
    let sobol = ScrambledSobol::new(space.dims.len(), seed);
    (0..n as u64)
        .map(|i| {
            let mut doc = space.document(&sobol.point(i));
            doc.entries.entry("seed".into()).or_insert(Value::Integer(seed as i64));
            let cfg = doc.resolve().map_err(|issues| issues_to_error(&issues))?;
            Ok((doc, cfg))
        })
        .collect()
}
