use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::ground::{generalize, sample_ground_path};
use super::rule::{check_name, Rule, ScoredRule, MAX_RULE_LENGTH};
use super::score::score_rule;
use crate::kg::{TripleStore, Vocab};
use crate::training::fit::derived_rng;
use crate::{Error, Result};

/// Settings of one rule-learning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnOptions {
    pub time_budget_s: f64,
    pub max_length: usize,
    /// Minimum support count a rule needs to be kept.
    pub threshold: f64,
    /// Optional minimum confidence on top of the support threshold.
    pub min_confidence: f64,
    pub workers: usize,
    pub seed: u64,
    /// Stop after this many sampled paths even if budget remains.
    pub max_paths: Option<u64>,
}

impl Default for LearnOptions {
    fn default() -> Self {
        LearnOptions {
            time_budget_s: 100.0,
            max_length: 3,
            threshold: 2.0,
            min_confidence: 0.0,
            workers: 1,
            seed: 0,
            max_paths: None,
        }
    }
}

impl LearnOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.time_budget_s > 0.0 && self.time_budget_s.is_finite()) {
            return Err(Error::Config(format!(
                "time budget must be positive, got {}",
                self.time_budget_s
            )));
        }
        if !(1..=MAX_RULE_LENGTH).contains(&self.max_length) {
            return Err(Error::Config(format!(
                "max rule length must be in [1, {MAX_RULE_LENGTH}], got {}",
                self.max_length
            )));
        }
        if self.workers == 0 {
            return Err(Error::Config("at least one worker is required".into()));
        }
        if !(0.0..=1.0).contains(&self.min_confidence) || self.threshold.is_nan() {
            return Err(Error::Config(
                "min confidence must be in [0, 1] and the threshold a number".into(),
            ));
        }
        Ok(())
    }

    fn keeps(&self, r: &ScoredRule) -> bool {
        r.support as f64 >= self.threshold && r.confidence >= self.min_confidence
    }
}

/// How a learning run went.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnMeta {
    pub options: LearnOptions,
    pub paths_sampled: u64,
    pub rules_scored: u64,
    pub elapsed_s: f64,
    /// True when a single worker exhausted `max_paths` before the deadline, so the
    /// run does not depend on timing.
    pub reproducible: bool,
}

/// Scored rules indexed by head relation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuleBase {
    rules: BTreeMap<u32, Vec<ScoredRule>>,
    pub meta: Option<LearnMeta>,
}

impl RuleBase {
    pub fn insert(&mut self, rule: ScoredRule) {
        self.rules.entry(rule.rule.relation()).or_default().push(rule);
    }

    pub fn rules_for(&self, relation: u32) -> &[ScoredRule] {
        self.rules.get(&relation).map_or(&[], Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ScoredRule> {
        self.rules.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.rules.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, rule: &Rule) -> bool {
        self.rules_for(rule.relation()).iter().any(|r| &r.rule == rule)
    }

    /// Orders each relation's rules by confidence, then support, then structure.
    pub fn sort(&mut self) {
        for v in self.rules.values_mut() {
            v.sort_by(|a, b| {
                b.confidence
                    .total_cmp(&a.confidence)
                    .then(b.support.cmp(&a.support))
                    .then_with(|| a.rule.cmp(&b.rule))
            });
        }
    }

    /// Rules file: an optional `# meta` JSON header, then one rule per line.
    pub fn write<W: Write>(&self, mut out: W, entities: &Vocab, relations: &Vocab) -> Result<()> {
        for name in entities.names() {
            check_name(name, true)?;
        }
        for name in relations.names() {
            check_name(name, false)?;
        }
        if let Some(meta) = &self.meta {
            writeln!(out, "# meta {}", serde_json::to_string(meta)?)?;
        }
        for r in self.iter() {
            writeln!(out, "{}", r.to_line(entities, relations))?;
        }
        Ok(())
    }

    pub fn to_text(&self, entities: &Vocab, relations: &Vocab) -> Result<String> {
        let mut buf = Vec::new();
        self.write(&mut buf, entities, relations)?;
        Ok(String::from_utf8(buf).expect("rules files are UTF-8"))
    }

    pub fn parse(text: &str, entities: &Vocab, relations: &Vocab) -> Result<RuleBase> {
        let mut base = RuleBase::default();
        for (i, line) in text.lines().enumerate() {
            let wrap = |e: Error| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            };
            if let Some(meta) = line.strip_prefix("# meta ") {
                base.meta = Some(serde_json::from_str(meta).map_err(|e| wrap(e.into()))?);
            } else if !(line.trim().is_empty() || line.starts_with('#')) {
                base.insert(ScoredRule::parse_line(line, entities, relations).map_err(wrap)?);
            }
        }
        Ok(base)
    }
}

/// Samples paths, generalizes them into rules and keeps every rule meeting the
/// thresholds, until the time budget (or `max_paths`) runs out.
///
/// Sampler workers feed a single scoring stage, so each distinct rule is scored once.
pub fn learn(train: &TripleStore, opts: &LearnOptions) -> Result<RuleBase> {
    opts.validate()?;
    if train.is_empty() {
        return Err(Error::Degenerate("cannot learn rules from an empty store".into()));
    }
    let start = Instant::now();
    let deadline = start + Duration::from_secs_f64(opts.time_budget_s);
    let stop = AtomicBool::new(false);
    let sampled = AtomicU64::new(0);
    let (tx, rx) = mpsc::sync_channel::<Vec<Rule>>(256);
    let mut base = RuleBase::default();
    let mut seen: HashSet<Rule> = HashSet::new();
    let mut exhausted = false;
    std::thread::scope(|scope| {
        for w in 0..opts.workers {
            let tx = tx.clone();
            let (stop, sampled) = (&stop, &sampled);
            scope.spawn(move || {
                let mut rng = derived_rng(opts.seed, w, 0);
                while !stop.load(Ordering::Relaxed) && Instant::now() < deadline {
                    let n = sampled.fetch_add(1, Ordering::Relaxed);
                    if opts.max_paths.is_some_and(|m| n >= m) {
                        break;
                    }
                    let path = sample_ground_path(train, opts.max_length, &mut rng).expect("store is nonempty");
                    if tx.send(generalize(&path)).is_err() {
                        break;
                    }
                }
            });
        }
        drop(tx);
        'outer: loop {
            let now = Instant::now();
            if now >= deadline {
                break;
            }
            match rx.recv_timeout(deadline - now) {
                Ok(rules) => {
                    for rule in rules {
                        if Instant::now() >= deadline {
                            break 'outer;
                        }
                        if !seen.insert(rule.clone()) {
                            continue;
                        }
                        if let Some(s) = score_rule(&rule, train) {
                            let scored = ScoredRule {
                                rule,
                                support: s.support,
                                body_count: s.body_count,
                                confidence: s.confidence,
                            };
                            if opts.keeps(&scored) {
                                base.insert(scored);
                            }
                        }
                    }
                }
                Err(RecvTimeoutError::Timeout) => break,
                Err(RecvTimeoutError::Disconnected) => {
                    exhausted = true;
                    break;
                }
            }
        }
        stop.store(true, Ordering::Relaxed);
        drop(rx);
    });
    let total = sampled.load(Ordering::Relaxed);
    base.sort();
    base.meta = Some(LearnMeta {
        options: opts.clone(),
        paths_sampled: opts.max_paths.map_or(total, |m| total.min(m)),
        rules_scored: seen.len() as u64,
        elapsed_s: start.elapsed().as_secs_f64(),
        reproducible: exhausted && opts.workers == 1,
    });
    Ok(base)
}
