use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sobol::GENERATOR;
use super::space::{sample_documents, SearchSpace};
use crate::error::{Error, Result};
use crate::eval::{evaluate_lp, DEFAULT_KS};
use crate::kg::SplitSet;
use crate::models::ModelParams;
use crate::training::{TrainConfig, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Ok,
    Failed,
}

/// One line of the trial log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub config: TrainConfig,
    pub status: TrialStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid_mrr: Option<f64>,
    /// Reported only; never used for selection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_mrr: Option<f64>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub seconds: f64,
    /// Remarks such as sampled negative dropout rates that act as 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpoReport {
    pub trials: Vec<TrialRecord>,
    /// Position in `trials` of the highest valid MRR among successful trials.
    pub best: Option<usize>,
    pub generator: String,
    pub selection: String,
}

impl HpoReport {
    pub fn best_trial(&self) -> Option<&TrialRecord> {
        self.best.map(|i| &self.trials[i])
    }
}

/// Index of the successful trial with the highest valid MRR (first on ties).
pub fn select_best(trials: &[TrialRecord]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, t) in trials.iter().enumerate() {
        if t.status != TrialStatus::Ok {
            continue;
        }
        if let Some(m) = t.valid_mrr {
            if best.is_none_or(|(_, b)| m > b) {
                best = Some((i, m));
            }
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone, Default)]
pub struct HpoOptions {
    pub trials: usize,
    pub seed: u64,
    /// Trials run concurrently; 0 or 1 means sequentially.
    pub parallel_trials: usize,
    /// JSON-lines trial log; existing records are kept and their trials skipped.
    pub log_path: Option<PathBuf>,
}

/// Reads the trial records of an existing log. A truncated final line is ignored.
pub fn read_trial_log(path: &Path) -> Result<Vec<TrialRecord>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let lines: Vec<String> = BufReader::new(file).lines().collect::<std::io::Result<_>>()?;
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<TrialRecord>(line) {
            Ok(r) => out.push(r),
            Err(_) if i + 1 == lines.len() => log::warn!("ignoring truncated last trial record"),
            Err(e) => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("bad trial record: {e}"),
                })
            }
        }
    }
    Ok(out)
}

fn dropout_notes(cfg: &TrainConfig) -> Vec<String> {
    [
        ("dropout.entity", cfg.dropout_entity),
        ("dropout.relation", cfg.dropout_relation),
    ]
    .into_iter()
    .filter(|(_, r)| *r < 0.0)
    .map(|(k, r)| format!("{k} = {r} is negative and acts as 0"))
    .collect()
}

/// Runs the missing trials of a quasi-random search with the standard trainer.
pub fn run_hpo(splits: &SplitSet, space: &SearchSpace, options: &HpoOptions) -> Result<HpoReport> {
    run_hpo_with(splits, space, options, crate::training::fit)
}

/// Like [`run_hpo`] with a custom trainer. Failed trials are logged and skipped by selection.
pub fn run_hpo_with<F>(splits: &SplitSet, space: &SearchSpace, options: &HpoOptions, trainer: F) -> Result<HpoReport>
where
    F: Fn(&SplitSet, &TrainConfig) -> Result<(ModelParams, TrainReport)> + Sync,
{
    let planned = sample_documents(space, options.trials, options.seed)?;
    let mut done: BTreeMap<usize, TrialRecord> = BTreeMap::new();
    if let Some(path) = &options.log_path {
        for r in read_trial_log(path)? {
            if r.index < planned.len() {
                done.insert(r.index, r);
            }
        }
    }
    let log = match &options.log_path {
        Some(path) => Some(Mutex::new(OpenOptions::new().create(true).append(true).open(path)?)),
        None => None,
    };
    let pending: Vec<usize> = (0..planned.len()).filter(|i| !done.contains_key(i)).collect();
    if !done.is_empty() {
        log::info!("resuming: {} trials logged, {} to run", done.len(), pending.len());
    }

    let run_one = |&index: &usize| -> Result<TrialRecord> {
        let cfg = planned[index].1.clone();
        let started = Instant::now();
        let notes = dropout_notes(&cfg);
        for n in &notes {
            log::warn!("trial {index}: {n}");
        }
        let record = match trainer(splits, &cfg) {
            Ok((params, report)) => {
                let test_mrr = if splits.test.is_empty() {
                    None
                } else {
                    Some(evaluate_lp(&params, &splits.test, splits, &DEFAULT_KS)?.mrr)
                };
                TrialRecord {
                    index,
                    config: cfg,
                    status: TrialStatus::Ok,
                    error: None,
                    valid_mrr: report.best_valid_mrr,
                    test_mrr,
                    best_epoch: report.best_epoch,
                    epochs_run: report.epochs.len(),
                    seconds: started.elapsed().as_secs_f64(),
                    notes,
                }
            }
            Err(e) => {
                log::warn!("trial {index} failed: {e}");
                TrialRecord {
                    index,
                    config: cfg,
                    status: TrialStatus::Failed,
                    error: Some(e.to_string()),
                    valid_mrr: None,
                    test_mrr: None,
                    best_epoch: 0,
                    epochs_run: 0,
                    seconds: started.elapsed().as_secs_f64(),
                    notes,
                }
            }
        };
        if let Some(log) = &log {
            let line = serde_json::to_string(&record)?;
            let mut f = log.lock().expect("trial log lock");
            writeln!(f, "{line}")?;
            f.flush()?;
        }
        Ok(record)
    };

    let new: Vec<TrialRecord> = if options.parallel_trials > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.parallel_trials)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| pending.par_iter().map(run_one).collect::<Result<_>>())?
    } else {
        pending.iter().map(run_one).collect::<Result<_>>()?
    };
    for r in new {
        done.insert(r.index, r);
    }
    let trials: Vec<TrialRecord> = done.into_values().collect();
    Ok(HpoReport {
        best: select_best(&trials),
        trials,
        generator: GENERATOR.to_owned(),
        selection: "single best trial by filtered valid MRR".to_owned(),
    })
}
