use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use crate::eval::{evaluate_lp, EvalReport, DEFAULT_KS};
use crate::kg::{SplitSet, Vocab};
use crate::models::{init_params, InitSpec, ModelParams, ModelSpec};
use crate::training::{fit_from, TrainConfig, TrainReport};
use crate::{Error, Result};

/// Which target entity rows a warm start filled from the checkpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarmStartStats {
    pub copied: usize,
    pub fresh: usize,
}

/// Fresh parameters for the target vocabulary whose entity rows are copied from the
/// checkpoint wherever the entity name exists there. Relation rows, TransH normals and
/// ConvE weights are always fresh.
pub fn warm_start(
    pretrained: &Checkpoint,
    entities: &Vocab,
    n_relations: usize,
    spec: &ModelSpec,
    init: &InitSpec,
    seed: u64,
) -> Result<(ModelParams, WarmStartStats)> {
    let src = &pretrained.params.spec;
    if src.kind != spec.kind || src.dim != spec.dim {
        return Err(Error::Config(format!(
            "checkpoint holds {} with d={}, the target model is {} with d={}",
            src.kind, src.dim, spec.kind, spec.dim
        )));
    }
    let mut params = init_params(spec, entities.len(), n_relations, init, seed)?;
    let mut copied = 0;
    for (e, name) in entities.names().iter().enumerate() {
        if let Some(i) = pretrained.entities.id(name) {
            params
                .entities
                .row_mut(e)
                .assign(&pretrained.params.entities.row(i as usize));
            copied += 1;
        }
    }
    Ok((
        params,
        WarmStartStats {
            copied,
            fresh: entities.len() - copied,
        },
    ))
}

/// Result of training and evaluating one downstream LP task.
#[derive(Debug, Clone)]
pub struct DownstreamResult {
    pub params: ModelParams,
    pub train: TrainReport,
    pub eval: EvalReport,
    pub warm: Option<WarmStartStats>,
}

impl DownstreamResult {
    /// Epoch whose parameters were kept (best validation MRR).
    pub fn epochs_to_best(&self) -> usize {
        self.train.best_epoch
    }
}

/// `fit` then filtered test evaluation, warm-starting entity rows from `warm` if given.
pub fn downstream_lp(splits: &SplitSet, config: &TrainConfig, warm: Option<&Checkpoint>) -> Result<DownstreamResult> {
    config.validate()?;
    let (initial, stats) = match warm {
        Some(ck) => {
            let (p, s) = warm_start(
                ck,
                splits.entities(),
                splits.num_relations(),
                &config.model_spec(),
                &config.init,
                config.seed,
            )?;
            (Some(p), Some(s))
        }
        None => (None, None),
    };
    let (params, train) = fit_from(splits, config, initial)?;
    let eval = evaluate_lp(&params, &splits.test, splits, &DEFAULT_KS)?;
    Ok(DownstreamResult {
        params,
        train,
        eval,
        warm: stats,
    })
}
