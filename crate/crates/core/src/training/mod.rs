//! Training under 1vsAll and negative sampling with cross-entropy loss.

mod config;
pub(crate) mod fit;
mod loss;
mod optim;

pub use config::{
    issues_to_error, validate_config, ConfigDoc, ConfigIssue, TrainConfig, TrainingType, BATCH_SIZES, EMBEDDING_SIZES,
    KEYS, LR_DECAY,
};
pub use fit::{fit, fit_from, triple_objective, EpochRecord, RelationUsage, TrainReport, TripleObjective};
pub use loss::{apply_dropout, ce_loss, ce_with_grad, reg_penalty, sample_negatives, Frequencies, RegKind, RegSpec};
pub use optim::{Optimizer, OptimizerKind};
