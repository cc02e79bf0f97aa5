//! Checkpoints, warm-started downstream link prediction, and pair classification on
//! scratch, frozen or fine-tuned entity embeddings.

mod checkpoint;
mod classifier;
mod pairs;
mod warm;

pub use checkpoint::{Checkpoint, Precision, FORMAT_VERSION, MAGIC};
pub use classifier::{train_classifier, Classifier, ClassifierConfig, ClassifierReport, EmbeddingMode};
pub use pairs::{build_pair_dataset, PairDataset, PairExample, NO_INTERACTION};
pub use warm::{downstream_lp, warm_start, DownstreamResult, WarmStartStats};
