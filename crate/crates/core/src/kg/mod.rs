//! Triple storage, augmentation, splitting and degree statistics.

mod degree;
mod split;
mod store;

pub use degree::{degree_stats, DegreeRow, DegreeStats};
pub use split::{make_splits, split_sizes, SplitManifest, SplitSet, DEFAULT_RATIOS};
pub use store::{parse_tsv, Triple, TripleStore, Vocab, RECIPROCAL_SUFFIX};
