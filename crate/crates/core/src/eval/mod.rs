//! Filtered link-prediction metrics and one-vs-rest classification metrics.

mod classify;
mod filter;
mod lp;
mod rank;

pub use classify::{classification_metrics, ClassMetrics, ClassificationReport};
pub use filter::{filtered_candidates, FilterIndex, LpQuery};
pub use lp::{
    evaluate_lp, rank_records, summarize, EvalReport, Metrics, RankRecord, RelationMetrics, DEFAULT_KS, PROTOCOL,
};
pub use rank::filtered_rank;
