//! Knowledge-graph embedding engine: triple stores, six embedding models, training under
//! 1vsAll and negative sampling, filtered link-prediction evaluation, quasi-random
//! hyperparameter search, bottom-up rule learning, and transfer to downstream tasks.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod hpo;
pub mod kg;
pub mod models;
pub mod presets;
pub mod rules;
pub mod training;
pub mod transfer;

pub use error::{Error, Result};
