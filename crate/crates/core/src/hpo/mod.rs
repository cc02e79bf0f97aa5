//! Quasi-random hyperparameter search.

mod run;
mod sobol;
mod space;

pub use run::{read_trial_log, run_hpo, run_hpo_with, select_best, HpoOptions, HpoReport, TrialRecord, TrialStatus};
pub use sobol::{ScrambledSobol, GENERATOR, MAX_POINTS};
pub use space::{sample_configs, Dimension, Domain, SearchSpace};
