//! Bottom-up rule learning: sample ground paths, generalize them into chain rules,
//! score the rules on the training graph, and rank candidates by rule confidence.

mod ground;
mod learn;
mod predict;
mod rule;
mod score;

pub use ground::{generalize, sample_ground_path, GroundPath};
pub use learn::{learn, LearnMeta, LearnOptions, RuleBase};
pub use predict::{evaluate_rules, predict, Aggregation, Candidate, RuleApplier, RuleEvalReport};
pub use rule::{Atom, End, Rule, RuleKind, ScoredRule, Step, Term, MAX_RULE_LENGTH, VAR_NAMES, X, Y};
pub use score::{score_rule, RuleScore};
