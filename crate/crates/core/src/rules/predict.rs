use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::learn::RuleBase;
use super::rule::{ScoredRule, Step};
use super::score::{anchor_bindings, backward_set, body_holds, forward_set};
use crate::eval::{summarize, EvalReport, FilterIndex, LpQuery, RankRecord};
use crate::kg::{SplitSet, TripleStore};
use crate::models::Direction;
use crate::{Error, Result};

/// How the confidences of the rules proposing a candidate are combined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Highest confidence; ties broken by the remaining confidences in descending order.
    #[default]
    Maximum,
    /// `1 − Π(1 − c)` over the firing rules.
    NoisyOr,
}

/// A proposed answer with the confidences of every rule proposing it (descending).
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub entity: u32,
    pub score: f64,
    pub confidences: Vec<f64>,
}

impl Candidate {
    /// Ordering of candidates from best to worst, ignoring the entity.
    fn rank_cmp(&self, other: &Candidate, agg: Aggregation) -> Ordering {
        match agg {
            Aggregation::Maximum => other
                .confidences
                .partial_cmp(&self.confidences)
                .expect("confidences are finite"),
            Aggregation::NoisyOr => other.score.total_cmp(&self.score),
        }
    }
}

struct Prepared<'a> {
    rule: &'a ScoredRule,
    steps: Vec<Step>,
    anchors: OnceLock<Vec<u32>>,
}

/// Applies a frozen rule base to queries against a training graph.
pub struct RuleApplier<'a> {
    train: &'a TripleStore,
    by_relation: HashMap<u32, Vec<Prepared<'a>>>,
    aggregation: Aggregation,
}

impl<'a> RuleApplier<'a> {
    pub fn new(base: &'a RuleBase, train: &'a TripleStore, aggregation: Aggregation) -> Self {
        let mut by_relation: HashMap<u32, Vec<Prepared<'a>>> = HashMap::new();
        for r in base.iter() {
            by_relation.entry(r.rule.relation()).or_default().push(Prepared {
                rule: r,
                steps: r.rule.steps(),
                anchors: OnceLock::new(),
            });
        }
        RuleApplier {
            train,
            by_relation,
            aggregation,
        }
    }

    fn fire(&self, p: &Prepared, q: LpQuery, mut emit: impl FnMut(u32)) {
        let rule = &p.rule.rule;
        let tail = q.direction == Direction::Tail;
        match rule.head_constant() {
            None if tail => forward_set(self.train, &p.steps, q.anchor).into_iter().for_each(emit),
            None => backward_set(self.train, &p.steps, vec![q.anchor])
                .into_iter()
                .for_each(emit),
            Some(c) if rule.anchor_subject() == tail => {
                if body_holds(self.train, rule, &p.steps, q.anchor) {
                    emit(c);
                }
            }
            Some(c) if c == q.anchor => p
                .anchors
                .get_or_init(|| anchor_bindings(self.train, rule, &p.steps))
                .iter()
                .copied()
                .for_each(emit),
            Some(_) => {}
        }
    }

    /// Candidates ranked best first; entity id breaks exact ties.
    pub fn predict(&self, q: LpQuery) -> Vec<Candidate> {
        let mut fired: HashMap<u32, Vec<f64>> = HashMap::new();
        for p in self.by_relation.get(&q.relation).into_iter().flatten() {
            self.fire(p, q, |e| fired.entry(e).or_default().push(p.rule.confidence));
        }
        let mut out: Vec<Candidate> = fired
            .into_iter()
            .map(|(entity, mut confidences)| {
                confidences.sort_by(|a, b| b.total_cmp(a));
                let score = match self.aggregation {
                    Aggregation::Maximum => confidences[0],
                    Aggregation::NoisyOr => 1.0 - confidences.iter().map(|c| 1.0 - c).product::<f64>(),
                };
                Candidate {
                    entity,
                    score,
                    confidences,
                }
            })
            .collect();
        out.sort_by(|a, b| a.rank_cmp(b, self.aggregation).then(a.entity.cmp(&b.entity)));
        out
    }
}

/// Ranked candidates for one query under maximum aggregation.
pub fn predict(base: &RuleBase, q: LpQuery, train: &TripleStore) -> Vec<Candidate> {
    RuleApplier::new(base, train, Aggregation::Maximum).predict(q)
}

/// Filtered rule-based LP metrics plus how often the answer was proposed at all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleEvalReport {
    #[serde(flatten)]
    pub report: EvalReport,
    pub coverage: f64,
    pub covered: usize,
    pub queries: usize,
    pub aggregation: Aggregation,
}

/// Evaluates a rule base on `test` in both directions, applying rules to the training
/// split. Queries whose answer is never proposed count with reciprocal rank 0.
pub fn evaluate_rules(
    base: &RuleBase,
    test: &TripleStore,
    splits: &SplitSet,
    ks: &[usize],
    aggregation: Aggregation,
) -> Result<RuleEvalReport> {
    if test.entities().names() != splits.entities().names() || test.relations().names() != splits.relations().names() {
        return Err(Error::Lookup("test store does not share the split vocabulary".into()));
    }
    let applier = RuleApplier::new(base, &splits.train, aggregation);
    let filter = FilterIndex::from_splits_and(splits, test);
    let records: Vec<RankRecord> = test
        .triples()
        .par_iter()
        .flat_map_iter(|&t| {
            [Direction::Tail, Direction::Head].map(|dir| {
                let (q, truth) = LpQuery::of(t, dir);
                let cands = applier.predict(q);
                let excluded: Vec<u32> = filter.excluded(q, truth).collect();
                let kept: Vec<&Candidate> = cands.iter().filter(|c| !excluded.contains(&c.entity)).collect();
                let rank = match kept.iter().find(|c| c.entity == truth) {
                    None => f64::INFINITY,
                    Some(hit) => {
                        let (mut better, mut tied) = (0usize, 0usize);
                        for c in kept.iter().filter(|c| c.entity != truth) {
                            match c.rank_cmp(hit, aggregation) {
                                Ordering::Less => better += 1,
                                Ordering::Equal => tied += 1,
                                Ordering::Greater => {}
                            }
                        }
                        1.0 + better as f64 + tied as f64 / 2.0
                    }
                };
                RankRecord {
                    triple: t,
                    direction: dir,
                    rank,
                    candidates: kept.len(),
                }
            })
        })
        .collect();
    let covered = records.iter().filter(|r| r.rank.is_finite()).count();
    let queries = records.len();
    Ok(RuleEvalReport {
        report: summarize(&records, ks, splits, test.len()),
        coverage: if queries == 0 {
            0.0
        } else {
            covered as f64 / queries as f64
        },
        covered,
        queries,
        aggregation,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::eval::DEFAULT_KS;
    use crate::kg::{Triple, Vocab};
    use crate::rules::{End, Rule};

    fn st(triples: &[(u32, u32, u32)]) -> TripleStore {
        let e = Arc::new(Vocab::from_names((0..6).map(|i| format!("e{i}"))));
        let r = Arc::new(Vocab::from_names(["r0", "r1"]));
        TripleStore::from_triples(e, r, triples.iter().map(|&(s, p, o)| Triple::new(s, p, o))).unwrap()
    }

    fn zero(c: u32, confidence: f64) -> ScoredRule {
        ScoredRule {
            rule: Rule::build(0, true, Some(c), &[], End::Free).unwrap(),
            support: 1,
            body_count: 1,
            confidence,
        }
    }

    fn dangling(c: u32, confidence: f64) -> ScoredRule {
        let step = Step {
            relation: 1,
            forward: true,
        };
        ScoredRule {
            rule: Rule::build(0, true, Some(c), &[step], End::Free).unwrap(),
            support: 1,
            body_count: 1,
            confidence,
        }
    }

    #[test]
    fn single_rule_gives_single_candidate() {
        let train = st(&[(0, 0, 1)]);
        let mut base = RuleBase::default();
        base.insert(zero(3, 0.6));
        let c = predict(&base, LpQuery::tail(0, 0), &train);
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].entity, c[0].score), (3, 0.6));
        assert!(predict(&base, LpQuery::tail(0, 1), &train).is_empty());
    }

    #[test]
    fn remaining_confidences_break_ties() {
        let train = st(&[(0, 0, 1), (0, 1, 2)]);
        let mut base = RuleBase::default();
        base.insert(zero(4, 0.6));
        base.insert(zero(3, 0.6));
        base.insert(dangling(3, 0.4));
        let c = predict(&base, LpQuery::tail(0, 0), &train);
        let order: Vec<u32> = c.iter().map(|c| c.entity).collect();
        assert_eq!(order, vec![3, 4]);
        assert_eq!(c[0].confidences, vec![0.6, 0.4]);
    }

    #[test]
    fn empty_base_has_no_coverage() {
        let train = st(&[(0, 0, 1), (2, 0, 3)]);
        let test = st(&[(4, 0, 5)]);
        let splits = SplitSet::from_stores(train, st(&[]), test.clone()).unwrap();
        let r = evaluate_rules(&RuleBase::default(), &test, &splits, &DEFAULT_KS, Aggregation::Maximum).unwrap();
        assert_eq!((r.report.mrr, r.coverage), (0.0, 0.0));
        assert!(r.report.hits.values().all(|&h| h == 0.0));
    }
}
