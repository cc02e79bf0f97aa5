use serde::{Deserialize, Serialize};

use super::rule::{End, Rule, Step};
use crate::kg::{Triple, TripleStore};

/// Counts of a rule on a store.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleScore {
    pub support: u64,
    pub body_count: u64,
    pub confidence: f64,
}

/// Entities one step away from `e` along `step`, walking forward (`towards_end`) or back.
fn neighbors(store: &TripleStore, e: u32, step: Step, towards_end: bool) -> &[u32] {
    if step.forward == towards_end {
        store.objects(e, step.relation)
    } else {
        store.subjects(step.relation, e)
    }
}

fn propagate<'a>(
    store: &TripleStore,
    steps: impl Iterator<Item = &'a Step>,
    start: Vec<u32>,
    towards_end: bool,
) -> Vec<u32> {
    let mut cur = start;
    for &st in steps {
        let mut next: Vec<u32> = cur
            .iter()
            .flat_map(|&e| neighbors(store, e, st, towards_end).iter().copied())
            .collect();
        next.sort_unstable();
        next.dedup();
        if next.is_empty() {
            return next;
        }
        cur = next;
    }
    cur
}

/// Entities reachable at the end of the chain from `start`.
pub(crate) fn forward_set(store: &TripleStore, steps: &[Step], start: u32) -> Vec<u32> {
    propagate(store, steps.iter(), vec![start], true)
}

/// Entities at the start of the chain that reach one of `ends`.
pub(crate) fn backward_set(store: &TripleStore, steps: &[Step], ends: Vec<u32>) -> Vec<u32> {
    propagate(store, steps.iter().rev(), ends, false)
}

/// Entities occupying one side of relation `p`.
pub(crate) fn side_entities(store: &TripleStore, p: u32, subjects: bool) -> Vec<u32> {
    let mut v: Vec<u32> = store
        .with_relation(p)
        .map(|t| if subjects { t.s } else { t.o })
        .collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Whether the body holds with the anchor bound to `e`.
pub(crate) fn body_holds(store: &TripleStore, rule: &Rule, steps: &[Step], e: u32) -> bool {
    if steps.is_empty() {
        let p = rule.relation();
        let side = rule.anchor_subject();
        return store.with_relation(p).any(|t| if side { t.s == e } else { t.o == e });
    }
    let ends = forward_set(store, steps, e);
    match rule.end() {
        End::Const(d) => ends.binary_search(&d).is_ok(),
        _ => !ends.is_empty(),
    }
}

/// Anchor bindings satisfying the body of a rule with a constant in the head.
pub(crate) fn anchor_bindings(store: &TripleStore, rule: &Rule, steps: &[Step]) -> Vec<u32> {
    match (steps.first(), steps.last(), rule.end()) {
        (None, _, _) => side_entities(store, rule.relation(), rule.anchor_subject()),
        (_, _, End::Const(d)) => backward_set(store, steps, vec![d]),
        (_, Some(last), _) => backward_set(store, steps, side_entities(store, last.relation, !last.forward)),
        _ => unreachable!("non-empty body has a last step"),
    }
}

/// Support, body groundings and confidence of `rule` on `store`.
///
/// Groundings are counted as distinct bindings of the head variables: `(X, Y)` pairs
/// for cyclic rules and anchor values otherwise. Returns `None` when the body has no
/// grounding.
pub fn score_rule(rule: &Rule, store: &TripleStore) -> Option<RuleScore> {
    let steps = rule.steps();
    let p = rule.relation();
    let (mut support, mut body_count) = (0u64, 0u64);
    match rule.head_constant() {
        None => {
            let first = steps[0];
            for x in side_entities(store, first.relation, first.forward) {
                for y in forward_set(store, &steps, x) {
                    body_count += 1;
                    support += store.contains(&Triple::new(x, p, y)) as u64;
                }
            }
        }
        Some(c) => {
            for a in anchor_bindings(store, rule, &steps) {
                body_count += 1;
                let head = if rule.anchor_subject() {
                    Triple::new(a, p, c)
                } else {
                    Triple::new(c, p, a)
                };
                support += store.contains(&head) as u64;
            }
        }
    }
    (body_count > 0).then(|| RuleScore {
        support,
        body_count,
        confidence: support as f64 / body_count as f64,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::kg::Vocab;

    fn store(triples: &[(u32, u32, u32)], n_e: usize, n_r: usize) -> TripleStore {
        let e = Arc::new(Vocab::from_names((0..n_e).map(|i| format!("e{i}"))));
        let r = Arc::new(Vocab::from_names((0..n_r).map(|i| format!("r{i}"))));
        TripleStore::from_triples(e, r, triples.iter().map(|&(s, p, o)| Triple::new(s, p, o))).unwrap()
    }

    #[test]
    fn body_contained_in_head_has_confidence_one() {
        // r1 ⊆ r0
        let st = store(&[(0, 0, 1), (2, 0, 3), (0, 1, 1), (2, 1, 3)], 4, 2);
        let rule = Rule::build(
            0,
            true,
            None,
            &[Step {
                relation: 1,
                forward: true,
            }],
            End::Head,
        )
        .unwrap();
        let s = score_rule(&rule, &st).unwrap();
        assert_eq!((s.support, s.body_count, s.confidence), (2, 2, 1.0));
    }

    #[test]
    fn empty_body_groundings_discard_the_rule() {
        let st = store(&[(0, 0, 1)], 3, 2);
        let rule = Rule::build(
            0,
            true,
            Some(1),
            &[Step {
                relation: 1,
                forward: true,
            }],
            End::Free,
        )
        .unwrap();
        assert!(score_rule(&rule, &st).is_none());
    }

    #[test]
    fn zero_body_counts_relation_domain() {
        // subjects of r0: 0, 1, 2; those with object 3: 0, 1
        let st = store(&[(0, 0, 3), (1, 0, 3), (2, 0, 4), (0, 0, 4)], 5, 1);
        let rule = Rule::build(0, true, Some(3), &[], End::Free).unwrap();
        let s = score_rule(&rule, &st).unwrap();
        assert_eq!((s.support, s.body_count), (2, 3));
    }
}
