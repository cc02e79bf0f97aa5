mod common;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;
use std::time::Instant;

use biokge_core::eval::{LpQuery, DEFAULT_KS};
use biokge_core::kg::{SplitSet, Triple, TripleStore, Vocab};
use biokge_core::rules::{
    evaluate_rules, generalize, learn, predict, sample_ground_path, score_rule, Aggregation, GroundPath, LearnOptions,
    Rule, RuleBase, RuleKind, ScoredRule, Term,
};
use common::*;

/// Distinct head bindings of the body and how many of them make the head true, by
/// exhaustive matching of body atoms against triples.
fn oracle(rule: &Rule, store: &TripleStore) -> (u64, u64) {
    let triples = store.triples();
    let head = *rule.head();
    let mut heads: HashSet<(u32, u32)> = HashSet::new();
    if rule.body().is_empty() {
        for t in triples {
            if t.p == head.relation {
                match (head.subject, head.object) {
                    (Term::Var(_), Term::Const(c)) => heads.insert((t.s, c)),
                    (Term::Const(c), Term::Var(_)) => heads.insert((c, t.o)),
                    _ => unreachable!(),
                };
            }
        }
    } else {
        let mut binding: HashMap<u8, u32> = HashMap::new();
        search(rule, triples, 0, &mut binding, &mut heads);
    }
    let support = heads
        .iter()
        .filter(|&&(s, o)| triples.iter().any(|t| t.s == s && t.p == head.relation && t.o == o))
        .count();
    (support as u64, heads.len() as u64)
}

fn search(rule: &Rule, triples: &[Triple], i: usize, binding: &mut HashMap<u8, u32>, heads: &mut HashSet<(u32, u32)>) {
    if i == rule.body().len() {
        let value = |t: Term| match t {
            Term::Const(c) => c,
            Term::Var(v) => binding[&v],
        };
        heads.insert((value(rule.head().subject), value(rule.head().object)));
        return;
    }
    let atom = rule.body()[i];
    for t in triples.iter().filter(|t| t.p == atom.relation) {
        let mut added = Vec::new();
        let mut ok = true;
        for (term, v) in [(atom.subject, t.s), (atom.object, t.o)] {
            match term {
                Term::Const(c) => ok &= c == v,
                Term::Var(x) => match binding.get(&x) {
                    Some(&b) => ok &= b == v,
                    None => {
                        binding.insert(x, v);
                        added.push(x);
                    }
                },
            }
        }
        if ok {
            search(rule, triples, i + 1, binding, heads);
        }
        for x in added {
            binding.remove(&x);
        }
    }
}

fn sampled_rules(store: &TripleStore, max_len: usize, paths: usize, seed: u64) -> Vec<Rule> {
    let mut r = rng(seed);
    let mut seen = BTreeSet::new();
    for _ in 0..paths {
        let path = sample_ground_path(store, max_len, &mut r).unwrap();
        seen.extend(generalize(&path));
    }
    seen.into_iter().collect()
}

#[test]
fn drug_disease_pair_scores_150_of_238() {
    // 238 diseases-of-drug groundings of the body, 150 of which also have the head
    let mut names: Vec<String> = vec!["D006099".into(), "D006973".into()];
    names.extend((0..250).map(|i| format!("DB{i:05}")));
    let entities = Arc::new(Vocab::from_names(names));
    let relations = Arc::new(Vocab::from_names(["DrDiA"]));
    let mut triples = Vec::new();
    for d in 0..238u32 {
        triples.push(Triple::new(d + 2, 0, 0));
        if d < 150 {
            triples.push(Triple::new(d + 2, 0, 1));
        }
    }
    for d in 238..250u32 {
        triples.push(Triple::new(d + 2, 0, 1));
    }
    let store = TripleStore::from_triples(entities.clone(), relations.clone(), triples).unwrap();
    let rule = Rule::parse("DrDiA(X,D006973) <= DrDiA(X,D006099)", &entities, &relations).unwrap();

    let path = GroundPath {
        head: Triple::new(2, 0, 1),
        anchor_subject: true,
        body: vec![Triple::new(2, 0, 0)],
        nodes: vec![2, 0],
    };
    assert!(generalize(&path).contains(&rule));

    let s = score_rule(&rule, &store).unwrap();
    assert_eq!((s.support, s.body_count), (150, 238));
    assert!((s.confidence - 0.630).abs() < 5e-4, "{}", s.confidence);
}

#[test]
fn scores_match_grounding_oracle_on_small_stores() {
    for seed in 0..6 {
        let store = random_store(12, 3, 60, seed);
        for rule in sampled_rules(&store, 3, 300, seed) {
            let (support, body_count) = oracle(&rule, &store);
            match score_rule(&rule, &store) {
                Some(s) => {
                    assert_eq!((s.support, s.body_count), (support, body_count), "{rule:?}");
                    assert_eq!(s.confidence, support as f64 / body_count as f64);
                }
                None => assert_eq!(body_count, 0),
            }
        }
    }
}

#[test]
fn scores_match_grounding_oracle_on_ten_thousand_triples() {
    let store = random_store(800, 5, 10_000, 42);
    assert!(store.len() > 9_900);
    let rules = sampled_rules(&store, 2, 40, 3);
    assert!(rules.iter().any(|r| r.kind() == RuleKind::Cyclic) || rules.len() > 20);
    for rule in rules.iter().take(40) {
        let (support, body_count) = oracle(rule, &store);
        let s = score_rule(rule, &store).unwrap();
        assert_eq!((s.support, s.body_count), (support, body_count), "{rule:?}");
    }
}

#[test]
fn sampled_paths_are_adjacent() {
    let store = random_store(40, 4, 200, 9);
    let mut r = rng(10);
    for _ in 0..10_000 {
        let p = sample_ground_path(&store, 4, &mut r).unwrap();
        assert!(store.contains(&p.head));
        assert_eq!(p.nodes[0], if p.anchor_subject { p.head.s } else { p.head.o });
        for (i, t) in p.body.iter().enumerate() {
            assert!(store.contains(t));
            let (a, b) = (p.nodes[i], p.nodes[i + 1]);
            assert!((t.s == a && t.o == b) || (t.o == a && t.s == b));
        }
        assert!(p.body.len() <= 4);
        let distinct: HashSet<Triple> = p.triples().collect();
        assert_eq!(distinct.len(), p.len());
    }
}

#[test]
fn planted_rules_are_recovered() {
    for (i, c) in [0.5, 0.7, 0.9].into_iter().enumerate() {
        let store = planted_rule_store(c, 10_000, 3_000, i as u64);
        let opts = LearnOptions {
            time_budget_s: 60.0,
            max_length: 2,
            threshold: 2.0,
            max_paths: Some(3_000),
            seed: i as u64,
            ..Default::default()
        };
        let base = learn(&store, &opts).unwrap();
        let planted = Rule::parse("head(X,Y) <= body(X,Y)", store.entities(), store.relations()).unwrap();
        let found = base
            .rules_for(1)
            .iter()
            .find(|r| r.rule == planted)
            .expect("planted rule learned");
        assert_eq!(found.body_count, 10_000);
        assert!((found.confidence - c).abs() <= 0.02, "c={c}: {}", found.confidence);
    }
}

#[test]
fn learning_respects_the_budget() {
    let store = random_store(30, 3, 150, 1);
    let opts = LearnOptions {
        time_budget_s: 1.0,
        max_length: 3,
        threshold: 1.0,
        workers: 2,
        ..Default::default()
    };
    let t = Instant::now();
    let base = learn(&store, &opts).unwrap();
    assert!(t.elapsed().as_secs_f64() < 2.0);
    assert!(!base.is_empty());
    assert!(!base.meta.unwrap().reproducible);
}

#[test]
fn longer_rules_never_lose_shapes() {
    let store = random_store(10, 2, 40, 5);
    let shapes = |max_length| -> BTreeSet<(String, usize, Vec<bool>)> {
        let opts = LearnOptions {
            time_budget_s: 60.0,
            max_length,
            threshold: 1.0,
            max_paths: Some(4_000),
            ..Default::default()
        };
        learn(&store, &opts)
            .unwrap()
            .iter()
            .map(|r| {
                (
                    format!("{:?}", r.rule.kind()),
                    r.rule.len(),
                    r.rule.steps().iter().map(|s| s.forward).collect(),
                )
            })
            .collect()
    };
    let mut prev = shapes(1);
    for len in 2..=4 {
        let next = shapes(len);
        assert!(prev.is_subset(&next), "length {len} lost shapes");
        assert!(next.len() > prev.len());
        prev = next;
    }
}

#[test]
fn prediction_is_deterministic() {
    let store = random_store(20, 3, 120, 2);
    let opts = LearnOptions {
        time_budget_s: 30.0,
        max_length: 2,
        threshold: 1.0,
        max_paths: Some(500),
        ..Default::default()
    };
    let base = learn(&store, &opts).unwrap();
    for t in store.triples().iter().take(30) {
        let q = LpQuery::tail(t.s, t.p);
        assert_eq!(predict(&base, q, &store), predict(&base, q, &store));
    }
}

/// `r1` pairs `x_i -> y_i` for `i < covered`; `r0` copies the first half in train and
/// the second half in test.
fn one_rule_fixture(covered: u32) -> (SplitSet, RuleBase) {
    let n = 20u32;
    let entities = Arc::new(Vocab::from_names((0..2 * n).map(|i| format!("e{i}"))));
    let relations = Arc::new(Vocab::from_names(["r0", "r1"]));
    let mk = |ts: Vec<Triple>| TripleStore::from_triples(entities.clone(), relations.clone(), ts).unwrap();
    let mut train: Vec<Triple> = (0..covered).map(|i| Triple::new(i, 1, n + i)).collect();
    train.extend((0..n / 2).map(|i| Triple::new(i, 0, n + i)));
    let test = mk((n / 2..n).map(|i| Triple::new(i, 0, n + i)).collect());
    let splits = SplitSet::from_stores(mk(train), mk(vec![]), test).unwrap();
    let rule = Rule::parse("r0(X,Y) <= r1(X,Y)", &entities, &relations).unwrap();
    let s = score_rule(&rule, &splits.train).unwrap();
    let mut base = RuleBase::default();
    base.insert(ScoredRule {
        rule,
        support: s.support,
        body_count: s.body_count,
        confidence: s.confidence,
    });
    (splits, base)
}

#[test]
fn one_rule_explaining_the_test_set_is_perfect() {
    let (splits, base) = one_rule_fixture(20);
    let r = evaluate_rules(&base, &splits.test, &splits, &DEFAULT_KS, Aggregation::Maximum).unwrap();
    assert_eq!(r.report.mrr, 1.0);
    assert_eq!(r.coverage, 1.0);
    assert_eq!(r.queries, 2 * splits.test.len());
}

#[test]
fn uncovered_queries_scale_every_metric_by_coverage() {
    let eval = |covered| {
        let (splits, mut base) = one_rule_fixture(covered);
        // a stronger rule proposing e0 for every tail query pushes true tails to rank 2
        let rule = Rule::parse("r0(X,e0) <= r1(X,Z)", splits.entities(), splits.relations()).unwrap();
        base.insert(ScoredRule {
            rule,
            support: 1,
            body_count: 1,
            confidence: 0.9,
        });
        evaluate_rules(&base, &splits.test, &splits, &[1, 10], Aggregation::Maximum).unwrap()
    };
    let full = eval(20);
    let half = eval(15);
    assert_eq!(full.coverage, 1.0);
    assert_eq!(half.coverage, 0.5);
    // covered: tails at rank 2, heads at rank 1
    assert_eq!(full.report.mrr, 0.75);
    assert_eq!(full.report.hits[&1], 0.5);
    for (a, b) in [
        (half.report.mrr, full.report.mrr),
        (half.report.hits[&1], full.report.hits[&1]),
        (half.report.hits[&10], full.report.hits[&10]),
    ] {
        assert!((a - half.coverage * b).abs() < 1e-12);
    }
    assert!(half.report.mrr < half.report.hits[&10]);
}
