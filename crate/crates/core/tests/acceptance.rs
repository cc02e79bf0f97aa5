//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p biokge-core --test acceptance`. Positional arguments select
//! criteria by number; `--include-ignored` (or `--ignored`) also runs the data-dependent
//! reproduction, which needs `BIOKGE_DATA` to point at the benchmark files.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use biokge_core::eval::{classification_metrics, evaluate_lp};
use biokge_core::kg::{degree_stats, make_splits, SplitSet, Triple, TripleStore, Vocab, DEFAULT_RATIOS};
use biokge_core::models::{score, score_gradients, InitSpec, ModelKind, ModelParams, ModelSpec, Norm};
use biokge_core::rules::{generalize, learn, sample_ground_path, score_rule, GroundPath, LearnOptions, Rule, Term};
use biokge_core::training::{fit, triple_objective, TrainConfig, TrainingType};
use biokge_core::transfer::{downstream_lp, Checkpoint};
use common::*;
use rand::Rng;

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    run: fn() -> Outcome,
}

const CRITERIA: [Criterion; 7] = [
    Criterion {
        id: 1,
        name: "gradient fidelity",
        run: gradient_fidelity,
    },
    Criterion {
        id: 2,
        name: "metric oracle equivalence",
        run: metric_oracle,
    },
    Criterion {
        id: 3,
        name: "scoring identities",
        run: scoring_identities,
    },
    Criterion {
        id: 4,
        name: "overfit smoke test",
        run: overfit_smoke,
    },
    Criterion {
        id: 5,
        name: "rule recovery",
        run: rule_recovery,
    },
    Criterion {
        id: 6,
        name: "warm-start advantage",
        run: warm_start_advantage,
    },
    Criterion {
        id: 9,
        name: "classification-metric oracle",
        run: classification_oracle,
    },
];

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: f64, label: &str) -> Result<(), String> {
    if elapsed.as_secs_f64() < limit_s {
        Ok(())
    } else {
        Err(format!("{label} took {:.1}s, limit {limit_s}s", elapsed.as_secs_f64()))
    }
}

// ---------------------------------------------------------------------------
// 1. Gradient fidelity

const FD_EPS: f64 = 1e-5;
const FD_TOL: f64 = 1e-4;
const FD_DRAWS: u64 = 100;

/// Every scalar the objective of `t` depends on, with its analytic partial.
fn objective_slots(g: &ModelParams) -> Vec<(Slot, f64)> {
    let mut out = Vec::new();
    for ((r, c), &v) in g.entities.indexed_iter() {
        out.push((Slot::Entity(r, c), v));
    }
    for ((r, c), &v) in g.relations.indexed_iter() {
        out.push((Slot::Relation(r, c), v));
    }
    if let Some(n) = &g.normals {
        for ((r, c), &v) in n.indexed_iter() {
            out.push((Slot::Normal(r, c), v));
        }
    }
    if let Some(conv) = &g.conv {
        for (i, &v) in conv.filter_bank.iter().enumerate() {
            out.push((Slot::Filter(i), v));
        }
        for ((r, c), &v) in conv.projection.indexed_iter() {
            out.push((Slot::Projection(r, c), v));
        }
    }
    out
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut summary = Vec::new();
    for kind in ModelKind::ALL {
        let (mut checked, mut flagged) = (0, 0);
        for draw in 0..FD_DRAWS {
            let cfg = TrainConfig {
                model: kind,
                embedding_size: 4,
                norm: if kind.uses_norm() && draw % 2 == 1 {
                    Norm::L1
                } else {
                    Norm::L2
                },
                training_type: TrainingType::OneVsAll,
                reciprocal: draw % 3 == 0,
                ..Default::default()
            };
            let n_e = 6;
            let params = random_params_spec(cfg.model_spec(), n_e, 2, 1_000 + draw);
            let mut r = rng(draw);
            let t = Triple::new(
                r.random_range(0..n_e as u32),
                r.random_range(0..2),
                r.random_range(0..n_e as u32),
            );

            // the bare score
            let g = score_gradients(&params, t.s, t.p, t.o).map_err(|e| e.to_string())?;
            let obj = triple_objective(&params, &cfg, t, draw).map_err(|e| e.to_string())?;
            if g.nondifferentiable || obj.nondifferentiable {
                flagged += 1;
                continue;
            }
            checked += 1;
            let f = |q: &ModelParams| score(q, t.s, t.p, t.o).unwrap();
            let w = params.spec.entity_width();
            let mut pairs: Vec<(Slot, f64)> = Vec::new();
            if t.s != t.o {
                for k in 0..w {
                    pairs.push((Slot::Entity(t.s as usize, k), g.subject[k]));
                    pairs.push((Slot::Entity(t.o as usize, k), g.object[k]));
                }
            }
            for k in 0..params.spec.relation_width() {
                pairs.push((Slot::Relation(t.p as usize, k), g.relation[k]));
            }
            if let Some(n) = &g.normal {
                n.iter()
                    .enumerate()
                    .for_each(|(k, &v)| pairs.push((Slot::Normal(t.p as usize, k), v)));
            }
            if let Some(fg) = &g.conv_filters {
                fg.iter()
                    .enumerate()
                    .for_each(|(i, &v)| pairs.push((Slot::Filter(i), v)));
            }
            if let Some(pg) = &g.conv_projection {
                let d = params.dim();
                pg.iter()
                    .enumerate()
                    .for_each(|(i, &v)| pairs.push((Slot::Projection(i / d, i % d), v)));
            }
            for (slot, analytic) in pairs {
                worst = worst.max(relative_error(analytic, central_difference(&params, slot, FD_EPS, f)));
            }

            // score + cross-entropy over all entities
            let loss = |q: &ModelParams| triple_objective(q, &cfg, t, draw).unwrap().loss;
            for (slot, analytic) in objective_slots(&obj.grad) {
                worst = worst.max(relative_error(
                    analytic,
                    central_difference(&params, slot, FD_EPS, loss),
                ));
            }
        }
        if checked < FD_DRAWS as usize / 2 {
            return Err(format!("{kind}: only {checked} of {FD_DRAWS} draws differentiable"));
        }
        summary.push(format!("{kind} {checked}/{flagged}"));
    }
    within(start.elapsed(), 60.0, "gradient check")?;
    check(
        worst < FD_TOL,
        format!(
            "max relative error {worst:.2e} (< {FD_TOL:e}); checked/flagged draws: {}; {:.1}s",
            summary.join(", "),
            start.elapsed().as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. Metric oracle

/// Filtered MRR and HITS@{1,3,10} by explicit loops over every candidate.
fn brute_force_metrics(params: &ModelParams, splits: &SplitSet) -> (f64, [f64; 3]) {
    let mut known: HashSet<(u32, u32, u32)> = HashSet::new();
    for store in [&splits.train, &splits.valid, &splits.test] {
        for t in store.triples() {
            known.insert((t.s, t.p, t.o));
        }
    }
    let n_e = params.num_entities() as u32;
    let base = params.base_relations as u32;
    let mut ranks: Vec<f64> = Vec::new();
    for t in splits.test.triples() {
        // tail query (s, p, ?)
        let truth = score(params, t.s, t.p, t.o).unwrap();
        let (mut better, mut tied) = (0usize, 0usize);
        for e in 0..n_e {
            if e == t.o || known.contains(&(t.s, t.p, e)) {
                continue;
            }
            let v = score(params, t.s, t.p, e).unwrap();
            if v > truth {
                better += 1;
            } else if v == truth {
                tied += 1;
            }
        }
        ranks.push(1.0 + better as f64 + tied as f64 / 2.0);

        // head query (?, p, o), through the inverse relation when the model has one
        let head_score = |e: u32| {
            if params.reciprocal() {
                score(params, t.o, t.p + base, e).unwrap()
            } else {
                score(params, e, t.p, t.o).unwrap()
            }
        };
        let truth = head_score(t.s);
        let (mut better, mut tied) = (0usize, 0usize);
        for e in 0..n_e {
            if e == t.s || known.contains(&(e, t.p, t.o)) {
                continue;
            }
            let v = head_score(e);
            if v > truth {
                better += 1;
            } else if v == truth {
                tied += 1;
            }
        }
        ranks.push(1.0 + better as f64 + tied as f64 / 2.0);
    }
    let n = 2.0 * splits.test.len() as f64;
    let mut mrr = 0.0;
    let mut hits = [0.0; 3];
    for &r in &ranks {
        mrr += 1.0 / r;
        for (i, k) in [1.0, 3.0, 10.0].into_iter().enumerate() {
            if r <= k {
                hits[i] += 1.0;
            }
        }
    }
    (mrr / n, hits.map(|h| h / n))
}

fn metric_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut with_ties = 0;
    for g in 0..50u64 {
        let mut r = rng(77 + g);
        let n_e = r.random_range(5..=25);
        let n_r = r.random_range(1..=5);
        let n_t = r.random_range(10..=200);
        let splits = random_splits(n_e, n_r, n_t, g);
        let kind = ModelKind::ALL[g as usize % 6];
        let spec = ModelSpec::new(kind, 4).with_reciprocal(g % 2 == 1);
        let mut params = random_params_spec(spec, n_e, n_r, 500 + g);
        if g % 5 == 0 && kind != ModelKind::ConvE {
            // coarse integer values force exact score ties
            params.entities.mapv_inplace(|v| (v * 2.0).round());
            params.relations.mapv_inplace(|v| (v * 2.0).round());
            with_ties += 1;
        }
        let report = evaluate_lp(&params, &splits.test, &splits, &[1, 3, 10]).map_err(|e| e.to_string())?;
        let (mrr, hits) = brute_force_metrics(&params, &splits);
        worst = worst.max((report.mrr - mrr).abs());
        for (i, k) in [1usize, 3, 10].into_iter().enumerate() {
            worst = worst.max((report.hits[&k] - hits[i]).abs());
        }
    }
    within(start.elapsed(), 60.0, "metric oracle")?;
    check(
        worst <= 1e-12,
        format!(
            "50 graphs ({with_ties} with forced ties), max |Δ| over MRR and HITS@{{1,3,10}} = {worst:.1e} (≤ 1e-12); {:.1}s",
            start.elapsed().as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------
// 3. Scoring identities

fn scoring_identities() -> Outcome {
    let (mut complex, mut rotate, mut transh) = (0.0f64, 0.0f64, 0.0f64);
    for draw in 0..1_000u64 {
        let mut r = rng(9_000 + draw);
        // complex rows interleave (re, im); both complex models need an even size
        let d = r.random_range(1..=8);

        // ComplEx with zero imaginary parts against DistMult on the real parts
        let mut cx = random_params(ModelKind::ComplEx, 2 * d, 2, 1, draw);
        for v in cx.entities.iter_mut().skip(1).step_by(2) {
            *v = 0.0;
        }
        for v in cx.relations.iter_mut().skip(1).step_by(2) {
            *v = 0.0;
        }
        let mut dm = random_params(ModelKind::DistMult, 2 * d, 2, 1, draw);
        for k in 0..2 * d {
            for e in 0..2 {
                dm.entities[[e, k]] = cx.entities[[e, 2 * k]];
            }
            dm.relations[[0, k]] = cx.relations[[0, 2 * k]];
        }
        complex = complex.max((score(&cx, 0, 0, 1).unwrap() - score(&dm, 0, 0, 1).unwrap()).abs());

        // RotatE with zero phases is the negative Euclidean distance
        let mut rt = random_params(ModelKind::RotatE, 2 * d, 2, 1, draw);
        rt.relations.fill(0.0);
        let dist = rt
            .entities
            .row(0)
            .iter()
            .zip(rt.entities.row(1).iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        rotate = rotate.max((score(&rt, 0, 0, 1).unwrap() + dist).abs());

        // TransH with entities orthogonal to the normal is TransE
        let dh = r.random_range(2..=16);
        let mut th = random_params(ModelKind::TransH, dh, 2, 1, draw);
        let axis = r.random_range(0..dh);
        let normal: Vec<f64> = (0..dh).map(|k| if k == axis { 1.0 } else { 0.0 }).collect();
        th.normals
            .as_mut()
            .unwrap()
            .row_mut(0)
            .assign(&ndarray::Array1::from(normal));
        for e in 0..2 {
            th.entities[[e, axis]] = 0.0;
        }
        let mut te = random_params(ModelKind::TransE, dh, 2, 1, draw);
        te.entities.assign(&th.entities);
        te.relations.assign(&th.relations);
        transh = transh.max((score(&th, 0, 0, 1).unwrap() - score(&te, 0, 0, 1).unwrap()).abs());
    }
    check(
        complex <= 1e-12 && rotate <= 1e-12 && transh <= 1e-10,
        format!(
            "1000 draws each: ComplEx/DistMult {complex:.1e} (≤ 1e-12), RotatE/distance {rotate:.1e} (≤ 1e-12), TransH/TransE {transh:.1e} (≤ 1e-10)"
        ),
    )
}

// ---------------------------------------------------------------------------
// 4. Overfit smoke test

fn overfit_smoke() -> Outcome {
    let start = Instant::now();
    let e = Arc::new(Vocab::from_names((0..5).map(|i| format!("e{i}"))));
    let r = Arc::new(Vocab::from_names(["r0", "r1"]));
    let triples = [
        (0, 0, 1),
        (0, 0, 2),
        (1, 0, 2),
        (2, 0, 3),
        (3, 0, 4),
        (4, 1, 0),
        (1, 1, 3),
        (2, 1, 2),
        (3, 1, 0),
        (0, 1, 4),
    ]
    .map(|(s, p, o)| Triple::new(s, p, o));
    let train = TripleStore::from_triples(e.clone(), r.clone(), triples).map_err(|e| e.to_string())?;
    let empty = TripleStore::empty(e, r);
    let splits = SplitSet::from_stores(train, empty.clone(), empty).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        model: ModelKind::ComplEx,
        embedding_size: 16,
        training_type: TrainingType::OneVsAll,
        max_epochs: 500,
        learning_rate: 0.1,
        init: InitSpec::normal(0.1),
        ..Default::default()
    };
    let (params, report) = fit(&splits, &cfg).map_err(|e| e.to_string())?;
    let eval = evaluate_lp(&params, &splits.train, &splits, &[1]).map_err(|e| e.to_string())?;
    within(start.elapsed(), 60.0, "overfit run")?;
    check(
        eval.hits[&1] == 1.0 && report.epochs.len() <= 500,
        format!(
            "filtered train HITS@1 = {} after {} epochs; {:.1}s",
            eval.hits[&1],
            report.epochs.len(),
            start.elapsed().as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------
// 5. Rule recovery

/// Support and body count of `rule` by exhaustive matching of body atoms.
fn grounding_oracle(rule: &Rule, store: &TripleStore) -> (u64, u64) {
    fn search(
        rule: &Rule,
        triples: &[Triple],
        i: usize,
        binding: &mut HashMap<u8, u32>,
        heads: &mut HashSet<(u32, u32)>,
    ) {
        let value = |t: Term, b: &HashMap<u8, u32>| match t {
            Term::Const(c) => Some(c),
            Term::Var(v) => b.get(&v).copied(),
        };
        if i == rule.body().len() {
            let h = rule.head();
            heads.insert((value(h.subject, binding).unwrap(), value(h.object, binding).unwrap()));
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
    let triples = store.triples();
    let head = *rule.head();
    let mut heads = HashSet::new();
    if rule.body().is_empty() {
        for t in triples.iter().filter(|t| t.p == head.relation) {
            match (head.subject, head.object) {
                (Term::Var(_), Term::Const(c)) => heads.insert((t.s, c)),
                (Term::Const(c), Term::Var(_)) => heads.insert((c, t.o)),
                _ => unreachable!("zero-body rules bind one constant"),
            };
        }
    } else {
        search(rule, triples, 0, &mut HashMap::new(), &mut heads);
    }
    let facts: HashSet<(u32, u32)> = triples
        .iter()
        .filter(|t| t.p == head.relation)
        .map(|t| (t.s, t.o))
        .collect();
    let support = heads.iter().filter(|h| facts.contains(h)).count();
    (support as u64, heads.len() as u64)
}

fn oracle_mismatches(
    store: &TripleStore,
    max_len: usize,
    paths: usize,
    seed: u64,
    limit: usize,
) -> Result<(usize, usize), String> {
    let mut r = rng(seed);
    let mut rules = BTreeSet::new();
    for _ in 0..paths {
        let path = sample_ground_path(store, max_len, &mut r).map_err(|e| e.to_string())?;
        rules.extend(generalize(&path));
    }
    let mut bad = 0;
    let mut n = 0;
    for rule in rules.iter().take(limit) {
        n += 1;
        let (support, body_count) = grounding_oracle(rule, store);
        let ok = match score_rule(rule, store) {
            Some(s) => (s.support, s.body_count) == (support, body_count),
            None => body_count == 0,
        };
        bad += usize::from(!ok);
    }
    Ok((n, bad))
}

fn rule_recovery() -> Outcome {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut ok = true;

    // the 150 of 238 worked example
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
    let store = TripleStore::from_triples(entities.clone(), relations.clone(), triples).map_err(|e| e.to_string())?;
    let rule = Rule::parse("DrDiA(X,D006973) <= DrDiA(X,D006099)", &entities, &relations).map_err(|e| e.to_string())?;
    let path = GroundPath {
        head: Triple::new(2, 0, 1),
        anchor_subject: true,
        body: vec![Triple::new(2, 0, 0)],
        nodes: vec![2, 0],
    };
    let s = score_rule(&rule, &store).ok_or("fixture rule has no body groundings")?;
    let fixture_ok = generalize(&path).contains(&rule)
        && (s.support, s.body_count) == (150, 238)
        && (s.confidence - 0.63).abs() < 5e-3;
    ok &= fixture_ok;
    notes.push(format!("fixture {}/{} = {:.3}", s.support, s.body_count, s.confidence));

    // planted rules under a 10 s budget
    for (i, c) in [0.5, 0.7, 0.9].into_iter().enumerate() {
        let store = planted_rule_store(c, 10_000, 3_000, 40 + i as u64);
        let opts = LearnOptions {
            time_budget_s: 10.0,
            max_length: 2,
            threshold: 2.0,
            seed: i as u64,
            ..Default::default()
        };
        let base = learn(&store, &opts).map_err(|e| e.to_string())?;
        let planted =
            Rule::parse("head(X,Y) <= body(X,Y)", store.entities(), store.relations()).map_err(|e| e.to_string())?;
        match base.rules_for(1).iter().find(|r| r.rule == planted) {
            Some(found) => {
                let good = (found.confidence - c).abs() <= 0.02 && found.body_count >= 10_000;
                ok &= good;
                notes.push(format!(
                    "c={c}: {:.4} over {} groundings",
                    found.confidence, found.body_count
                ));
            }
            None => {
                ok = false;
                notes.push(format!("c={c}: planted rule not learned"));
            }
        }
    }

    // exact agreement with the grounding oracle
    let mut checked = 0;
    let mut mismatched = 0;
    for seed in 0..6 {
        let (n, bad) = oracle_mismatches(&random_store(12, 3, 60, seed), 3, 300, seed, usize::MAX)?;
        checked += n;
        mismatched += bad;
    }
    let big = random_store(800, 5, 10_000, 42);
    let (n, bad) = oracle_mismatches(&big, 2, 40, 3, 40)?;
    checked += n;
    mismatched += bad;
    ok &= mismatched == 0;
    notes.push(format!(
        "oracle: {mismatched} mismatches in {checked} rules (largest store {} triples)",
        big.len()
    ));
    notes.push(format!("{:.1}s", start.elapsed().as_secs_f64()));
    check(ok, notes.join("; "))
}

// ---------------------------------------------------------------------------
// 6. Warm-start advantage

const GROUPS: u32 = 40;
const WS_ENTITIES: u32 = 400;
const WS_PRETRAIN_RELATIONS: u32 = 6;
const WS_TRIPLES_PER_RELATION: usize = 1_500;
const WS_TASK_TRIPLES: usize = 1_200;

/// A graph whose relations send latent entity groups to other groups, plus a held-out
/// relation of the same kind that only the downstream task contains.
fn latent_group_graphs(seed: u64) -> (TripleStore, TripleStore) {
    let mut r = rng(seed);
    let group = |e: u32| e % GROUPS;
    let member = |g: u32, r: &mut rand_chacha::ChaCha8Rng| g + GROUPS * r.random_range(0..WS_ENTITIES / GROUPS);
    let maps: Vec<Vec<u32>> = (0..=WS_PRETRAIN_RELATIONS)
        .map(|_| (0..GROUPS).map(|_| r.random_range(0..GROUPS)).collect())
        .collect();
    let entities = Arc::new(Vocab::from_names((0..WS_ENTITIES).map(|i| format!("n{i}"))));
    let relations = Arc::new(Vocab::from_names((0..WS_PRETRAIN_RELATIONS).map(|i| format!("rel{i}"))));
    let mut triples = Vec::new();
    for p in 0..WS_PRETRAIN_RELATIONS {
        for _ in 0..WS_TRIPLES_PER_RELATION {
            let s = r.random_range(0..WS_ENTITIES);
            triples.push(Triple::new(s, p, member(maps[p as usize][group(s) as usize], &mut r)));
        }
    }
    let pretrain = TripleStore::from_triples(entities.clone(), relations, triples).unwrap();

    let held_out = &maps[WS_PRETRAIN_RELATIONS as usize];
    let mut text = String::new();
    for _ in 0..WS_TASK_TRIPLES {
        let s = r.random_range(0..WS_ENTITIES);
        let o = member(held_out[group(s) as usize], &mut r);
        text.push_str(&format!("n{s}\theld_out\tn{o}\n"));
    }
    (pretrain, TripleStore::ingest_str(&text).unwrap())
}

fn ws_config(seed: u64, max_epochs: usize) -> TrainConfig {
    TrainConfig {
        model: ModelKind::ComplEx,
        embedding_size: 32,
        training_type: TrainingType::OneVsAll,
        reciprocal: true,
        max_epochs,
        batch_size: 128,
        learning_rate: 0.1,
        init: InitSpec::normal(0.1),
        valid_every: 1,
        seed,
        ..Default::default()
    }
}

/// Epoch at which scratch first reached its best valid MRR, that MRR, and the epoch at
/// which the warm-started run first reached it.
fn warm_start_trial(seed: u64) -> Result<(usize, f64, Option<usize>), String> {
    let (pretrain, task) = latent_group_graphs(seed);
    let empty = TripleStore::empty(pretrain.entities().clone(), pretrain.relations().clone());
    let pre_splits = SplitSet::from_stores(pretrain.clone(), empty.clone(), empty).map_err(|e| e.to_string())?;
    let pre_cfg = ws_config(seed, 20);
    let (params, _) = fit(&pre_splits, &pre_cfg).map_err(|e| e.to_string())?;
    let ck = Checkpoint::new(
        params,
        pretrain.entities().clone(),
        pretrain.relations().clone(),
        pre_cfg,
    )
    .map_err(|e| e.to_string())?;

    let (splits, _) = make_splits(&task, DEFAULT_RATIOS, seed).map_err(|e| e.to_string())?;
    let cfg = ws_config(seed + 100, 40);
    let scratch = downstream_lp(&splits, &cfg, None).map_err(|e| e.to_string())?;
    let warm = downstream_lp(&splits, &cfg, Some(&ck)).map_err(|e| e.to_string())?;
    let target = scratch
        .train
        .best_valid_mrr
        .ok_or("scratch run has no validation trace")?;
    let scratch_epochs = scratch
        .train
        .epochs_to_reach(target)
        .ok_or("scratch never reached its own best")?;
    Ok((scratch_epochs, target, warm.train.epochs_to_reach(target)))
}

fn warm_start_advantage() -> Outcome {
    use rayon::prelude::*;
    let start = Instant::now();
    let trials: Vec<_> = (0..10u64).into_par_iter().map(warm_start_trial).collect();
    let mut wins = 0;
    let mut rows = Vec::new();
    for (seed, trial) in trials.into_iter().enumerate() {
        let (scratch_epochs, target, warm_epochs) = trial?;
        wins += usize::from(warm_epochs.is_some_and(|w| w < scratch_epochs));
        rows.push(format!(
            "{seed}: {target:.3}@{scratch_epochs} vs {}",
            warm_epochs.map_or("never".to_owned(), |w| w.to_string())
        ));
    }
    within(start.elapsed(), 600.0, "warm-start experiment")?;
    check(
        wins >= 8,
        format!(
            "warm start reached scratch's best valid MRR sooner in {wins}/10 seeds (≥ 8); seed: scratch best@epoch vs warm epoch [{}]; {:.0}s",
            rows.join(", "),
            start.elapsed().as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------
// 9. Classification-metric oracle

fn binary_rows(scores: &[f64]) -> Vec<Vec<f64>> {
    scores.iter().map(|&s| vec![1.0 - s, s]).collect()
}

/// Scores of class 1, labels, macro AUROC, macro AUPRC and MAP.
type MetricFixture = (&'static [f64], &'static [usize], f64, f64, f64);

fn classification_oracle() -> Outcome {
    const EXACT: f64 = 1e-15;
    let mut notes = Vec::new();
    let mut ok = true;
    // worked out by hand
    let fixtures: [MetricFixture; 2] = [
        (&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1], 0.75, 5.0 / 6.0, 5.0 / 6.0),
        (&[0.5, 0.5, 0.2, 0.9], &[1, 0, 0, 1], 0.875, 5.0 / 6.0, 11.0 / 12.0),
    ];
    for (i, (scores, labels, auroc, auprc, map)) in fixtures.into_iter().enumerate() {
        let m = classification_metrics(&binary_rows(scores), labels).map_err(|e| e.to_string())?;
        let good = (m.auroc - auroc).abs() <= EXACT && (m.auprc - auprc).abs() <= EXACT && (m.map - map).abs() <= EXACT;
        ok &= good;
        notes.push(format!(
            "fixture {}: AUROC {} AUPRC {:.6} MAP {:.6}",
            i + 1,
            m.auroc,
            m.auprc,
            m.map
        ));
    }
    let mut r = rng(2024);
    let scores: Vec<f64> = (0..10_000).map(|_| r.random::<f64>()).collect();
    let labels: Vec<usize> = (0..10_000).map(|_| r.random_range(0..2)).collect();
    let m = classification_metrics(&binary_rows(&scores), &labels).map_err(|e| e.to_string())?;
    ok &= (m.auroc - 0.5).abs() <= 0.02;
    notes.push(format!("label-independent AUROC {:.4} (0.5 ± 0.02)", m.auroc));
    check(ok, notes.join("; "))
}

// ---------------------------------------------------------------------------
// 7. Data-dependent reproduction (manual)

const BIOKG_RELATIONS: usize = 17;
const DDI_MEAN: f64 = 624.86;
const TOTAL_MEAN: f64 = 39.19;

fn task_splits(root: &Path, task: &str) -> Result<SplitSet, String> {
    SplitSet::load_dir(&root.join("tasks").join(task)).map_err(|e| format!("{task}: {e}"))
}

fn data_reproduction(root: PathBuf) -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let kg_dir = root.join("biokg");
    let mut text = String::new();
    let mut files: Vec<PathBuf> = std::fs::read_dir(&kg_dir)
        .map_err(|e| format!("{}: {e}", kg_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "tsv"))
        .collect();
    files.sort();
    for f in &files {
        text.push_str(&std::fs::read_to_string(f).map_err(|e| e.to_string())?);
        if !text.ends_with('\n') {
            text.push('\n');
        }
    }
    let store = TripleStore::ingest_str(&text).map_err(|e| e.to_string())?;
    let stats = degree_stats(&store);
    let ddi = stats.per_relation.iter().find(|r| r.relation == "DDI").map(|r| r.mean);
    let total = stats.total.as_ref().map(|r| r.mean);
    let stats_ok = store.num_relations() == BIOKG_RELATIONS
        && ddi.is_some_and(|m| (m - DDI_MEAN).abs() <= 0.01)
        && total.is_some_and(|m| (m - TOTAL_MEAN).abs() <= 0.01);
    ok &= stats_ok;
    notes.push(format!(
        "{} triples, DDI mean {ddi:?}, Total mean {total:?}",
        store.len()
    ));

    for (task, preset) in [
        ("ddi_minerals", "complex-ddi-minerals"),
        ("ddi_efficacy", "complex-ddi-efficacy"),
    ] {
        let splits = task_splits(&root, task)?;
        let cfg = biokge_core::presets::load_preset(preset).map_err(|e| e.to_string())?;
        let result = downstream_lp(&splits, &cfg, None).map_err(|e| e.to_string())?;
        let h10 = result.eval.hits[&10];
        ok &= h10 >= 0.90;
        notes.push(format!("{task}: test HITS@10 {h10:.3} (≥ 0.90)"));
    }
    check(ok, notes.join("; "))
}

// ---------------------------------------------------------------------------

fn report(id: u32, name: &str, outcome: &Outcome) {
    match outcome {
        Ok(detail) => println!("PASS [{id}] {name}: {detail}"),
        Err(detail) => println!("FAIL [{id}] {name}: {detail}"),
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        for c in &CRITERIA {
            println!("{}: test", c.name);
        }
        return ExitCode::SUCCESS;
    }
    let with_ignored = args.iter().any(|a| a == "--ignored" || a == "--include-ignored");
    let selected: BTreeSet<u32> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let wanted = |id: u32| selected.is_empty() || selected.contains(&id);

    let mut results: BTreeMap<u32, bool> = BTreeMap::new();
    for c in CRITERIA.iter().filter(|c| wanted(c.id)) {
        let outcome = (c.run)();
        report(c.id, c.name, &outcome);
        results.insert(c.id, outcome.is_ok());
    }
    if wanted(7) {
        match (with_ignored, std::env::var_os("BIOKGE_DATA")) {
            (true, Some(root)) => {
                let outcome = data_reproduction(PathBuf::from(root));
                report(7, "data-dependent reproduction", &outcome);
                results.insert(7, outcome.is_ok());
            }
            (true, None) => {
                let outcome = Err("BIOKGE_DATA is not set".to_owned());
                report(7, "data-dependent reproduction", &outcome);
                results.insert(7, false);
            }
            (false, _) => {
                println!("SKIP [7] data-dependent reproduction: manual; pass --include-ignored with BIOKGE_DATA set")
            }
        }
    }
    if wanted(8) {
        println!("SKIP [8] full benchmark numbers: excluded from automated acceptance");
    }
    let failed: Vec<u32> = results.iter().filter(|(_, ok)| !**ok).map(|(id, _)| *id).collect();
    println!(
        "acceptance: {} passed, {} failed",
        results.len() - failed.len(),
        failed.len()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
