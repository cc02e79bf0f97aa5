#![allow(dead_code)]

use std::sync::Arc;

use biokge_core::kg::{SplitSet, Triple, TripleStore, Vocab};
use biokge_core::models::{init_params, InitSpec, ModelKind, ModelParams, ModelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_params(kind: ModelKind, dim: usize, n_e: usize, n_r: usize, seed: u64) -> ModelParams {
    random_params_spec(ModelSpec::new(kind, dim), n_e, n_r, seed)
}

pub fn random_params_spec(spec: ModelSpec, n_e: usize, n_r: usize, seed: u64) -> ModelParams {
    let init = if spec.kind == ModelKind::ConvE {
        InitSpec::normal(0.5)
    } else {
        InitSpec::uniform(-1.0)
    };
    let mut p = init_params(&spec, n_e, n_r, &init, seed).unwrap();
    if spec.kind == ModelKind::RotatE {
        let mut r = rng(seed ^ 0x5eed);
        p.relations
            .mapv_inplace(|_| r.random_range(-std::f64::consts::PI..std::f64::consts::PI));
    }
    if let Some(conv) = p.conv.as_mut() {
        // larger weights keep ReLU inputs away from the kink
        conv.filter_bank.iter_mut().for_each(|w| *w *= 4.0);
        conv.projection.mapv_inplace(|w| w * 4.0);
    }
    p
}

/// Identifies one scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Slot {
    Entity(usize, usize),
    Relation(usize, usize),
    Normal(usize, usize),
    Filter(usize),
    Projection(usize, usize),
}

pub fn slot_mut(params: &mut ModelParams, slot: Slot) -> &mut f64 {
    match slot {
        Slot::Entity(r, c) => &mut params.entities[[r, c]],
        Slot::Relation(r, c) => &mut params.relations[[r, c]],
        Slot::Normal(r, c) => &mut params.normals.as_mut().unwrap()[[r, c]],
        Slot::Filter(i) => &mut params.conv.as_mut().unwrap().filter_bank[i],
        Slot::Projection(r, c) => &mut params.conv.as_mut().unwrap().projection[[r, c]],
    }
}

/// Central finite difference of `f` at `slot`.
pub fn central_difference(params: &ModelParams, slot: Slot, eps: f64, f: impl Fn(&ModelParams) -> f64) -> f64 {
    let mut plus = params.clone();
    *slot_mut(&mut plus, slot) += eps;
    let mut minus = params.clone();
    *slot_mut(&mut minus, slot) -= eps;
    (f(&plus) - f(&minus)) / (2.0 * eps)
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Random store with a shared vocabulary of `n_e` entities and `n_r` relations.
pub fn random_store(n_e: usize, n_r: usize, n_triples: usize, seed: u64) -> TripleStore {
    let mut r = rng(seed);
    let entities = Arc::new(Vocab::from_names((0..n_e).map(|i| format!("e{i}"))));
    let relations = Arc::new(Vocab::from_names((0..n_r).map(|i| format!("r{i}"))));
    let triples: Vec<Triple> = (0..n_triples)
        .map(|_| {
            Triple::new(
                r.random_range(0..n_e as u32),
                r.random_range(0..n_r as u32),
                r.random_range(0..n_e as u32),
            )
        })
        .collect();
    TripleStore::from_triples(entities, relations, triples).unwrap()
}

/// Random split of a random store; every split nonempty.
pub fn random_splits(n_e: usize, n_r: usize, n_triples: usize, seed: u64) -> SplitSet {
    let store = random_store(n_e, n_r, n_triples, seed);
    biokge_core::kg::make_splits(&store, [0.6, 0.2, 0.2], seed).unwrap().0
}

/// Store over `n_e` entities with relations `body`, `head`, `noise`: `n_body` distinct
/// random `body` pairs, each copied into `head` with probability `c`, plus noise.
pub fn planted_rule_store(c: f64, n_body: usize, n_e: usize, seed: u64) -> TripleStore {
    let mut r = rng(seed);
    let entities = Arc::new(Vocab::from_names((0..n_e).map(|i| format!("e{i}"))));
    let relations = Arc::new(Vocab::from_names(["body", "head", "noise"]));
    let mut pairs = std::collections::HashSet::new();
    let mut triples = Vec::new();
    while pairs.len() < n_body {
        let (x, y) = (r.random_range(0..n_e as u32), r.random_range(0..n_e as u32));
        if x != y && pairs.insert((x, y)) {
            triples.push(Triple::new(x, 0, y));
            if r.random_bool(c) {
                triples.push(Triple::new(x, 1, y));
            }
        }
    }
    for _ in 0..n_body / 5 {
        triples.push(Triple::new(
            r.random_range(0..n_e as u32),
            2,
            r.random_range(0..n_e as u32),
        ));
    }
    TripleStore::from_triples(entities, relations, triples).unwrap()
}
