use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{Triple, TripleStore};
use crate::models::ModelParams;

/// Negative log-softmax of `scores` at `truth`.
pub fn ce_loss(scores: &[f64], truth: usize) -> Result<f64> {
    Ok(ce_with_grad(scores, truth)?.0)
}

/// CE loss and its gradient w.r.t. the scores (`softmax − one_hot`).
pub fn ce_with_grad(scores: &[f64], truth: usize) -> Result<(f64, Vec<f64>)> {
    if scores.is_empty() || truth >= scores.len() {
        return Err(Error::Lookup(format!(
            "true index {truth} outside {} scores",
            scores.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|x| !x.is_finite()) {
        return Err(Error::Numeric(format!("non-finite score {bad}")));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut grad: Vec<f64> = scores.iter().map(|&x| (x - max).exp()).collect();
    let z: f64 = grad.iter().sum();
    let loss = z.ln() - (scores[truth] - max);
    grad.iter_mut().for_each(|g| *g /= z);
    grad[truth] -= 1.0;
    Ok((loss, grad))
}

/// `k_s` subject-corrupted then `k_o` object-corrupted copies of `t`.
///
/// The replacement is uniform over the other `n_entities − 1` entities; corruptions are
/// not filtered against known positives.
pub fn sample_negatives<R: Rng + ?Sized>(
    t: Triple,
    k_s: usize,
    k_o: usize,
    n_entities: usize,
    rng: &mut R,
) -> Result<Vec<Triple>> {
    if n_entities < 2 {
        return Err(Error::Degenerate(format!(
            "negative sampling needs at least 2 entities, got {n_entities}"
        )));
    }
    let mut out = Vec::with_capacity(k_s + k_o);
    for _ in 0..k_s {
        out.push(Triple::new(other_entity(t.s, n_entities, rng), t.p, t.o));
    }
    for _ in 0..k_o {
        out.push(Triple::new(t.s, t.p, other_entity(t.o, n_entities, rng)));
    }
    Ok(out)
}

fn other_entity<R: Rng + ?Sized>(e: u32, n: usize, rng: &mut R) -> u32 {
    let x = rng.random_range(0..n as u32 - 1);
    if x >= e {
        x + 1
    } else {
        x
    }
}

/// Inverted dropout. Non-positive rates are a no-op.
pub fn apply_dropout<R: Rng + ?Sized>(v: &[f64], rate: f64, rng: &mut R) -> Vec<f64> {
    match dropout_mask(v.len(), rate, rng) {
        Some(mask) => v.iter().zip(&mask).map(|(x, m)| x * m).collect(),
        None => v.to_vec(),
    }
}

/// Per-coordinate multipliers (0 or `1/(1−rate)`), or `None` when dropout is off.
pub(crate) fn dropout_mask<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Option<Vec<f64>> {
    if !(rate > 0.0) {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    Some(
        (0..len)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegKind {
    None,
    L1,
    F2,
    N3,
}

impl RegKind {
    pub fn name(self) -> &'static str {
        match self {
            RegKind::None => "none",
            RegKind::L1 => "l1",
            RegKind::F2 => "f2",
            RegKind::N3 => "n3",
        }
    }

    fn value(self, x: f64) -> f64 {
        match self {
            RegKind::None => 0.0,
            RegKind::L1 => x.abs(),
            RegKind::F2 => x * x,
            RegKind::N3 => x.abs().powi(3),
        }
    }

    fn derivative(self, x: f64) -> f64 {
        match self {
            RegKind::None => 0.0,
            RegKind::L1 => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            RegKind::F2 => 2.0 * x,
            RegKind::N3 => 3.0 * x * x.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegSpec {
    pub kind: RegKind,
    pub entity_weight: f64,
    pub relation_weight: f64,
    pub frequency_weighting: bool,
}

impl RegSpec {
    pub fn none() -> Self {
        RegSpec {
            kind: RegKind::None,
            entity_weight: 1e-10,
            relation_weight: 1e-10,
            frequency_weighting: false,
        }
    }
}

/// Training-set occurrence counts backing frequency-weighted regularization.
#[derive(Debug, Clone, PartialEq)]
pub struct Frequencies {
    /// Occurrences as subject or object.
    pub entities: Vec<usize>,
    /// Occurrences per base relation.
    pub relations: Vec<usize>,
}

impl Frequencies {
    pub fn from_store(store: &TripleStore) -> Self {
        let mut entities = vec![0; store.num_entities()];
        let mut relations = vec![0; store.num_relations()];
        for t in store.triples() {
            entities[t.s as usize] += 1;
            entities[t.o as usize] += 1;
            relations[t.p as usize] += 1;
        }
        Frequencies { entities, relations }
    }
}

/// Embedding rows touched by a batch, each with its weight factor.
pub(crate) struct Touched {
    pub entities: Vec<(u32, f64)>,
    pub relations: Vec<(u32, f64)>,
}

/// Entities are the batch's subjects and objects; relations are `p`, plus `p_inv` for
/// reciprocal models. Without frequency weighting each touched row has factor 1;
/// with it, batch count over training frequency (a missing table falls back to 1).
pub(crate) fn touched_rows(
    params: &ModelParams,
    reg: &RegSpec,
    batch: &[Triple],
    freqs: Option<&Frequencies>,
) -> Touched {
    use std::collections::BTreeMap;
    let mut ent: BTreeMap<u32, usize> = BTreeMap::new();
    let mut rel: BTreeMap<u32, usize> = BTreeMap::new();
    for t in batch {
        *ent.entry(t.s).or_default() += 1;
        *ent.entry(t.o).or_default() += 1;
        *rel.entry(t.p).or_default() += 1;
        if let Some(inv) = params.inverse_relation(t.p) {
            *rel.entry(inv).or_default() += 1;
        }
    }
    let base = params.base_relations as u32;
    let factor = |count: usize, total: Option<usize>| -> f64 {
        match (reg.frequency_weighting, total) {
            (true, Some(f)) if f > 0 => count as f64 / f as f64,
            _ => 1.0,
        }
    };
    Touched {
        entities: ent
            .into_iter()
            .map(|(e, c)| (e, factor(c, freqs.and_then(|f| f.entities.get(e as usize).copied()))))
            .collect(),
        relations: rel
            .into_iter()
            .map(|(p, c)| {
                let total = freqs.and_then(|f| f.relations.get((p % base) as usize).copied());
                (p, factor(c, total))
            })
            .collect(),
    }
}

/// Lp penalty over the embedding rows touched by `batch`.
///
/// L1 = Σ|x|, F2 = Σx², N3 = Σ|x|³ per row, scaled by the entity or relation weight and,
/// with frequency weighting, by the row's batch count over its training frequency.
pub fn reg_penalty(params: &ModelParams, reg: &RegSpec, batch: &[Triple], freqs: Option<&Frequencies>) -> f64 {
    if reg.kind == RegKind::None {
        return 0.0;
    }
    let touched = touched_rows(params, reg, batch, freqs);
    let row_sum = |row: &[f64]| row.iter().map(|&x| reg.kind.value(x)).sum::<f64>();
    let ent: f64 = touched
        .entities
        .iter()
        .map(|&(e, f)| f * row_sum(params.entity(e)))
        .sum();
    let rel: f64 = touched
        .relations
        .iter()
        .map(|&(p, f)| f * row_sum(params.relation(p)))
        .sum();
    reg.entity_weight * ent + reg.relation_weight * rel
}

/// Gradient of [`reg_penalty`] for one row, accumulated into `out`.
pub(crate) fn reg_row_grad(kind: RegKind, scale: f64, row: &[f64], out: &mut [f64]) {
    for (g, &x) in out.iter_mut().zip(row) {
        *g += scale * kind.derivative(x);
    }
}
