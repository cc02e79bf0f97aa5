//! Synthetic fixtures shared by the benchmarks.

use std::sync::Arc;

use biokge_core::kg::{Triple, TripleStore, Vocab};
use biokge_core::models::{init_params, InitFamily, InitSpec, ModelKind, ModelParams, ModelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniformly random store with `n_entities` entities, `n_relations` relations and up to
/// `n_triples` distinct triples.
pub fn random_store(n_entities: usize, n_relations: usize, n_triples: usize, seed: u64) -> TripleStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entities = Arc::new(Vocab::from_names((0..n_entities).map(|i| format!("e{i}"))));
    let relations = Arc::new(Vocab::from_names((0..n_relations).map(|i| format!("r{i}"))));
    let triples = (0..n_triples).map(|_| {
        Triple::new(
            rng.random_range(0..n_entities as u32),
            rng.random_range(0..n_relations as u32),
            rng.random_range(0..n_entities as u32),
        )
    });
    TripleStore::from_triples(entities, relations, triples.collect::<Vec<_>>()).expect("ids generated within range")
}

/// Normal-initialized parameters of `kind` with embedding size `dim`.
pub fn random_params(kind: ModelKind, dim: usize, n_entities: usize, n_relations: usize, seed: u64) -> ModelParams {
    let init = InitSpec {
        family: InitFamily::Normal,
        normal_std: 0.1,
        ..InitSpec::default()
    };
    init_params(&ModelSpec::new(kind, dim), n_entities, n_relations, &init, seed).expect("valid benchmark spec")
}
