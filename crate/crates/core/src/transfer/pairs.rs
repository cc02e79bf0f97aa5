use std::collections::HashSet;
use std::io::Write;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kg::{split_sizes, TripleStore, Vocab};
use crate::{Error, Result};

/// Label of the sampled negative pairs.
pub const NO_INTERACTION: &str = "no_interaction";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairExample {
    pub a: u32,
    pub b: u32,
    pub label: usize,
}

/// Entity pairs labelled with a relation class or the "no interaction" class.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDataset {
    pub entities: Arc<Vocab>,
    /// Task relations in vocabulary order, then the negative class.
    pub classes: Vec<String>,
    pub negative_class: usize,
    pub train: Vec<PairExample>,
    pub valid: Vec<PairExample>,
    pub test: Vec<PairExample>,
}

impl PairDataset {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn all(&self) -> impl Iterator<Item = &PairExample> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }

    /// `entity_a⇥entity_b⇥class` lines.
    pub fn write_tsv<W: Write>(&self, examples: &[PairExample], mut out: W) -> Result<()> {
        for ex in examples {
            writeln!(
                out,
                "{}\t{}\t{}",
                self.entities.name(ex.a),
                self.entities.name(ex.b),
                self.classes[ex.label]
            )?;
        }
        Ok(())
    }
}

/// Turns every task triple into a positive example and adds `negative_ratio ×
/// positives` negatives, then splits 80/10/10.
///
/// A negative `(a, b)` draws `a` from the entities seen as subjects and `b` from those
/// seen as objects (so drug–protein tasks get drug–protein negatives), with `a ≠ b`, no
/// triple between them in either orientation, and no repeats.
pub fn build_pair_dataset(task: &TripleStore, negative_ratio: f64, seed: u64) -> Result<PairDataset> {
    if task.is_empty() {
        return Err(Error::Degenerate("task store is empty".into()));
    }
    if !(negative_ratio >= 0.0 && negative_ratio.is_finite()) {
        return Err(Error::Config(format!(
            "negative ratio must be non-negative, got {negative_ratio}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples: Vec<PairExample> = task
        .triples()
        .iter()
        .map(|t| PairExample {
            a: t.s,
            b: t.o,
            label: t.p as usize,
        })
        .collect();
    let linked: HashSet<(u32, u32)> = task.triples().iter().flat_map(|t| [(t.s, t.o), (t.o, t.s)]).collect();
    let pool = |subjects: bool| {
        let mut v: Vec<u32> = task
            .triples()
            .iter()
            .map(|t| if subjects { t.s } else { t.o })
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let (heads, tails) = (pool(true), pool(false));
    let wanted = (negative_ratio * examples.len() as f64).round() as usize;
    let negative_class = task.num_relations();
    let max_attempts = 100 * wanted + 1_000;
    let mut chosen = HashSet::new();
    let mut attempts = 0;
    while chosen.len() < wanted {
        if attempts == max_attempts {
            return Err(Error::SamplingExhausted {
                attempts,
                found: chosen.len(),
                wanted,
            });
        }
        attempts += 1;
        let a = heads[rng.random_range(0..heads.len())];
        let b = tails[rng.random_range(0..tails.len())];
        if a != b && !linked.contains(&(a, b)) && chosen.insert((a, b)) {
            examples.push(PairExample {
                a,
                b,
                label: negative_class,
            });
        }
    }
    examples.shuffle(&mut rng);
    let (_, n_valid, n_test) = split_sizes(examples.len(), [0.8, 0.1, 0.1]);
    let test = examples.split_off(examples.len() - n_test);
    let valid = examples.split_off(examples.len() - n_valid);
    let mut classes: Vec<String> = task.relations().names().to_vec();
    classes.push(NO_INTERACTION.to_owned());
    Ok(PairDataset {
        entities: task.entities().clone(),
        classes,
        negative_class,
        train: examples,
        valid,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::Triple;

    fn task() -> TripleStore {
        let e = Arc::new(Vocab::from_names((0..30).map(|i| format!("d{i}"))));
        let r = Arc::new(Vocab::from_names(["increase", "decrease"]));
        let ts = (0..20u32).map(|i| Triple::new(i, i % 2, (i * 7 + 3) % 30));
        TripleStore::from_triples(e, r, ts).unwrap()
    }

    #[test]
    fn ratio_one_balances_negatives() {
        let ds = build_pair_dataset(&task(), 1.0, 3).unwrap();
        let neg = ds.all().filter(|e| e.label == ds.negative_class).count();
        assert_eq!(neg, 20);
        assert_eq!(ds.all().count(), 40);
        assert_eq!(ds.classes, ["increase", "decrease", NO_INTERACTION]);
        assert_eq!((ds.train.len(), ds.valid.len(), ds.test.len()), (32, 4, 4));
    }

    #[test]
    fn negatives_are_absent_and_deterministic() {
        let t = task();
        let ds = build_pair_dataset(&t, 2.0, 5).unwrap();
        for ex in ds.all().filter(|e| e.label == ds.negative_class) {
            assert!(t
                .triples()
                .iter()
                .all(|x| (x.s, x.o) != (ex.a, ex.b) && (x.s, x.o) != (ex.b, ex.a)));
        }
        assert_eq!(ds, build_pair_dataset(&t, 2.0, 5).unwrap());
    }

    #[test]
    fn tiny_pools_exhaust_sampling() {
        let e = Arc::new(Vocab::from_names(["a", "b"]));
        let r = Arc::new(Vocab::from_names(["r"]));
        let t = TripleStore::from_triples(e, r, [Triple::new(0, 0, 1)]).unwrap();
        assert!(matches!(
            build_pair_dataset(&t, 1.0, 0),
            Err(Error::SamplingExhausted { .. })
        ));
    }
}
