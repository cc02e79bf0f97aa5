use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::store::{parse_tsv, Triple, TripleStore, Vocab};
use crate::error::{Error, Result};

pub const DEFAULT_RATIOS: [f64; 3] = [0.8, 0.1, 0.1];

/// Train/valid/test partition over one vocabulary.
#[derive(Debug, Clone)]
pub struct SplitSet {
    pub train: TripleStore,
    pub valid: TripleStore,
    pub test: TripleStore,
    pub ratios: [f64; 3],
}

/// Triple indices (into the source store) assigned to each split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratios: [f64; 3],
    pub source_triples: usize,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// Target valid/test sizes: floor of ratio times total. The remainder goes to train.
pub fn split_sizes(total: usize, ratios: [f64; 3]) -> (usize, usize, usize) {
    let floor = |r: f64| ((r * total as f64) + 1e-9).floor() as usize;
    let valid = floor(ratios[1]);
    let test = floor(ratios[2]);
    (total - valid - test, valid, test)
}

fn check_ratios(ratios: [f64; 3]) -> Result<()> {
    if ratios.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Config(format!("split ratios must be positive, got {ratios:?}")));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios must sum to 1, got {sum}")));
    }
    Ok(())
}

/// Shuffles the store into three disjoint splits.
///
/// A triple and its reverse `(o, p, s)` always land in the same split. Units are
/// placed greedily in shuffled order into valid, then test, as long as they fit the
/// floor-rounded targets; everything else is train.
pub fn make_splits(store: &TripleStore, ratios: [f64; 3], seed: u64) -> Result<(SplitSet, SplitManifest)> {
    check_ratios(ratios)?;
    if store.is_empty() {
        return Err(Error::Degenerate("cannot split an empty store".into()));
    }
    let triples = store.triples();
    let position: HashMap<Triple, usize> = triples.iter().enumerate().map(|(i, t)| (*t, i)).collect();
    let mut taken = vec![false; triples.len()];
    let mut units: Vec<Vec<usize>> = Vec::with_capacity(triples.len());
    for (i, t) in triples.iter().enumerate() {
        if taken[i] {
            continue;
        }
        taken[i] = true;
        let mut unit = vec![i];
        if t.s != t.o {
            if let Some(&j) = position.get(&t.reversed()) {
                if !taken[j] {
                    taken[j] = true;
                    unit.push(j);
                }
            }
        }
        units.push(unit);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    units.shuffle(&mut rng);

    let (_, n_valid, n_test) = split_sizes(triples.len(), ratios);
    let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for unit in units {
        if valid.len() + unit.len() <= n_valid {
            valid.extend(unit);
        } else if test.len() + unit.len() <= n_test {
            test.extend(unit);
        } else {
            train.extend(unit);
        }
    }
    train.sort_unstable();
    valid.sort_unstable();
    test.sort_unstable();

    let pick = |idx: &[usize]| store.with_triples(idx.iter().map(|&i| triples[i]));
    let set = SplitSet {
        train: pick(&train)?,
        valid: pick(&valid)?,
        test: pick(&test)?,
        ratios,
    };
    let manifest = SplitManifest {
        seed,
        ratios,
        source_triples: triples.len(),
        train,
        valid,
        test,
    };
    Ok((set, manifest))
}

impl SplitSet {
    /// Wraps three stores that already share vocabularies.
    pub fn from_stores(train: TripleStore, valid: TripleStore, test: TripleStore) -> Result<Self> {
        let same = |a: &Arc<Vocab>, b: &Arc<Vocab>| Arc::ptr_eq(a, b) || a == b;
        if !same(train.entities(), valid.entities()) || !same(train.entities(), test.entities()) {
            return Err(Error::Config("splits must share one entity vocabulary".into()));
        }
        if !same(train.relations(), valid.relations()) || !same(train.relations(), test.relations()) {
            return Err(Error::Config("splits must share one relation vocabulary".into()));
        }
        let total = (train.len() + valid.len() + test.len()).max(1) as f64;
        let ratios = [
            train.len() as f64 / total,
            valid.len() as f64 / total,
            test.len() as f64 / total,
        ];
        Ok(SplitSet {
            train,
            valid,
            test,
            ratios,
        })
    }

    pub fn entities(&self) -> &Arc<Vocab> {
        self.train.entities()
    }

    pub fn relations(&self) -> &Arc<Vocab> {
        self.train.relations()
    }

    pub fn num_entities(&self) -> usize {
        self.train.num_entities()
    }

    pub fn num_relations(&self) -> usize {
        self.train.num_relations()
    }

    /// All triples across the three splits.
    pub fn all_triples(&self) -> impl Iterator<Item = Triple> + '_ {
        self.train
            .triples()
            .iter()
            .chain(self.valid.triples())
            .chain(self.test.triples())
            .copied()
    }

    /// Loads `train.tsv`, `valid.tsv`, `test.tsv` from a directory with a shared
    /// first-seen vocabulary (train, then valid, then test).
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut rows = Vec::new();
        for name in ["train.tsv", "valid.tsv", "test.tsv"] {
            let file = File::open(dir.join(name))
                .map_err(|e| Error::Config(format!("cannot open {}: {e}", dir.join(name).display())))?;
            rows.push(parse_tsv(BufReader::new(file))?);
        }
        let mut entities = Vocab::new();
        let mut relations = Vocab::new();
        let ids: Vec<Vec<Triple>> = rows
            .iter()
            .map(|split| {
                split
                    .iter()
                    .map(|[s, p, o]| {
                        let s = entities.get_or_insert(s);
                        let p = relations.get_or_insert(p);
                        let o = entities.get_or_insert(o);
                        Triple::new(s, p, o)
                    })
                    .collect()
            })
            .collect();
        let (e, r) = (Arc::new(entities), Arc::new(relations));
        let mut stores = ids
            .into_iter()
            .map(|t| TripleStore::from_triples(e.clone(), r.clone(), t));
        let train = stores.next().unwrap()?;
        let valid = stores.next().unwrap()?;
        let test = stores.next().unwrap()?;
        Self::from_stores(train, valid, test)
    }

    /// Loads a split directory against fixed vocabularies (e.g. a checkpoint's).
    pub fn load_dir_with_vocab(dir: &Path, entities: Arc<Vocab>, relations: Arc<Vocab>) -> Result<Self> {
        let load = |name: &str| -> Result<TripleStore> {
            let file = File::open(dir.join(name))
                .map_err(|e| Error::Config(format!("cannot open {}: {e}", dir.join(name).display())))?;
            TripleStore::ingest_with_vocab(BufReader::new(file), entities.clone(), relations.clone())
        };
        Self::from_stores(load("train.tsv")?, load("valid.tsv")?, load("test.tsv")?)
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, store) in [
            ("train.tsv", &self.train),
            ("valid.tsv", &self.valid),
            ("test.tsv", &self.test),
        ] {
            store.write_tsv(BufWriter::new(File::create(dir.join(name))?))?;
        }
        Ok(())
    }
}
