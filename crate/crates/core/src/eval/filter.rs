use std::collections::HashMap;

use crate::kg::{SplitSet, Triple, TripleStore};
use crate::models::Direction;

/// One link-prediction query: `(anchor, p, ?)` for tails, `(?, p, anchor)` for heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LpQuery {
    pub anchor: u32,
    pub relation: u32,
    pub direction: Direction,
}

impl LpQuery {
    pub fn tail(s: u32, p: u32) -> Self {
        LpQuery {
            anchor: s,
            relation: p,
            direction: Direction::Tail,
        }
    }

    pub fn head(p: u32, o: u32) -> Self {
        LpQuery {
            anchor: o,
            relation: p,
            direction: Direction::Head,
        }
    }

    /// The query answered by `t` in direction `dir`, with the answer.
    pub fn of(t: Triple, dir: Direction) -> (Self, u32) {
        match dir {
            Direction::Tail => (Self::tail(t.s, t.p), t.o),
            Direction::Head => (Self::head(t.p, t.o), t.s),
        }
    }
}

/// Known answers of every query over a set of stores.
#[derive(Debug, Clone, Default)]
pub struct FilterIndex {
    tails: HashMap<(u32, u32), Vec<u32>>,
    heads: HashMap<(u32, u32), Vec<u32>>,
}

impl FilterIndex {
    pub fn from_triples<I: IntoIterator<Item = Triple>>(triples: I) -> Self {
        let mut idx = FilterIndex::default();
        for t in triples {
            idx.tails.entry((t.s, t.p)).or_default().push(t.o);
            idx.heads.entry((t.p, t.o)).or_default().push(t.s);
        }
        for v in idx.tails.values_mut().chain(idx.heads.values_mut()) {
            v.sort_unstable();
            v.dedup();
        }
        idx
    }

    pub fn from_splits(splits: &SplitSet) -> Self {
        Self::from_triples(splits.all_triples())
    }

    /// Splits plus any extra store (e.g. a test store not part of the split set).
    pub fn from_splits_and(splits: &SplitSet, extra: &TripleStore) -> Self {
        Self::from_triples(splits.all_triples().chain(extra.triples().iter().copied()))
    }

    /// Sorted known answers of `q`.
    pub fn known(&self, q: LpQuery) -> &[u32] {
        let found = match q.direction {
            Direction::Tail => self.tails.get(&(q.anchor, q.relation)),
            Direction::Head => self.heads.get(&(q.relation, q.anchor)),
        };
        found.map_or(&[], Vec::as_slice)
    }

    /// Known answers other than `truth`; these are masked out when ranking `truth`.
    pub fn excluded(&self, q: LpQuery, truth: u32) -> impl Iterator<Item = u32> + '_ {
        self.known(q).iter().copied().filter(move |&e| e != truth)
    }

    /// Entities ranked against `truth`: everything except other known answers.
    pub fn permitted(&self, q: LpQuery, truth: u32, n_entities: usize) -> Vec<u32> {
        let known = self.known(q);
        (0..n_entities as u32)
            .filter(|e| *e == truth || known.binary_search(e).is_err())
            .collect()
    }
}

/// Candidate entities for `q` evaluated at `truth` under the filtered setting.
pub fn filtered_candidates(q: LpQuery, truth: u32, splits: &SplitSet) -> Vec<u32> {
    FilterIndex::from_splits(splits).permitted(q, truth, splits.num_entities())
}
