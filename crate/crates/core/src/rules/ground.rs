use rand::Rng;

use super::rule::{End, Rule, Step};
use crate::kg::{Triple, TripleStore};
use crate::{Error, Result};

/// A head triple plus a walk of adjacent triples from one of its entities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundPath {
    pub head: Triple,
    /// The walk starts at the head subject (otherwise at the head object).
    pub anchor_subject: bool,
    pub body: Vec<Triple>,
    /// Entities visited by the walk; `nodes[0]` is the anchor, `nodes[i + 1]` follows `body[i]`.
    pub nodes: Vec<u32>,
}

impl GroundPath {
    /// Number of triples, head included.
    pub fn len(&self) -> usize {
        1 + self.body.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn triples(&self) -> impl Iterator<Item = Triple> + '_ {
        std::iter::once(self.head).chain(self.body.iter().copied())
    }

    fn steps(&self) -> Vec<Step> {
        self.body
            .iter()
            .zip(&self.nodes)
            .map(|(t, &from)| Step {
                relation: t.p,
                forward: t.s == from,
            })
            .collect()
    }
}

/// Samples a uniform head triple and walks up to `max_len` uniformly chosen incident
/// triples (never reusing a triple) from a uniformly chosen end of it.
///
/// The walk length is drawn uniformly from `0..=max_len`; a walk stuck at an entity
/// with no unused triples stops early.
pub fn sample_ground_path<R: Rng + ?Sized>(store: &TripleStore, max_len: usize, rng: &mut R) -> Result<GroundPath> {
    if store.is_empty() {
        return Err(Error::Degenerate("cannot sample a path from an empty store".into()));
    }
    let triples = store.triples();
    let head_idx = rng.random_range(0..triples.len());
    let head = triples[head_idx];
    let anchor_subject = rng.random_bool(0.5);
    let target = rng.random_range(0..=max_len);
    let mut used = vec![head_idx];
    let mut nodes = vec![if anchor_subject { head.s } else { head.o }];
    let mut body = Vec::with_capacity(target);
    while body.len() < target {
        let cur = *nodes.last().expect("walk has a start");
        let Some(idx) = pick_unused(store.incident(cur), &used, rng) else {
            break;
        };
        let t = triples[idx];
        used.push(idx);
        body.push(t);
        nodes.push(if t.s == cur { t.o } else { t.s });
    }
    Ok(GroundPath {
        head,
        anchor_subject,
        body,
        nodes,
    })
}

fn pick_unused<R: Rng + ?Sized>(incident: &[usize], used: &[usize], rng: &mut R) -> Option<usize> {
    if incident.len() > 4 * used.len() {
        // rejection is cheap when the used triples are a small fraction
        loop {
            let i = incident[rng.random_range(0..incident.len())];
            if !used.contains(&i) {
                return Some(i);
            }
        }
    }
    let free: Vec<usize> = incident.iter().copied().filter(|i| !used.contains(i)).collect();
    (!free.is_empty()).then(|| free[rng.random_range(0..free.len())])
}

/// Candidate rules whose body generalizes the path's walk and whose head generalizes
/// its head triple.
///
/// A bare head triple yields the two zero-body rules `h(X,o)` and `h(s,Y)`. A walk
/// yields the constant-end and dangling-end rules that keep the far head entity as a
/// constant, plus the cyclic rule when the walk ends at the far head entity.
pub fn generalize(path: &GroundPath) -> Vec<Rule> {
    let h = path.head;
    let built = |anchor_subject, c, steps: &[Step], end| {
        Rule::build(h.p, anchor_subject, c, steps, end).expect("walks stay within the length limit")
    };
    let mut out = Vec::new();
    if path.body.is_empty() {
        out.push(built(true, Some(h.o), &[], End::Free));
        out.push(built(false, Some(h.s), &[], End::Free));
        return out;
    }
    let steps = path.steps();
    let far = if path.anchor_subject { h.o } else { h.s };
    let last = *path.nodes.last().expect("walk has nodes");
    if last == far {
        let cyclic: Vec<Step> = if path.anchor_subject {
            steps.clone()
        } else {
            steps
                .iter()
                .rev()
                .map(|s| Step {
                    relation: s.relation,
                    forward: !s.forward,
                })
                .collect()
        };
        out.push(built(true, None, &cyclic, End::Head));
    }
    out.push(built(path.anchor_subject, Some(far), &steps, End::Const(last)));
    out.push(built(path.anchor_subject, Some(far), &steps, End::Free));
    let mut seen = std::collections::HashSet::new();
    out.retain(|r| seen.insert(r.clone()));
    out
}
