use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::filter::{FilterIndex, LpQuery};
use super::rank::masked_rank;
use crate::error::{Error, Result};
use crate::kg::{SplitSet, Triple, TripleStore};
use crate::models::{score_all_objects, score_all_subjects, Direction, ModelParams};

pub const DEFAULT_KS: [usize; 3] = [1, 3, 10];

/// Filtered rank of one direction-query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankRecord {
    pub triple: Triple,
    pub direction: Direction,
    /// Mean rank under ties; fractional only when ties exist.
    pub rank: f64,
    /// Size of the permitted (filtered) candidate set.
    pub candidates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mrr: f64,
    pub hits: BTreeMap<usize, f64>,
    /// Number of direction-queries.
    pub queries: usize,
}

impl Metrics {
    fn from_ranks<'a>(ranks: impl Iterator<Item = &'a f64>, ks: &[usize]) -> Self {
        let mut n = 0usize;
        let mut rr = 0.0;
        let mut hits = vec![0usize; ks.len()];
        for &r in ranks {
            n += 1;
            rr += 1.0 / r;
            for (h, &k) in hits.iter_mut().zip(ks) {
                if r <= k as f64 {
                    *h += 1;
                }
            }
        }
        let denom = n.max(1) as f64;
        Metrics {
            mrr: rr / denom,
            hits: ks.iter().zip(hits).map(|(&k, h)| (k, h as f64 / denom)).collect(),
            queries: n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationMetrics {
    #[serde(flatten)]
    pub metrics: Metrics,
    /// Occurrences of the relation in the training split.
    pub train_frequency: usize,
}

/// Filtered link-prediction metrics over both directions of every test triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mrr: f64,
    pub hits: BTreeMap<usize, f64>,
    pub per_relation: BTreeMap<String, RelationMetrics>,
    pub per_direction: BTreeMap<Direction, Metrics>,
    pub n_test: usize,
    pub protocol: String,
}

pub const PROTOCOL: &str =
    "filtered over train+valid+test; mean-rank ties for MRR and HITS@k; both directions, single run";

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per relation: frequency against metric, for plotting.
    pub fn to_csv(&self) -> String {
        let ks: Vec<usize> = self.hits.keys().copied().collect();
        let mut out = String::from("relation,train_frequency,queries,mrr");
        for k in &ks {
            let _ = write!(out, ",hits@{k}");
        }
        out.push('\n');
        for (name, rel) in &self.per_relation {
            let _ = write!(
                out,
                "{},{},{},{}",
                csv_field(name),
                rel.train_frequency,
                rel.metrics.queries,
                rel.metrics.mrr
            );
            for k in &ks {
                let _ = write!(out, ",{}", rel.metrics.hits.get(k).copied().unwrap_or(0.0));
            }
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn check_vocab(params: &ModelParams, splits: &SplitSet, test: &TripleStore) -> Result<()> {
    if params.num_entities() != splits.num_entities() || test.num_entities() != splits.num_entities() {
        return Err(Error::Config(format!(
            "entity count mismatch: model {}, splits {}, test {}",
            params.num_entities(),
            splits.num_entities(),
            test.num_entities()
        )));
    }
    if params.base_relations != splits.num_relations() {
        return Err(Error::Config(format!(
            "relation count mismatch: model {}, splits {}",
            params.base_relations,
            splits.num_relations()
        )));
    }
    Ok(())
}

/// Tail then head record for each test triple, in test order. Head queries go through
/// the reciprocal relation when the model has one.
pub fn rank_records(params: &ModelParams, test: &TripleStore, filter: &FilterIndex) -> Result<Vec<RankRecord>> {
    let n = params.num_entities();
    let per_triple: Vec<[RankRecord; 2]> = test
        .triples()
        .par_iter()
        .map(|&t| {
            let mut out = [Direction::Tail, Direction::Head].map(|direction| RankRecord {
                triple: t,
                direction,
                rank: 0.0,
                candidates: 0,
            });
            for rec in &mut out {
                let (q, truth) = LpQuery::of(t, rec.direction);
                let scores = match rec.direction {
                    Direction::Tail => score_all_objects(params, t.s, t.p)?,
                    Direction::Head => score_all_subjects(params, t.p, t.o)?,
                };
                rec.rank = masked_rank(&scores, truth as usize, filter.excluded(q, truth))?;
                rec.candidates = n - filter.excluded(q, truth).count();
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per_triple.into_iter().flatten().collect())
}

/// Filtered MRR and HITS@k over `test`, filtering against every split and `test` itself.
///
/// An empty test store yields all-zero metrics with `n_test = 0`.
pub fn evaluate_lp(params: &ModelParams, test: &TripleStore, splits: &SplitSet, ks: &[usize]) -> Result<EvalReport> {
    check_vocab(params, splits, test)?;
    let filter = FilterIndex::from_splits_and(splits, test);
    let records = rank_records(params, test, &filter)?;
    Ok(summarize(&records, ks, splits, test.len()))
}

/// Aggregates records in their given order (sums are order-dependent in floating point).
pub fn summarize(records: &[RankRecord], ks: &[usize], splits: &SplitSet, n_test: usize) -> EvalReport {
    let all = Metrics::from_ranks(records.iter().map(|r| &r.rank), ks);
    let mut per_direction = BTreeMap::new();
    for dir in [Direction::Head, Direction::Tail] {
        let ranks = records.iter().filter(|r| r.direction == dir).map(|r| &r.rank);
        per_direction.insert(dir, Metrics::from_ranks(ranks, ks));
    }
    let relations = splits.relations();
    let mut by_rel: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for r in records {
        by_rel.entry(r.triple.p).or_default().push(r.rank);
    }
    let per_relation = by_rel
        .into_iter()
        .map(|(p, ranks)| {
            let rel = RelationMetrics {
                metrics: Metrics::from_ranks(ranks.iter(), ks),
                train_frequency: splits.train.relation_count(p),
            };
            (relations.name(p).to_owned(), rel)
        })
        .collect();
    EvalReport {
        mrr: all.mrr,
        hits: all.hits,
        per_relation,
        per_direction,
        n_test,
        protocol: PROTOCOL.to_owned(),
    }
}
