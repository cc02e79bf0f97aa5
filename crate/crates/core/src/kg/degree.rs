use std::io::Write;

use serde::Serialize;

use super::store::TripleStore;
use crate::error::Result;

/// Node-degree summary for one relation (or all relations).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeRow {
    pub relation: String,
    pub nodes: usize,
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single node.
    pub std: f64,
    pub max: usize,
    pub min: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DegreeStats {
    pub total: Option<DegreeRow>,
    pub per_relation: Vec<DegreeRow>,
}

/// Undirected incidence degrees: every triple adds one to its subject and one to its object.
pub fn degree_stats(store: &TripleStore) -> DegreeStats {
    if store.is_empty() {
        return DegreeStats::default();
    }
    let n_e = store.num_entities();
    let mut total = vec![0usize; n_e];
    let mut per_rel: Vec<Vec<usize>> = vec![Vec::new(); store.num_relations()];
    for t in store.triples() {
        total[t.s as usize] += 1;
        total[t.o as usize] += 1;
        let counts = &mut per_rel[t.p as usize];
        if counts.is_empty() {
            counts.resize(n_e, 0);
        }
        counts[t.s as usize] += 1;
        counts[t.o as usize] += 1;
    }
    let per_relation = per_rel
        .iter()
        .enumerate()
        .filter_map(|(p, counts)| summarize(store.relations().name(p as u32), counts))
        .collect();
    DegreeStats {
        total: summarize("Total", &total),
        per_relation,
    }
}

fn summarize(name: &str, counts: &[usize]) -> Option<DegreeRow> {
    let mut degrees: Vec<usize> = counts.iter().copied().filter(|&c| c > 0).collect();
    if degrees.is_empty() {
        return None;
    }
    degrees.sort_unstable();
    let n = degrees.len();
    let mean = degrees.iter().sum::<usize>() as f64 / n as f64;
    let median = if n % 2 == 1 {
        degrees[n / 2] as f64
    } else {
        (degrees[n / 2 - 1] + degrees[n / 2]) as f64 / 2.0
    };
    let std = if n > 1 {
        let ss: f64 = degrees.iter().map(|&d| (d as f64 - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Some(DegreeRow {
        relation: name.to_owned(),
        nodes: n,
        mean,
        median,
        std,
        max: degrees[n - 1],
        min: degrees[0],
    })
}

impl DegreeStats {
    pub fn rows(&self) -> impl Iterator<Item = &DegreeRow> {
        self.total.iter().chain(&self.per_relation)
    }

    /// CSV with header `relation,mean,median,std,max,min`, "Total" first.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "relation,mean,median,std,max,min")?;
        for row in self.rows() {
            writeln!(
                out,
                "{},{:.2},{},{:.2},{},{}",
                csv_field(&row.relation),
                row.mean,
                row.median,
                row.std,
                row.max,
                row.min
            )?;
        }
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn single_triple() {
        let store = TripleStore::ingest_str("a\tr\tb\n").unwrap();
        let stats = degree_stats(&store);
        let total = stats.total.unwrap();
        assert_eq!((total.mean, total.max, total.min), (1.0, 1, 1));
        assert_eq!(stats.per_relation.len(), 1);
    }

    #[test]
    fn empty_store_empty_report() {
        let store = TripleStore::ingest_str("").unwrap();
        assert_eq!(degree_stats(&store), DegreeStats::default());
    }

    #[test]
    fn mean_matches_incidence_formula() {
        let store = TripleStore::ingest_str("a\tr\tb\na\tr\tc\nb\tq\tc\nc\tq\td\nd\tr\ta\ne\tq\te\n").unwrap();
        let stats = degree_stats(&store);
        for row in &stats.per_relation {
            let p = store.relations().id(&row.relation).unwrap();
            let triples: Vec<_> = store.with_relation(p).collect();
            let nodes: HashSet<u32> = triples.iter().flat_map(|t| [t.s, t.o]).collect();
            let expected = 2.0 * triples.len() as f64 / nodes.len() as f64;
            assert!((row.mean - expected).abs() < 1e-12);
            assert!(row.min >= 1 && row.mean >= row.min as f64 && row.mean <= row.max as f64);
        }
    }

    #[test]
    fn median_and_std() {
        // degrees: a=3, b=1, c=1, d=1
        let store = TripleStore::ingest_str("a\tr\tb\na\tr\tc\na\tr\td\n").unwrap();
        let row = degree_stats(&store).total.unwrap();
        assert_eq!(row.median, 1.0);
        assert!((row.mean - 1.5).abs() < 1e-12);
        assert!((row.std - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let store = TripleStore::ingest_str("a\tr\tb\n").unwrap();
        let mut buf = Vec::new();
        degree_stats(&store).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "relation,mean,median,std,max,min\nTotal,1.00,1,0.00,1,1\nr,1.00,1,0.00,1,1\n"
        );
    }
}
