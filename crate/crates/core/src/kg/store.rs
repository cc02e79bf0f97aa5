use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bidirectional mapping between external string identifiers and dense ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a vocabulary from names in order. Repeated names keep their first id.
    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab = Vocab::new();
        for name in names {
            vocab.get_or_insert(name.as_ref());
        }
        vocab
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get_or_insert(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub s: u32,
    pub p: u32,
    pub o: u32,
}

impl Triple {
    pub const fn new(s: u32, p: u32, o: u32) -> Self {
        Triple { s, p, o }
    }

    pub fn reversed(self) -> Self {
        Triple {
            s: self.o,
            p: self.p,
            o: self.s,
        }
    }
}

/// Indexed, deduplicated set of identifier triples over shared vocabularies.
///
/// Immutable after construction; clones share the vocabularies.
#[derive(Debug, Clone)]
pub struct TripleStore {
    entities: Arc<Vocab>,
    relations: Arc<Vocab>,
    triples: Vec<Triple>,
    set: HashSet<Triple>,
    by_sp: HashMap<(u32, u32), Vec<u32>>,
    by_po: HashMap<(u32, u32), Vec<u32>>,
    by_p: Vec<Vec<usize>>,
    by_entity: Vec<Vec<usize>>,
    base_relations: Option<usize>,
}

impl TripleStore {
    /// Builds a store from id triples, dropping duplicates while keeping first-seen order.
    pub fn from_triples<I>(entities: Arc<Vocab>, relations: Arc<Vocab>, triples: I) -> Result<Self>
    where
        I: IntoIterator<Item = Triple>,
    {
        let (n_e, n_r) = (entities.len(), relations.len());
        let mut set = HashSet::new();
        let mut ordered = Vec::new();
        for t in triples {
            if t.s as usize >= n_e || t.o as usize >= n_e {
                return Err(Error::Lookup(format!(
                    "entity id out of range in ({}, {}, {}); {} entities",
                    t.s, t.p, t.o, n_e
                )));
            }
            if t.p as usize >= n_r {
                return Err(Error::Lookup(format!(
                    "relation id {} out of range; {} relations",
                    t.p, n_r
                )));
            }
            if set.insert(t) {
                ordered.push(t);
            }
        }
        let mut by_sp: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
        let mut by_po: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
        let mut by_p = vec![Vec::new(); n_r];
        let mut by_entity = vec![Vec::new(); n_e];
        for (i, t) in ordered.iter().enumerate() {
            by_sp.entry((t.s, t.p)).or_default().push(t.o);
            by_po.entry((t.p, t.o)).or_default().push(t.s);
            by_p[t.p as usize].push(i);
            by_entity[t.s as usize].push(i);
            if t.o != t.s {
                by_entity[t.o as usize].push(i);
            }
        }
        Ok(TripleStore {
            entities,
            relations,
            triples: ordered,
            set,
            by_sp,
            by_po,
            by_p,
            by_entity,
            base_relations: None,
        })
    }

    pub fn empty(entities: Arc<Vocab>, relations: Arc<Vocab>) -> Self {
        Self::from_triples(entities, relations, std::iter::empty()).expect("empty store is valid")
    }

    /// Reads tab-separated `subject, relation, object` lines, assigning ids in first-seen order.
    pub fn ingest<R: BufRead>(reader: R) -> Result<Self> {
        let rows = parse_tsv(reader)?;
        let mut entities = Vocab::new();
        let mut relations = Vocab::new();
        let ids: Vec<Triple> = rows
            .iter()
            .map(|[s, p, o]| {
                let s = entities.get_or_insert(s);
                let p = relations.get_or_insert(p);
                let o = entities.get_or_insert(o);
                Triple::new(s, p, o)
            })
            .collect();
        Self::from_triples(Arc::new(entities), Arc::new(relations), ids)
    }

    pub fn ingest_str(text: &str) -> Result<Self> {
        Self::ingest(text.as_bytes())
    }

    /// Reads triples against fixed vocabularies; unknown identifiers are lookup errors.
    pub fn ingest_with_vocab<R: BufRead>(reader: R, entities: Arc<Vocab>, relations: Arc<Vocab>) -> Result<Self> {
        let mut ids = Vec::new();
        for (line, [s, p, o]) in parse_tsv_numbered(reader)? {
            let lookup = |v: &Vocab, name: &str, what: &str| {
                v.id(name)
                    .ok_or_else(|| Error::Lookup(format!("line {line}: unknown {what} '{name}'")))
            };
            ids.push(Triple::new(
                lookup(&entities, &s, "entity")?,
                lookup(&relations, &p, "relation")?,
                lookup(&entities, &o, "entity")?,
            ));
        }
        Self::from_triples(entities, relations, ids)
    }

    /// Writes the store as tab-separated lines using vocabulary names.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        for t in &self.triples {
            writeln!(
                out,
                "{}\t{}\t{}",
                self.entities.name(t.s),
                self.relations.name(t.p),
                self.entities.name(t.o)
            )?;
        }
        Ok(())
    }

    pub fn to_tsv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_tsv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("vocabulary names are UTF-8")
    }

    /// A store over the same vocabularies holding `triples`.
    pub fn with_triples<I: IntoIterator<Item = Triple>>(&self, triples: I) -> Result<Self> {
        Self::from_triples(self.entities.clone(), self.relations.clone(), triples)
    }

    pub fn entities(&self) -> &Arc<Vocab> {
        &self.entities
    }

    pub fn relations(&self) -> &Arc<Vocab> {
        &self.relations
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.set.contains(t)
    }

    /// Objects `o` with `(s, p, o)` in the store.
    pub fn objects(&self, s: u32, p: u32) -> &[u32] {
        self.by_sp.get(&(s, p)).map_or(&[], Vec::as_slice)
    }

    /// Subjects `s` with `(s, p, o)` in the store.
    pub fn subjects(&self, p: u32, o: u32) -> &[u32] {
        self.by_po.get(&(p, o)).map_or(&[], Vec::as_slice)
    }

    pub fn with_relation(&self, p: u32) -> impl Iterator<Item = Triple> + '_ {
        self.by_p
            .get(p as usize)
            .into_iter()
            .flatten()
            .map(move |&i| self.triples[i])
    }

    pub fn relation_count(&self, p: u32) -> usize {
        self.by_p.get(p as usize).map_or(0, Vec::len)
    }

    /// Indices of triples touching entity `e` as subject or object.
    pub fn incident(&self, e: u32) -> &[usize] {
        self.by_entity.get(e as usize).map_or(&[], Vec::as_slice)
    }

    /// Number of original relations when reciprocal relations were appended.
    pub fn base_relations(&self) -> Option<usize> {
        self.base_relations
    }

    /// Adds the reverse of every triple whose relation is listed.
    pub fn augment_symmetric<S: AsRef<str>>(&self, symmetric: &[S]) -> Result<Self> {
        let mut listed = vec![false; self.num_relations()];
        for name in symmetric {
            let name = name.as_ref();
            let p = self
                .relations
                .id(name)
                .ok_or_else(|| Error::Config(format!("unknown symmetric relation '{name}'")))?;
            listed[p as usize] = true;
        }
        let extra = self
            .triples
            .iter()
            .filter(|t| listed[t.p as usize])
            .map(|t| t.reversed());
        let mut out = self.with_triples(self.triples.iter().copied().chain(extra))?;
        out.base_relations = self.base_relations;
        Ok(out)
    }

    /// Appends `(o, p_inv, s)` for every triple, with `p_inv = p + |relations|`.
    pub fn add_reciprocals(&self) -> Result<Self> {
        if self.base_relations.is_some() {
            return Err(Error::Config("store already contains reciprocal relations".into()));
        }
        let n_r = self.num_relations() as u32;
        let mut relations = (*self.relations).clone();
        for p in 0..n_r {
            let name = format!("{}{}", self.relations.name(p), RECIPROCAL_SUFFIX);
            let id = relations.get_or_insert(&name);
            if id != p + n_r {
                return Err(Error::Config(format!(
                    "reciprocal relation name '{name}' collides with an existing relation"
                )));
            }
        }
        let inverse = self.triples.iter().map(|t| Triple::new(t.o, t.p + n_r, t.s));
        let mut out = Self::from_triples(
            self.entities.clone(),
            Arc::new(relations),
            self.triples.iter().copied().chain(inverse),
        )?;
        out.base_relations = Some(n_r as usize);
        Ok(out)
    }
}

pub const RECIPROCAL_SUFFIX: &str = "_reciprocal";

pub(crate) fn parse_tsv_numbered<R: BufRead>(reader: R) -> Result<Vec<(usize, [String; 3])>> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        if fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                line: line_no,
                message: "empty field".into(),
            });
        }
        rows.push((
            line_no,
            [fields[0].to_owned(), fields[1].to_owned(), fields[2].to_owned()],
        ));
    }
    Ok(rows)
}

/// Parses tab-separated triples into raw string rows.
pub fn parse_tsv<R: BufRead>(reader: R) -> Result<Vec<[String; 3]>> {
    Ok(parse_tsv_numbered(reader)?.into_iter().map(|(_, row)| row).collect())
}
