//! Immutable triple store with forward and inverse adjacency indexes.
//!
//! Entities and relations are interned to dense ids in first-appearance
//! order, so loading the same file twice yields the same id assignment.
//! Inverse roles are not materialized as separate relation ids; they are a
//! direction flag on [`KnowledgeGraph::query_edges`].

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KgError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {0}: expected head<TAB>relation<TAB>tail")]
    Format(usize),
    #[error("unknown id {0}")]
    UnknownId(String),
}

/// Dense entity index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(pub u32);

/// Dense relation index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// Bijective name <-> dense id table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Interner {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out = Self::new();
        for n in names {
            out.intern(&n.into());
        }
        out
    }

    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Accumulates named triples before indexing.
#[derive(Debug, Default)]
pub struct KgBuilder {
    entities: Interner,
    relations: Interner,
    triples: Vec<(EntityId, RelationId, EntityId)>,
}

impl KgBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts from an existing vocabulary so that ids line up with another
    /// graph (e.g. a training graph indexed with the full graph's ids).
    pub fn with_vocab(entities: Interner, relations: Interner) -> Self {
        Self {
            entities,
            relations,
            triples: Vec::new(),
        }
    }

    /// Registers an entity that may have no triples.
    pub fn add_entity(&mut self, name: &str) -> EntityId {
        EntityId(self.entities.intern(name))
    }

    pub fn add_relation(&mut self, name: &str) -> RelationId {
        RelationId(self.relations.intern(name))
    }

    pub fn add(&mut self, head: &str, relation: &str, tail: &str) -> &mut Self {
        let h = EntityId(self.entities.intern(head));
        let r = RelationId(self.relations.intern(relation));
        let t = EntityId(self.entities.intern(tail));
        self.triples.push((h, r, t));
        self
    }

    pub fn build(self) -> KnowledgeGraph {
        let KgBuilder {
            entities,
            relations,
            mut triples,
        } = self;
        triples.sort_unstable();
        triples.dedup();

        let mut fwd: HashMap<(EntityId, RelationId), Vec<EntityId>> = HashMap::new();
        let mut inv: HashMap<(EntityId, RelationId), Vec<EntityId>> = HashMap::new();
        let mut pairs = vec![Vec::new(); relations.len()];
        for &(h, r, t) in &triples {
            fwd.entry((h, r)).or_default().push(t);
            inv.entry((t, r)).or_default().push(h);
            pairs[r.index()].push((h, t));
        }
        // Triples were sorted by (h, r, t) so forward lists are already
        // sorted; inverse lists need it.
        for list in inv.values_mut() {
            list.sort_unstable();
        }
        KnowledgeGraph {
            entities,
            relations,
            triples,
            fwd,
            inv,
            pairs,
        }
    }
}

/// Immutable, indexed knowledge graph; the interpretation domain of queries.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entities: Interner,
    relations: Interner,
    triples: Vec<(EntityId, RelationId, EntityId)>,
    fwd: HashMap<(EntityId, RelationId), Vec<EntityId>>,
    inv: HashMap<(EntityId, RelationId), Vec<EntityId>>,
    pairs: Vec<Vec<(EntityId, EntityId)>>,
}

impl KnowledgeGraph {
    pub fn from_triples<'a, I>(triples: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str, &'a str)>,
    {
        let mut b = KgBuilder::new();
        for (h, r, t) in triples {
            b.add(h, r, t);
        }
        b.build()
    }

    /// Loads a tab-separated triple file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, KgError> {
        let file = std::fs::File::open(path)?;
        Self::read(BufReader::new(file), KgBuilder::new())
    }

    /// Loads a triple file, interning names on top of an existing vocabulary.
    pub fn load_with_vocab(
        path: impl AsRef<Path>,
        entities: Interner,
        relations: Interner,
    ) -> Result<Self, KgError> {
        let file = std::fs::File::open(path)?;
        Self::read(
            BufReader::new(file),
            KgBuilder::with_vocab(entities, relations),
        )
    }

    pub fn read<R: BufRead>(reader: R, mut builder: KgBuilder) -> Result<Self, KgError> {
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
                return Err(KgError::Format(i + 1));
            }
            builder.add(fields[0], fields[1], fields[2]);
        }
        Ok(builder.build())
    }

    /// Writes the triples as TSV in sorted id order.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for &(h, r, t) in &self.triples {
            writeln!(
                out,
                "{}\t{}\t{}",
                self.entity_name(h),
                self.relation_name(r),
                self.entity_name(t)
            )?;
        }
        Ok(())
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn entities(&self) -> &Interner {
        &self.entities
    }

    pub fn relations(&self) -> &Interner {
        &self.relations
    }

    pub fn triples(&self) -> &[(EntityId, RelationId, EntityId)] {
        &self.triples
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entities.get(name).map(EntityId)
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relations.get(name).map(RelationId)
    }

    /// Panics on an out-of-range id; use [`Self::entity_id`] to validate names.
    pub fn entity_name(&self, id: EntityId) -> &str {
        self.entities.name(id.0).expect("entity id in range")
    }

    pub fn relation_name(&self, id: RelationId) -> &str {
        self.relations.name(id.0).expect("relation id in range")
    }

    pub fn all_entities(&self) -> impl Iterator<Item = EntityId> {
        (0..self.entities.len() as u32).map(EntityId)
    }

    pub fn contains(&self, h: EntityId, r: RelationId, t: EntityId) -> bool {
        self.triples.binary_search(&(h, r, t)).is_ok()
    }

    fn check_entity(&self, e: EntityId) -> Result<(), KgError> {
        if e.index() < self.entities.len() {
            Ok(())
        } else {
            Err(KgError::UnknownId(e.to_string()))
        }
    }

    fn check_relation(&self, r: RelationId) -> Result<(), KgError> {
        if r.index() < self.relations.len() {
            Ok(())
        } else {
            Err(KgError::UnknownId(r.to_string()))
        }
    }

    /// Sorted neighbours of `entity` along `relation`: tails when `inverse`
    /// is false, heads when it is true.
    pub fn query_edges(
        &self,
        entity: EntityId,
        relation: RelationId,
        inverse: bool,
    ) -> Result<&[EntityId], KgError> {
        self.check_entity(entity)?;
        self.check_relation(relation)?;
        Ok(self.neighbours(entity, relation, inverse))
    }

    /// Unchecked variant of [`Self::query_edges`] for hot loops over ids the
    /// caller already validated.
    pub(crate) fn neighbours(&self, entity: EntityId, relation: RelationId, inverse: bool) -> &[EntityId] {
        let index = if inverse { &self.inv } else { &self.fwd };
        index
            .get(&(entity, relation))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// All `(head, tail)` pairs of `relation`, sorted.
    pub fn relation_pairs(&self, relation: RelationId) -> Result<&[(EntityId, EntityId)], KgError> {
        self.check_relation(relation)?;
        Ok(&self.pairs[relation.index()])
    }

    /// Graph over the same vocabulary keeping only the triples accepted by
    /// `keep`; ids stay aligned with `self`.
    pub fn subgraph(&self, mut keep: impl FnMut(EntityId, RelationId, EntityId) -> bool) -> KnowledgeGraph {
        let mut b = KgBuilder::with_vocab(self.entities.clone(), self.relations.clone());
        b.triples = self
            .triples
            .iter()
            .copied()
            .filter(|&(h, r, t)| keep(h, r, t))
            .collect();
        b.build()
    }

    /// True when both graphs assign the same ids to the same names.
    pub fn same_vocabulary(&self, other: &KnowledgeGraph) -> bool {
        self.entities.names() == other.entities.names() && self.relations.names() == other.relations.names()
    }

    /// Index sizes, used by consistency checks.
    pub fn index_sizes(&self) -> (usize, usize) {
        (
            self.fwd.values().map(Vec::len).sum(),
            self.inv.values().map(Vec::len).sum(),
        )
    }
}
