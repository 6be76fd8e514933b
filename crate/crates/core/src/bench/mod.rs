//! Benchmark generation: grounded DAG queries of the six benchmark types
//! (plus the mined `2rs`/`3rs` shapes), easy/hard answer bookkeeping,
//! difficulty splits by overlap with the tree-form relaxation, and JSONL
//! dataset files.
//!
//! Grounding is answer-first: a template is instantiated by walking existing
//! edges backwards from a target entity, so every grounded query has at least
//! one answer on the graph it was grounded on.

mod synth;

pub use synth::{holdout, synthetic_kg, SynthConfig};

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityId, KnowledgeGraph, RelationId};
use crate::oracle::{eval_concept, overlap_ratio, AnswerSet, OracleError};
use crate::query::{relax, Concept, Role};

/// Substream tag mixed into the seed for dataset generation.
const GENERATION_STREAM: u64 = 0x6765_6e65_7261_7465;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QueryType {
    S2,
    S3,
    Sp,
    Is,
    Us,
    Ins,
    Rs2,
    Rs3,
}

impl QueryType {
    pub const ALL: [QueryType; 8] = [
        QueryType::S2,
        QueryType::S3,
        QueryType::Sp,
        QueryType::Is,
        QueryType::Us,
        QueryType::Ins,
        QueryType::Rs2,
        QueryType::Rs3,
    ];

    /// The six benchmark types, in report order.
    pub const BENCHMARK: [QueryType; 6] = [
        QueryType::S2,
        QueryType::S3,
        QueryType::Sp,
        QueryType::Is,
        QueryType::Us,
        QueryType::Ins,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QueryType::S2 => "2s",
            QueryType::S3 => "3s",
            QueryType::Sp => "sp",
            QueryType::Is => "is",
            QueryType::Us => "us",
            QueryType::Ins => "ins",
            QueryType::Rs2 => "2rs",
            QueryType::Rs3 => "3rs",
        }
    }

    pub fn has_negation(self) -> bool {
        self == QueryType::Ins
    }
}

impl fmt::Display for QueryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QueryType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        QueryType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown query type '{s}'"))
    }
}

impl Serialize for QueryType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for QueryType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A query shape whose relation names `r1, r2, ...` and nominals `e1, e2`
/// are placeholders.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryTemplate {
    pub tag: QueryType,
    pub skeleton: Concept,
}

fn r(i: usize) -> Role {
    Role::name(format!("r{i}"))
}

fn e(i: usize) -> Concept {
    Concept::nominal(format!("e{i}"))
}

fn meet(range: std::ops::RangeInclusive<usize>) -> Role {
    Role::meet(range.map(r).collect())
}

impl QueryTemplate {
    pub fn new(tag: QueryType) -> Self {
        let branch = |i: usize| Concept::exists(r(i), e(i));
        let split = |c: Concept| Concept::exists(meet(3..=4).inv(), c);
        let skeleton = match tag {
            QueryType::S2 => Concept::exists(Role::compose(r(1), meet(2..=3)).inv(), e(1)),
            QueryType::S3 => Concept::exists(Role::compose(r(1), meet(2..=4)).inv(), e(1)),
            QueryType::Sp => Concept::exists(Role::chain([r(1), meet(2..=3), r(4)]).inv(), e(1)),
            QueryType::Is => split(Concept::and(vec![branch(1), branch(2)])),
            QueryType::Us => split(Concept::or(vec![branch(1), branch(2)])),
            QueryType::Ins => split(Concept::and(vec![branch(1), Concept::not(branch(2))])),
            QueryType::Rs2 => Concept::exists(meet(1..=2).inv(), e(1)),
            QueryType::Rs3 => Concept::exists(meet(1..=3).inv(), e(1)),
        };
        QueryTemplate { tag, skeleton }
    }

    pub fn num_relations(&self) -> usize {
        match self.tag {
            QueryType::Rs2 => 2,
            QueryType::S2 | QueryType::Rs3 => 3,
            _ => 4,
        }
    }

    pub fn num_entities(&self) -> usize {
        match self.tag {
            QueryType::Is | QueryType::Us | QueryType::Ins => 2,
            _ => 1,
        }
    }

    /// Replaces `ri` by `relations[i-1]` and `ei` by `entities[i-1]`.
    pub fn ground(&self, relations: &[&str], entities: &[&str]) -> Concept {
        assert_eq!(relations.len(), self.num_relations(), "relation count for {}", self.tag);
        assert_eq!(entities.len(), self.num_entities(), "entity count for {}", self.tag);
        subst_concept(&self.skeleton, relations, entities)
    }
}

fn placeholder<'a>(name: &str, prefix: char, values: &[&'a str]) -> Option<&'a str> {
    let i: usize = name.strip_prefix(prefix)?.parse().ok()?;
    values.get(i.checked_sub(1)?).copied()
}

fn subst_role(r: &Role, rels: &[&str]) -> Role {
    match r {
        Role::Name(n) => Role::name(placeholder(n, 'r', rels).unwrap_or(n)),
        Role::Inverse(x) => subst_role(x, rels).inv(),
        Role::Compose(a, b) => Role::compose(subst_role(a, rels), subst_role(b, rels)),
        Role::Meet(ms) => Role::Meet(ms.iter().map(|m| subst_role(m, rels)).collect()),
    }
}

fn subst_concept(c: &Concept, rels: &[&str], ents: &[&str]) -> Concept {
    match c {
        Concept::Nominal(a) => Concept::nominal(placeholder(a, 'e', ents).unwrap_or(a)),
        Concept::Not(x) => Concept::not(subst_concept(x, rels, ents)),
        Concept::And(xs) => Concept::And(xs.iter().map(|x| subst_concept(x, rels, ents)).collect()),
        Concept::Or(xs) => Concept::Or(xs.iter().map(|x| subst_concept(x, rels, ents)).collect()),
        Concept::Exists(role, x) => Concept::exists(subst_role(role, rels), subst_concept(x, rels, ents)),
    }
}

/// Structural key used for deduplication: roles normalized and meet
/// members sorted.
pub fn canonical_form(c: &Concept) -> Concept {
    fn role(r: &Role) -> Role {
        match r {
            Role::Name(_) => r.clone(),
            Role::Inverse(x) => role(x).inv(),
            Role::Compose(a, b) => Role::compose(role(a), role(b)),
            Role::Meet(ms) => {
                let mut ms: Vec<Role> = ms.iter().map(role).collect();
                ms.sort();
                Role::Meet(ms)
            }
        }
    }
    fn concept(c: &Concept) -> Concept {
        match c {
            Concept::Nominal(_) => c.clone(),
            Concept::Not(x) => Concept::not(concept(x)),
            Concept::And(xs) => Concept::And(xs.iter().map(concept).collect()),
            Concept::Or(xs) => Concept::Or(xs.iter().map(concept).collect()),
            Concept::Exists(r, x) => Concept::exists(role(r), concept(x)),
        }
    }
    concept(&c.normalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Difficulty {
    Easy,
    Hard,
}

/// Hard iff `overlap < threshold` (strict).
pub fn difficulty_of(overlap: f64, threshold: f64) -> Difficulty {
    if overlap < threshold {
        Difficulty::Hard
    } else {
        Difficulty::Easy
    }
}

/// A grounded query with answers. Easy answers hold on the training graph;
/// hard answers only on the full graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryInstance {
    pub id: u64,
    #[serde(rename = "type")]
    pub tag: QueryType,
    pub concept: Concept,
    pub easy_answers: BTreeSet<String>,
    pub hard_answers: BTreeSet<String>,
    /// Overlap of the full-graph answers with those of the relaxation.
    pub overlap: f64,
}

impl QueryInstance {
    /// Easy and hard answers together.
    pub fn answers(&self) -> BTreeSet<&str> {
        self.easy_answers
            .iter()
            .chain(&self.hard_answers)
            .map(String::as_str)
            .collect()
    }

    pub fn difficulty(&self, threshold: f64) -> Difficulty {
        difficulty_of(self.overlap, threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    /// The graph offers no edge pattern for the template.
    NoCandidate,
    EmptyAnswers,
    /// Test instance without answers that need held-out edges.
    NoHardAnswers,
    /// The negated branch removes nothing from the answer set.
    VacuousNegation,
    /// Two members of a meet bind the same relation.
    RepeatedRelation,
    Duplicate,
    NotHard,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RejectReason::NoCandidate => "no grounding candidate",
            RejectReason::EmptyAnswers => "empty answer set",
            RejectReason::NoHardAnswers => "no hard answers",
            RejectReason::VacuousNegation => "vacuous negation",
            RejectReason::RepeatedRelation => "meet repeats a relation",
            RejectReason::Duplicate => "duplicate concept",
            RejectReason::NotHard => "overlap not below threshold",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("rejected: {0}")]
    Rejected(RejectReason),
    #[error("no {tag} instance for split {split} after {retries} retries")]
    ExhaustedRetries {
        tag: QueryType,
        split: &'static str,
        retries: usize,
    },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("training and full graphs have different vocabularies")]
    VocabularyMismatch,
    #[error("training graph is not a subgraph of the full graph")]
    NotSubgraph,
}

fn names(kg: &KnowledgeGraph, s: &AnswerSet) -> BTreeSet<String> {
    s.iter().map(|&e| kg.entity_name(e).to_owned()).collect()
}

/// Answers `concept` on both graphs. The graphs must share a vocabulary.
pub fn instance_from_concept(
    kg_train: &KnowledgeGraph,
    kg_full: &KnowledgeGraph,
    id: u64,
    tag: QueryType,
    concept: Concept,
) -> Result<QueryInstance, BenchError> {
    let easy = eval_concept(kg_train, &concept)?;
    let full = eval_concept(kg_full, &concept)?;
    let relaxed = eval_concept(kg_full, &relax(&concept))?;
    let hard: AnswerSet = full.difference(&easy).copied().collect();
    Ok(QueryInstance {
        id,
        tag,
        overlap: overlap_ratio(&full, &relaxed),
        easy_answers: names(kg_train, &easy),
        hard_answers: names(kg_full, &hard),
        concept,
    })
}

/// Edge patterns of one graph used for answer-first grounding.
struct GroundingIndex<'a> {
    kg: &'a KnowledgeGraph,
    /// `(x, a, rels)`: every relation linking `x` to `a`, when there are at
    /// least two.
    parallel: Vec<(EntityId, EntityId, Vec<RelationId>)>,
    with_three: Vec<usize>,
}

impl<'a> GroundingIndex<'a> {
    fn new(kg: &'a KnowledgeGraph) -> Self {
        let mut by_pair: BTreeMap<(EntityId, EntityId), Vec<RelationId>> = BTreeMap::new();
        for &(h, r, t) in kg.triples() {
            by_pair.entry((h, t)).or_default().push(r);
        }
        let parallel: Vec<_> = by_pair
            .into_iter()
            .filter(|(_, rs)| rs.len() >= 2)
            .map(|((h, t), rs)| (h, t, rs))
            .collect();
        let with_three = (0..parallel.len()).filter(|&i| parallel[i].2.len() >= 3).collect();
        GroundingIndex {
            kg,
            parallel,
            with_three,
        }
    }

    fn edges(&self, x: EntityId, inverse: bool) -> Vec<(RelationId, EntityId)> {
        (0..self.kg.num_relations() as u32)
            .map(RelationId)
            .flat_map(|r| self.kg.neighbours(x, r, inverse).iter().map(move |&y| (r, y)))
            .collect()
    }

    /// A pair `(x, a)` joined by `k` distinct relations, sorted by id.
    fn meet_edge(&self, k: usize, rng: &mut ChaCha8Rng) -> Option<(EntityId, EntityId, Vec<RelationId>)> {
        let (x, a, rels) = if k >= 3 {
            &self.parallel[*self.with_three.choose(rng)?]
        } else {
            self.parallel.choose(rng)?
        };
        let mut chosen: Vec<RelationId> = rels.choose_multiple(rng, k).copied().collect();
        chosen.sort();
        Some((*x, *a, chosen))
    }

    /// Relation and entity ids in placeholder order.
    fn ground(&self, tag: QueryType, rng: &mut ChaCha8Rng) -> Option<(Vec<RelationId>, Vec<EntityId>)> {
        match tag {
            QueryType::S2 | QueryType::S3 => {
                let (x, _, m) = self.meet_edge(if tag == QueryType::S2 { 2 } else { 3 }, rng)?;
                let &(r1, e1) = self.edges(x, true).choose(rng)?;
                Some(([vec![r1], m].concat(), vec![e1]))
            }
            QueryType::Sp => {
                let (x, y, m) = self.meet_edge(2, rng)?;
                let &(r4, _) = self.edges(y, false).choose(rng)?;
                let &(r1, e1) = self.edges(x, true).choose(rng)?;
                Some(([vec![r1], m, vec![r4]].concat(), vec![e1]))
            }
            QueryType::Is | QueryType::Us | QueryType::Ins => {
                let (x, _, m) = self.meet_edge(2, rng)?;
                let out = self.edges(x, false);
                let &(r1, e1) = out.choose(rng)?;
                let (r2, e2) = match tag {
                    QueryType::Is => *out.iter().copied().filter(|&p| p != (r1, e1)).collect::<Vec<_>>().choose(rng)?,
                    QueryType::Us => {
                        let &(_, r, t) = self.kg.triples().choose(rng)?;
                        if (r, t) == (r1, e1) {
                            return None;
                        }
                        (r, t)
                    }
                    _ => {
                        // Taken from another member of the first branch so
                        // that the negation can bite.
                        let others: Vec<(RelationId, EntityId)> = self
                            .kg
                            .neighbours(e1, r1, true)
                            .iter()
                            .filter(|&&y| y != x)
                            .flat_map(|&y| self.edges(y, false))
                            .filter(|&(r, t)| !self.kg.contains(x, r, t))
                            .collect();
                        *others.choose(rng)?
                    }
                };
                Some(([vec![r1, r2], m].concat(), vec![e1, e2]))
            }
            QueryType::Rs2 | QueryType::Rs3 => {
                let (x, _, m) = self.meet_edge(if tag == QueryType::Rs2 { 2 } else { 3 }, rng)?;
                Some((m, vec![x]))
            }
        }
    }
}

fn meets_have_distinct_relations(c: &Concept) -> bool {
    fn role_ok(r: &Role) -> bool {
        match r {
            Role::Name(_) => true,
            Role::Inverse(x) => role_ok(x),
            Role::Compose(a, b) => role_ok(a) && role_ok(b),
            Role::Meet(ms) => {
                let set: HashSet<&Role> = ms.iter().collect();
                set.len() == ms.len() && ms.iter().all(role_ok)
            }
        }
    }
    let mut ok = true;
    c.visit(&mut |x| {
        if let Concept::Exists(r, _) = x {
            ok &= role_ok(r);
        }
    });
    ok
}

/// The `ins` concept with the negated conjunct dropped.
fn without_negation(c: &Concept) -> Concept {
    match c {
        Concept::Exists(r, x) => Concept::exists(r.clone(), without_negation(x)),
        Concept::And(xs) => {
            let kept: Vec<Concept> = xs
                .iter()
                .filter(|x| !matches!(x, Concept::Not(_)))
                .map(without_negation)
                .collect();
            if kept.len() == 1 {
                kept.into_iter().next().unwrap()
            } else {
                Concept::And(kept)
            }
        }
        other => other.clone(),
    }
}

fn try_instance(
    index: &GroundingIndex<'_>,
    kg_train: &KnowledgeGraph,
    kg_full: &KnowledgeGraph,
    template: &QueryTemplate,
    rng: &mut ChaCha8Rng,
) -> Result<QueryInstance, BenchError> {
    let reject = |r| Err(BenchError::Rejected(r));
    let Some((rels, ents)) = index.ground(template.tag, rng) else {
        return reject(RejectReason::NoCandidate);
    };
    let kg = index.kg;
    let rel_names: Vec<&str> = rels.iter().map(|&r| kg.relation_name(r)).collect();
    let ent_names: Vec<&str> = ents.iter().map(|&e| kg.entity_name(e)).collect();
    let concept = template.ground(&rel_names, &ent_names);
    if !meets_have_distinct_relations(&concept.normalize()) {
        return reject(RejectReason::RepeatedRelation);
    }
    if template.tag == QueryType::Ins {
        let with = eval_concept(kg, &concept)?;
        let without = eval_concept(kg, &without_negation(&concept))?;
        if with.len() == without.len() {
            return reject(RejectReason::VacuousNegation);
        }
    }
    let inst = instance_from_concept(kg_train, kg_full, 0, template.tag, concept)?;
    if inst.easy_answers.is_empty() && inst.hard_answers.is_empty() {
        return reject(RejectReason::EmptyAnswers);
    }
    Ok(inst)
}

/// Grounds `template` on `kg` and answers it there (no held-out edges, so
/// the hard answer set is empty). Returns `Rejected` when this attempt
/// fails; the caller retries with the advanced rng.
pub fn instantiate_template(
    kg: &KnowledgeGraph,
    template: &QueryTemplate,
    rng: &mut ChaCha8Rng,
) -> Result<QueryInstance, BenchError> {
    try_instance(&GroundingIndex::new(kg), kg, kg, template, rng)
}

/// Recomputes the overlap on `kg_full`, stores it and classifies.
pub fn classify_difficulty(
    kg_full: &KnowledgeGraph,
    q: &mut QueryInstance,
    threshold: f64,
) -> Result<Difficulty, BenchError> {
    let full = eval_concept(kg_full, &q.concept)?;
    let relaxed = eval_concept(kg_full, &relax(&q.concept))?;
    q.overlap = overlap_ratio(&full, &relaxed);
    Ok(q.difficulty(threshold))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SplitName {
    Train,
    Valid,
    TestEasy,
    TestHard,
}

impl SplitName {
    pub const ALL: [SplitName; 4] = [SplitName::Train, SplitName::Valid, SplitName::TestEasy, SplitName::TestHard];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Valid => "valid",
            SplitName::TestEasy => "test-easy",
            SplitName::TestHard => "test-hard",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.jsonl", self.as_str())
    }

    fn is_test(self) -> bool {
        matches!(self, SplitName::TestEasy | SplitName::TestHard)
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SplitName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| format!("unknown split '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub name: String,
    pub instances: Vec<QueryInstance>,
}

/// Per-type instance counts for each split, plus the difficulty threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub types: Vec<QueryType>,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test_easy: usize,
    pub n_test_hard: usize,
    /// Types of the test-hard split when it should differ from `types`
    /// (some types rarely have hard instances on small graphs).
    pub hard_types: Option<Vec<QueryType>>,
    pub threshold: f64,
    pub seed: u64,
    pub max_retries: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            types: QueryType::BENCHMARK.to_vec(),
            n_train: 0,
            n_valid: 0,
            n_test_easy: 0,
            n_test_hard: 0,
            hard_types: None,
            threshold: 0.5,
            seed: 0,
            max_retries: 100,
        }
    }
}

impl GenConfig {
    fn count(&self, split: SplitName) -> usize {
        match split {
            SplitName::Train => self.n_train,
            SplitName::Valid => self.n_valid,
            SplitName::TestEasy => self.n_test_easy,
            SplitName::TestHard => self.n_test_hard,
        }
    }
}

/// Builds train, valid, test-easy and test-hard splits, in that order.
///
/// Train and valid queries are grounded and answered on `kg_train`. Test
/// queries are grounded on `kg_full`; their hard answers are the full-graph
/// answers missing from the training graph, and when the two graphs differ
/// a test query must have at least one. Every slot draws from its own rng
/// stream, so the output depends only on the graphs and `config`.
pub fn generate_dataset(
    kg_train: &KnowledgeGraph,
    kg_full: &KnowledgeGraph,
    config: &GenConfig,
) -> Result<Vec<DatasetSplit>, BenchError> {
    if !kg_train.same_vocabulary(kg_full) {
        return Err(BenchError::VocabularyMismatch);
    }
    if !kg_train.triples().iter().all(|&(h, r, t)| kg_full.contains(h, r, t)) {
        return Err(BenchError::NotSubgraph);
    }
    let require_hard = kg_train.num_triples() != kg_full.num_triples();
    let train_index = GroundingIndex::new(kg_train);
    let full_index = GroundingIndex::new(kg_full);
    let mut seen: HashSet<Concept> = HashSet::new();
    let mut slot: u64 = 0;
    let mut out = Vec::new();
    for split in SplitName::ALL {
        let (index, answer_full) = if split.is_test() {
            (&full_index, kg_full)
        } else {
            (&train_index, kg_train)
        };
        let mut instances = Vec::new();
        let types = match (&config.hard_types, split) {
            (Some(h), SplitName::TestHard) => h,
            _ => &config.types,
        };
        for &tag in types {
            let template = QueryTemplate::new(tag);
            for _ in 0..config.count(split) {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ GENERATION_STREAM);
                rng.set_stream(slot);
                slot += 1;
                let mut found = None;
                for _ in 0..config.max_retries {
                    let inst = match try_instance(index, kg_train, answer_full, &template, &mut rng) {
                        Ok(inst) => inst,
                        Err(BenchError::Rejected(_)) => continue,
                        Err(e) => return Err(e),
                    };
                    if split.is_test() && require_hard && inst.hard_answers.is_empty() {
                        continue;
                    }
                    if split == SplitName::TestHard && inst.difficulty(config.threshold) != Difficulty::Hard {
                        continue;
                    }
                    if !seen.insert(canonical_form(&inst.concept)) {
                        continue;
                    }
                    found = Some(inst);
                    break;
                }
                let mut inst = found.ok_or(BenchError::ExhaustedRetries {
                    tag,
                    split: split.as_str(),
                    retries: config.max_retries,
                })?;
                inst.id = instances.len() as u64;
                instances.push(inst);
            }
        }
        out.push(DatasetSplit {
            name: split.as_str().to_owned(),
            instances,
        });
    }
    Ok(out)
}

/// Bucket index for an overlap: `[0, .3)`, `[.3, .6)`, `[.6, .9)`, `[.9, 1]`.
pub fn overlap_bucket(overlap: f64) -> usize {
    if overlap < 0.3 {
        0
    } else if overlap < 0.6 {
        1
    } else if overlap < 0.9 {
        2
    } else {
        3
    }
}

pub const BUCKET_LABELS: [&str; 4] = ["0-30%", "30-60%", "60-90%", "90-100%"];

pub fn overlap_histogram(split: &DatasetSplit) -> [usize; 4] {
    let mut counts = [0; 4];
    for q in &split.instances {
        counts[overlap_bucket(q.overlap)] += 1;
    }
    counts
}

pub fn write_dataset(split: &DatasetSplit, path: impl AsRef<Path>) -> Result<(), BenchError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for q in &split.instances {
        serde_json::to_writer(&mut w, q).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a JSONL split; the split name is the file stem. Blank lines are
/// skipped and errors carry the 1-based line number.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<DatasetSplit, BenchError> {
    let path = path.as_ref();
    let reader = BufReader::new(fs::File::open(path)?);
    let mut instances = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let q: QueryInstance = serde_json::from_str(&line).map_err(|e| BenchError::Format {
            line: i + 1,
            message: e.to_string(),
        })?;
        instances.push(q);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(DatasetSplit { name, instances })
}

/// Reads `<dir>/<split>.jsonl`.
pub fn read_split(dir: impl AsRef<Path>, split: SplitName) -> Result<DatasetSplit, BenchError> {
    read_dataset(dir.as_ref().join(split.file_name()))
}
