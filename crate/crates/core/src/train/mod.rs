//! Query embedding by structural recursion, the answer / monotonicity /
//! conjunction-preserving losses, constraint-query mining, the training
//! loop, and MRR evaluation ([`eval`]).

mod eval;

pub use eval::{
    entity_scores,
    constant_scores, evaluate, evaluate_with, mrr, rank_answers, report_csv, report_tables, MrrReport,
    TypeScore,
};

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Adam, Tape, Var};
use crate::bench::{instance_from_concept, BenchError, QueryInstance, QueryTemplate, QueryType};
use crate::geometry::{Geometry, GeometryConfig, GeometryError, Model, QueryEmb, RoleVec};
use crate::kg::{EntityId, KnowledgeGraph, RelationId};
use crate::query::{relax, Concept, Role};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error("unknown name '{0}'")]
    UnknownName(String),
    #[error("need {needed} negatives but only {available} non-answers exist")]
    TooFewEntities { needed: usize, available: usize },
    #[error("no training examples")]
    EmptyDataset,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<crate::autodiff::AutodiffError> for TrainError {
    fn from(e: crate::autodiff::AutodiffError) -> Self {
        TrainError::Geometry(e.into())
    }
}

/// Named rng substreams; every random choice in training draws from one.
#[derive(Debug, Clone, Copy)]
enum Stream {
    Init = 1,
    Batch = 2,
    Negatives = 3,
    Meets = 4,
    Mining = 5,
    Constraints = 6,
}

fn substream(seed: u64, s: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub geometry: Geometry,
    pub dim: usize,
    pub batch_size: usize,
    pub negatives: usize,
    pub margin: f64,
    pub learning_rate: f64,
    pub lambda_mono: f64,
    pub lambda_conj: f64,
    pub steps: usize,
    pub seed: u64,
    pub geometry_config: GeometryConfig,
    /// Embed the tree-form relaxation of every query instead of the query.
    pub relaxed: bool,
    /// Mined 2rs/3rs queries kept for the conjunction-preserving loss.
    pub conj_pool: usize,
    /// Mined queries drawn from the pool per step.
    pub conj_batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            geometry: Geometry::Box,
            dim: 32,
            batch_size: 32,
            negatives: 16,
            margin: 6.0,
            learning_rate: 0.005,
            lambda_mono: 0.02,
            lambda_conj: 0.02,
            steps: 1000,
            seed: 0,
            geometry_config: GeometryConfig::default(),
            relaxed: false,
            conj_pool: 1000,
            conj_batch: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_owned()));
        if self.dim == 0 || self.batch_size == 0 || self.steps == 0 {
            return bad("dim, batch_size and steps must be positive");
        }
        if self.negatives == 0 {
            return bad("negatives must be at least 1");
        }
        if !(self.margin > 0.0) || !(self.learning_rate > 0.0) {
            return bad("margin and learning_rate must be positive");
        }
        if self.lambda_mono < 0.0 || self.lambda_conj < 0.0 {
            return bad("constraint weights must be nonnegative");
        }
        let g = self.geometry_config;
        if !(g.alpha_in >= 0.0) || !(g.volume_beta > 0.0) || !(g.cone_lambda >= 0.0) {
            return bad("geometry extras out of range");
        }
        Ok(())
    }
}

/// Number of operator applications made while embedding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EmbedStats {
    pub rel_transform: usize,
    pub intersect: usize,
    pub complement: usize,
    pub rcombine: usize,
    pub rcompose: usize,
}

/// `(inner, outer)` pairs for the monotonicity loss: the embedding through
/// a full meet and through one of its members.
pub type MeetSite = (QueryEmb, QueryEmb);

/// Walks concepts into embeddings against one model.
pub struct Embedder<'a> {
    pub model: &'a Model,
    entities: HashMap<&'a str, usize>,
    relations: HashMap<&'a str, usize>,
    pub stats: EmbedStats,
}

impl<'a> Embedder<'a> {
    pub fn new(model: &'a Model) -> Self {
        let index = |names: &'a [String]| names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        Embedder {
            model,
            entities: index(&model.entity_names),
            relations: index(&model.relation_names),
            stats: EmbedStats::default(),
        }
    }

    pub fn entity(&self, name: &str) -> Result<usize, TrainError> {
        self.entities
            .get(name)
            .copied()
            .ok_or_else(|| TrainError::UnknownName(name.to_owned()))
    }

    fn relation(&self, name: &str) -> Result<usize, TrainError> {
        self.relations
            .get(name)
            .copied()
            .ok_or_else(|| TrainError::UnknownName(name.to_owned()))
    }

    /// Disjunct embeddings of `c` (one unless `c` has a union).
    pub fn embed(&mut self, t: &mut Tape, c: &Concept) -> Result<Vec<QueryEmb>, TrainError> {
        self.walk(t, &c.unfold(), &mut None)
    }

    /// Like [`Self::embed`], also collecting one monotonicity site per
    /// disjunct of every meet, with the single member drawn from `rng`.
    pub fn embed_with_meets(
        &mut self,
        t: &mut Tape,
        c: &Concept,
        sites: &mut Vec<MeetSite>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<QueryEmb>, TrainError> {
        self.walk(t, &c.unfold(), &mut Some((sites, rng)))
    }

    fn walk(
        &mut self,
        t: &mut Tape,
        c: &Concept,
        meets: &mut Option<(&mut Vec<MeetSite>, &mut ChaCha8Rng)>,
    ) -> Result<Vec<QueryEmb>, TrainError> {
        let ops = &self.model.ops;
        let s = &self.model.params;
        match c {
            Concept::Nominal(a) => Ok(vec![ops.nominal(t, s, self.entity(a)?)?]),
            Concept::Exists(role, x) => {
                let args = self.walk(t, x, meets)?;
                let rv = self.role_vec(t, role)?;
                let mut out = Vec::with_capacity(args.len());
                for &q in &args {
                    self.stats.rel_transform += 1;
                    out.push(ops.rel_transform(t, s, q, rv)?);
                }
                if let (Role::Meet(ms), Some((sites, rng))) = (role, meets.as_mut()) {
                    if ms.len() >= 2 {
                        let single = self.role_vec_quiet(t, &ms[rng.gen_range(0..ms.len())])?;
                        for (&q, &inner) in args.iter().zip(&out) {
                            let outer = ops.rel_transform(t, s, q, single)?;
                            sites.push((inner, outer));
                        }
                    }
                }
                Ok(out)
            }
            Concept::And(xs) => {
                let parts = xs
                    .iter()
                    .map(|x| self.walk(t, x, meets))
                    .collect::<Result<Vec<_>, _>>()?;
                let mut out = Vec::new();
                for combo in cartesian(&parts) {
                    if combo.len() == 1 {
                        out.push(combo[0]);
                    } else {
                        self.stats.intersect += 1;
                        out.push(ops.intersect(t, s, &combo)?);
                    }
                }
                Ok(out)
            }
            Concept::Or(xs) => {
                let mut out = Vec::new();
                for x in xs {
                    out.extend(self.walk(t, x, meets)?);
                }
                Ok(out)
            }
            Concept::Not(x) => {
                let inner = self.walk(t, x, meets)?;
                let mut negated = Vec::with_capacity(inner.len());
                for q in inner {
                    self.stats.complement += 1;
                    negated.push(ops.complement(t, q)?);
                }
                // not (a or b) = not a and not b
                if negated.len() == 1 {
                    Ok(negated)
                } else {
                    self.stats.intersect += 1;
                    Ok(vec![ops.intersect(t, s, &negated)?])
                }
            }
        }
    }

    /// Role vector of an atomic role, a composition, or a meet.
    pub fn role_vec(&mut self, t: &mut Tape, r: &Role) -> Result<RoleVec, TrainError> {
        let ops = &self.model.ops;
        let s = &self.model.params;
        match r {
            Role::Name(n) => Ok(ops.role(t, s, self.relation(n)?, false)?),
            Role::Inverse(x) => match &**x {
                Role::Name(n) => Ok(ops.role(t, s, self.relation(n)?, true)?),
                _ => self.role_vec(t, &crate::query::normalize_role(r)),
            },
            Role::Compose(a, b) => {
                let va = self.role_vec(t, a)?;
                let vb = self.role_vec(t, b)?;
                self.stats.rcompose += 1;
                // the right factor acts on the argument first
                Ok(ops.rcompose(t, vb, va)?)
            }
            Role::Meet(ms) => {
                let vs = ms
                    .iter()
                    .map(|m| self.role_vec(t, m))
                    .collect::<Result<Vec<_>, _>>()?;
                self.stats.rcombine += 1;
                Ok(ops.rcombine(t, s, &vs)?)
            }
        }
    }

    fn role_vec_quiet(&mut self, t: &mut Tape, r: &Role) -> Result<RoleVec, TrainError> {
        let saved = self.stats;
        let out = self.role_vec(t, r);
        self.stats = saved;
        out
    }
}

fn cartesian(parts: &[Vec<QueryEmb>]) -> Vec<Vec<QueryEmb>> {
    let mut out: Vec<Vec<QueryEmb>> = vec![Vec::new()];
    for p in parts {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                p.iter().map(move |&q| {
                    let mut v = prefix.clone();
                    v.push(q);
                    v
                })
            })
            .collect();
    }
    out
}

/// Disjunct embeddings of `c` under `model`.
pub fn embed_query(t: &mut Tape, model: &Model, c: &Concept) -> Result<Vec<QueryEmb>, TrainError> {
    Embedder::new(model).embed(t, c)
}

/// Distance to the closest disjunct.
pub fn score(t: &mut Tape, model: &Model, entity: usize, disjuncts: &[QueryEmb]) -> Result<Var, TrainError> {
    let e = model.ops.nominal(t, &model.params, entity)?;
    let mut best: Option<Var> = None;
    for &q in disjuncts {
        let d = model.ops.distance(t, e, q)?;
        best = Some(match best {
            None => d,
            Some(b) => t.minimum(b, d)?,
        });
    }
    best.ok_or(TrainError::EmptyDataset)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeSample {
    pub positive: usize,
    pub negatives: Vec<usize>,
}

/// `k` distinct entities outside `known` (and different from `positive`),
/// uniformly at random.
pub fn sample_negatives(
    n_entities: usize,
    known: &HashSet<usize>,
    positive: usize,
    k: usize,
    rng: &mut impl Rng,
) -> Result<NegativeSample, TrainError> {
    let pool: Vec<usize> = (0..n_entities).filter(|e| *e != positive && !known.contains(e)).collect();
    if pool.len() < k {
        return Err(TrainError::TooFewEntities {
            needed: k,
            available: pool.len(),
        });
    }
    let negatives = index::sample(rng, pool.len(), k).into_iter().map(|i| pool[i]).collect();
    Ok(NegativeSample { positive, negatives })
}

/// `-log σ(γ - d⁺) - (1/k) Σ log σ(d⁻ - γ)`, using `-log σ(z) = softplus(-z)`.
pub fn answer_loss(t: &mut Tape, d_pos: Var, d_negs: &[Var], margin: f64) -> Result<Var, TrainError> {
    let shifted = t.add_scalar(d_pos, -margin);
    let pos = t.softplus(shifted, 1.0);
    if d_negs.is_empty() {
        return Ok(pos);
    }
    let negs = t.concat(d_negs)?;
    let neg = t.neg(negs);
    let neg = t.add_scalar(neg, margin);
    let neg = t.softplus(neg, 1.0);
    let neg = t.sum(neg);
    let neg = t.scale(neg, 1.0 / d_negs.len() as f64);
    Ok(t.add(pos, neg)?)
}

/// Sum of containment penalties over meet sites; `None` when there are no
/// sites.
pub fn mono_loss(t: &mut Tape, model: &Model, sites: &[MeetSite]) -> Result<Option<Var>, TrainError> {
    let mut total: Option<Var> = None;
    for &(inner, outer) in sites {
        let p = model.ops.containment_penalty(t, &model.params, inner, outer)?;
        total = Some(match total {
            None => p,
            Some(acc) => t.add(acc, p)?,
        });
    }
    Ok(total)
}

/// Difference between the rcombined embedding of a mined meet query and
/// the intersection of its single-role embeddings, for one instance.
pub fn conj_term(t: &mut Tape, emb: &mut Embedder<'_>, q: &QueryInstance) -> Result<Var, TrainError> {
    let Concept::Exists(Role::Meet(members), arg) = q.concept.unfold() else {
        return Err(TrainError::InvalidConfig(format!("not a meet query: {}", q.concept)));
    };
    let model = emb.model;
    let base = emb.embed(t, &arg)?;
    let [base] = base[..] else {
        return Err(TrainError::InvalidConfig("meet argument has a union".into()));
    };
    let combined = emb.role_vec(t, &Role::Meet(members.clone()))?;
    let combined = model.ops.rel_transform(t, &model.params, base, combined)?;
    let singles = members
        .iter()
        .map(|m| {
            let r = emb.role_vec(t, m)?;
            Ok(model.ops.rel_transform(t, &model.params, base, r)?)
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    let both = model.ops.intersect(t, &model.params, &singles)?;
    Ok(model.ops.diff(t, combined, both)?)
}

/// Mean of [`conj_term`] over `mined`; `None` for an empty list.
pub fn conj_preserve_loss(t: &mut Tape, model: &Model, mined: &[&QueryInstance]) -> Result<Option<Var>, TrainError> {
    let mut emb = Embedder::new(model);
    let mut total: Option<Var> = None;
    for q in mined {
        let d = conj_term(t, &mut emb, q)?;
        total = Some(match total {
            None => d,
            Some(acc) => t.add(acc, d)?,
        });
    }
    Ok(total.map(|v| t.scale(v, 1.0 / mined.len() as f64)))
}

/// All `(e, {r, s})` and `(e, {r, s, t})` with a common successor of `e`,
/// as 2rs / 3rs instances answered on `kg`. At most `max_count` are kept,
/// chosen at random.
pub fn mine_rs_queries(
    kg: &KnowledgeGraph,
    max_count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<QueryInstance>, TrainError> {
    let mut by_pair: HashMap<(EntityId, EntityId), Vec<RelationId>> = HashMap::new();
    for &(h, r, t) in kg.triples() {
        by_pair.entry((h, t)).or_default().push(r);
    }
    let mut found: BTreeSet<(EntityId, Vec<RelationId>)> = BTreeSet::new();
    for ((h, _), rels) in by_pair {
        let k = rels.len();
        for i in 0..k {
            for j in i + 1..k {
                found.insert((h, vec![rels[i], rels[j]]));
                for l in j + 1..k {
                    found.insert((h, vec![rels[i], rels[j], rels[l]]));
                }
            }
        }
    }
    let mut found: Vec<_> = found.into_iter().collect();
    if found.len() > max_count {
        found.shuffle(rng);
        found.truncate(max_count);
    }
    found
        .into_iter()
        .enumerate()
        .map(|(i, (e, rels))| {
            let tag = if rels.len() == 2 { QueryType::Rs2 } else { QueryType::Rs3 };
            let names: Vec<&str> = rels.iter().map(|&r| kg.relation_name(r)).collect();
            let concept = QueryTemplate::new(tag).ground(&names, &[kg.entity_name(e)]);
            Ok(instance_from_concept(kg, kg, i as u64, tag, concept)?)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRow {
    pub step: usize,
    pub answer: f64,
    pub mono: f64,
    pub conj: f64,
    pub total: f64,
}

pub fn write_loss_csv(rows: &[LossRow], path: impl AsRef<Path>) -> Result<(), TrainError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "step,answer_loss,mono_loss,conj_loss,total")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.step, r.answer, r.mono, r.conj, r.total)?;
    }
    w.flush()?;
    Ok(())
}

/// The form of a query a model embeds: the relaxation for models trained
/// in relaxed mode.
pub fn model_form(model: &Model, c: &Concept) -> Concept {
    if model.meta.get("relaxed").and_then(|v| v.as_bool()) == Some(true) {
        relax(c)
    } else {
        c.clone()
    }
}

struct Example {
    query: usize,
    positive: usize,
}

/// Trains a fresh model on `data` (answers taken as easy ∪ hard).
///
/// Each step draws `batch_size` (query, answer) pairs uniformly and
/// minimises the mean answer loss plus `λ₁·mono + λ₂·conj`, where the
/// monotonicity term covers the meets of the batch (averaged per example)
/// and the conjunction term a fresh sample of mined 2rs/3rs queries.
/// Returns the model and one loss row per step, logged before the update.
pub fn train(
    kg_train: &KnowledgeGraph,
    data: &[QueryInstance],
    config: &TrainConfig,
) -> Result<(Model, Vec<LossRow>), TrainError> {
    config.validate()?;
    let mut model = Model::new(
        config.geometry,
        config.dim,
        kg_train.entities().names().to_vec(),
        kg_train.relations().names().to_vec(),
        config.geometry_config,
        &mut substream(config.seed, Stream::Init),
    );
    model.meta = serde_json::to_value(config).expect("config serialises");

    let (concepts, known, examples) = {
        let emb = Embedder::new(&model);
        let mut concepts = Vec::with_capacity(data.len());
        let mut known = Vec::with_capacity(data.len());
        let mut examples = Vec::new();
        for (qi, q) in data.iter().enumerate() {
            concepts.push(model_form(&model, &q.concept));
            let ids = q
                .answers()
                .into_iter()
                .map(|a| emb.entity(a))
                .collect::<Result<HashSet<usize>, _>>()?;
            let mut sorted: Vec<usize> = ids.iter().copied().collect();
            sorted.sort_unstable();
            examples.extend(sorted.into_iter().map(|positive| Example { query: qi, positive }));
            known.push(ids);
        }
        (concepts, known, examples)
    };
    if examples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mined = if config.lambda_conj > 0.0 && !config.relaxed {
        mine_rs_queries(kg_train, config.conj_pool, &mut substream(config.seed, Stream::Mining))?
    } else {
        Vec::new()
    };

    let mut batch_rng = substream(config.seed, Stream::Batch);
    let mut neg_rng = substream(config.seed, Stream::Negatives);
    let mut meet_rng = substream(config.seed, Stream::Meets);
    let mut conj_rng = substream(config.seed, Stream::Constraints);
    let mut adam = Adam::new(&model.params, config.learning_rate);
    let n = model.ops.n_entities;
    let mut rows = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let mut t = Tape::new();
        let mut emb = Embedder::new(&model);
        let mut answer_terms = Vec::with_capacity(config.batch_size);
        let mut sites = Vec::new();
        for _ in 0..config.batch_size {
            let ex = &examples[batch_rng.gen_range(0..examples.len())];
            let qs = if config.lambda_mono > 0.0 {
                emb.embed_with_meets(&mut t, &concepts[ex.query], &mut sites, &mut meet_rng)?
            } else {
                emb.embed(&mut t, &concepts[ex.query])?
            };
            let ns = sample_negatives(n, &known[ex.query], ex.positive, config.negatives, &mut neg_rng)?;
            let d_pos = score(&mut t, &model, ex.positive, &qs)?;
            let d_negs = ns
                .negatives
                .iter()
                .map(|&e| score(&mut t, &model, e, &qs))
                .collect::<Result<Vec<_>, _>>()?;
            answer_terms.push(answer_loss(&mut t, d_pos, &d_negs, config.margin)?);
        }
        let answer = t.concat(&answer_terms)?;
        let answer = t.sum(answer);
        let answer = t.scale(answer, 1.0 / config.batch_size as f64);
        let mut total = answer;
        let mut mono_value = 0.0;
        if let Some(m) = mono_loss(&mut t, &model, &sites)? {
            let m = t.scale(m, 1.0 / config.batch_size as f64);
            mono_value = t.item(m);
            let weighted = t.scale(m, config.lambda_mono);
            total = t.add(total, weighted)?;
        }
        let mut conj_value = 0.0;
        if !mined.is_empty() {
            let k = config.conj_batch.min(mined.len());
            let picked: Vec<&QueryInstance> = index::sample(&mut conj_rng, mined.len(), k)
                .into_iter()
                .map(|i| &mined[i])
                .collect();
            if let Some(c) = conj_preserve_loss(&mut t, &model, &picked)? {
                conj_value = t.item(c);
                let weighted = t.scale(c, config.lambda_conj);
                total = t.add(total, weighted)?;
            }
        }
        rows.push(LossRow {
            step,
            answer: t.item(answer),
            mono: mono_value,
            conj: conj_value,
            total: t.item(total),
        });
        let grads = t.backward(total)?;
        drop(emb);
        adam.step(&mut model.params, &grads);
    }
    Ok((model, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parse_concept;

    fn tiny_model(g: Geometry) -> Model {
        Model::new(
            g,
            4,
            ["Oscar", "x1", "w1"].map(String::from).to_vec(),
            ["wonBy", "edited", "produced"].map(String::from).to_vec(),
            GeometryConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(1),
        )
    }

    #[test]
    fn counts_for_the_oscar_query_and_its_relaxation() {
        let m = tiny_model(Geometry::Box);
        let d = parse_concept("exists (inv (edited & produced)) . (exists (inv wonBy) . {Oscar})").unwrap();
        let mut emb = Embedder::new(&m);
        let mut t = Tape::new();
        assert_eq!(emb.embed(&mut t, &d).unwrap().len(), 1);
        assert_eq!(
            emb.stats,
            EmbedStats {
                rel_transform: 2,
                rcombine: 1,
                ..Default::default()
            }
        );
        let mut emb = Embedder::new(&m);
        emb.embed(&mut t, &relax(&d)).unwrap();
        assert_eq!(
            emb.stats,
            EmbedStats {
                rel_transform: 4,
                intersect: 1,
                ..Default::default()
            }
        );
    }

    #[test]
    fn unknown_names_are_reported() {
        let m = tiny_model(Geometry::Box);
        let mut t = Tape::new();
        let c = parse_concept("exists nope . {Oscar}").unwrap();
        assert!(matches!(embed_query(&mut t, &m, &c), Err(TrainError::UnknownName(n)) if n == "nope"));
    }

    #[test]
    fn box_rejects_negation_and_beta_rejects_composition_in_meets() {
        let mut t = Tape::new();
        let c = parse_concept("not {Oscar}").unwrap();
        assert!(matches!(
            embed_query(&mut t, &tiny_model(Geometry::Box), &c),
            Err(TrainError::Geometry(GeometryError::UnsupportedNegation))
        ));
        let c = parse_concept("exists ((wonBy ; edited) & produced) . {w1}").unwrap();
        assert!(matches!(
            embed_query(&mut Tape::new(), &tiny_model(Geometry::Beta), &c),
            Err(TrainError::Geometry(GeometryError::UnsupportedComposition))
        ));
        // tapes cache parameter reads, so each model gets its own
        embed_query(&mut Tape::new(), &tiny_model(Geometry::Cone), &c).unwrap();
    }

    #[test]
    fn answer_loss_examples() {
        let mut t = Tape::new();
        let zero = t.scalar(0.0);
        let l = answer_loss(&mut t, zero, &[], 24.0).unwrap();
        assert!(t.item(l) < 1e-10);
        let at_margin = t.scalar(24.0);
        let far = t.scalar(1e3);
        let l = answer_loss(&mut t, far, &[at_margin], 24.0).unwrap();
        // the positive term is huge; subtract it to isolate the negative term
        let pos_only = answer_loss(&mut t, far, &[], 24.0).unwrap();
        assert!((t.item(l) - t.item(pos_only) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn negatives_are_distinct_non_answers() {
        let known: HashSet<usize> = [3, 10, 42].into();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ns = sample_negatives(100, &known, 3, 8, &mut rng).unwrap();
        let set: HashSet<usize> = ns.negatives.iter().copied().collect();
        assert_eq!(set.len(), 8);
        assert!(set.iter().all(|e| !known.contains(e)));
        let again = sample_negatives(100, &known, 3, 8, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(again, ns);
        assert!(matches!(
            sample_negatives(5, &known, 3, 5, &mut rng),
            Err(TrainError::TooFewEntities { needed: 5, available: 4 })
        ));
    }
}
