//! Synthetic knowledge graphs whose role meets are strictly tighter than
//! their tree-form relaxations.
//!
//! Entities sit on a line (in shuffled id order). Each relation links a
//! point to the points a few fixed offsets ahead: a short run of offsets
//! every relation has, then a private run of its own. So `r ⊓ s` is the
//! shared run while `∃r.C ⊓ ∃s.C` also picks up cross sums
//! `c + o_r = c' + o_s` from different members of `C`. Each relation only
//! leaves a random share of the points, edges are thinned to the target
//! size, and an optional share of uniform noise edges is mixed in. Being translations, the
//! structural edges are predictable from the rest, so held-out edges can
//! be recovered by a model.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kg::{KgBuilder, KnowledgeGraph};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_entities: usize,
    pub n_relations: usize,
    /// Approximate number of triples.
    pub target_triples: usize,
    /// Width of the offset run every relation has, starting at 1.
    pub shared: usize,
    /// Width of each relation's private offset run (runs are disjoint).
    pub own: usize,
    /// Share of entities each relation has out-edges from.
    pub active: f64,
    /// Share of triples that are uniform noise edges.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_entities: 200,
            n_relations: 6,
            target_triples: 2000,
            shared: 2,
            own: 3,
            active: 0.35,
            noise: 0.0,
            seed: 0,
        }
    }
}

/// Entities are named `e0, e1, ...` and relations `r0, r1, ...`.
pub fn synthetic_kg(cfg: &SynthConfig) -> KnowledgeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_entities;
    let mut at: Vec<usize> = (0..n).collect();
    at.shuffle(&mut rng);

    // a shared run 1..=shared, then one private run per relation
    let mut slots: Vec<usize> = (0..cfg.n_relations).collect();
    slots.shuffle(&mut rng);
    let offsets: Vec<Vec<usize>> = slots
        .iter()
        .map(|&k| {
            let start = cfg.shared + 1 + k * cfg.own;
            (1..=cfg.shared).chain(start..start + cfg.own).collect()
        })
        .collect();

    let mut base = Vec::new();
    for (r, offs) in offsets.iter().enumerate() {
        for p in 0..n {
            if !rng.gen_bool(cfg.active) {
                continue;
            }
            for &o in offs {
                if p + o < n {
                    base.push((at[p], r, at[p + o]));
                }
            }
        }
    }
    let n_noise = (cfg.noise * cfg.target_triples as f64).round() as usize;
    let keep = ((cfg.target_triples.saturating_sub(n_noise)) as f64 / base.len().max(1) as f64).min(1.0);

    let mut b = KgBuilder::new();
    for i in 0..n {
        b.add_entity(&format!("e{i}"));
    }
    for r in 0..cfg.n_relations {
        b.add_relation(&format!("r{r}"));
    }
    let add = |b: &mut KgBuilder, x: usize, r: usize, y: usize| {
        b.add(&format!("e{x}"), &format!("r{r}"), &format!("e{y}"));
    };
    for (x, r, y) in base {
        if rng.gen_bool(keep) {
            add(&mut b, x, r, y);
        }
    }
    for _ in 0..n_noise {
        let (x, y) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if x != y {
            add(&mut b, x, rng.gen_range(0..cfg.n_relations), y);
        }
    }
    b.build()
}

/// Training graph: `full` minus a random `fraction` of its triples, with
/// the same vocabulary.
pub fn holdout(full: &KnowledgeGraph, fraction: f64, seed: u64) -> KnowledgeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..full.num_triples()).collect();
    order.shuffle(&mut rng);
    let drop = (fraction * full.num_triples() as f64).round() as usize;
    let mut keep = vec![true; full.num_triples()];
    for &i in &order[..drop] {
        keep[i] = false;
    }
    let mut i = 0;
    full.subgraph(|_, _, _| {
        let k = keep[i];
        i += 1;
        k
    })
}
