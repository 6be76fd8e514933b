//! Random graphs and queries shared by the integration tests.
#![allow(dead_code)]

use dage::bench::{instantiate_template, QueryInstance, QueryTemplate, QueryType};
use dage::kg::{KgBuilder, KnowledgeGraph};
use dage::query::{Concept, Role};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Graph over `e0..` and `r0..`; every name is registered even when it
/// ends up in no triple.
pub fn random_kg(rng: &mut ChaCha8Rng, n_entities: usize, n_relations: usize, n_triples: usize) -> KnowledgeGraph {
    let mut b = KgBuilder::new();
    for i in 0..n_entities {
        b.add_entity(&format!("e{i}"));
    }
    for i in 0..n_relations {
        b.add_relation(&format!("r{i}"));
    }
    for _ in 0..n_triples {
        let h = rng.gen_range(0..n_entities);
        let r = rng.gen_range(0..n_relations);
        let t = rng.gen_range(0..n_entities);
        b.add(&format!("e{h}"), &format!("r{r}"), &format!("e{t}"));
    }
    b.build()
}

/// A small graph with the size limits of the oracle checks (at most 50
/// entities, 8 relations and 400 triples).
pub fn small_kg(rng: &mut ChaCha8Rng) -> KnowledgeGraph {
    let n = rng.gen_range(5..=50);
    let m = rng.gen_range(1..=8);
    let t = rng.gen_range(n..=400);
    random_kg(rng, n, m, t)
}

pub fn random_role(rng: &mut ChaCha8Rng, n_relations: usize, depth: usize) -> Role {
    let leaf = |rng: &mut ChaCha8Rng| Role::name(format!("r{}", rng.gen_range(0..n_relations)));
    if depth == 0 {
        return leaf(rng);
    }
    match rng.gen_range(0..5) {
        0 | 1 => leaf(rng),
        2 => random_role(rng, n_relations, depth - 1).inv(),
        3 => Role::compose(
            random_role(rng, n_relations, depth - 1),
            random_role(rng, n_relations, depth - 1),
        ),
        _ => {
            let k = rng.gen_range(2..=3);
            Role::Meet((0..k).map(|_| random_role(rng, n_relations, depth - 1)).collect())
        }
    }
}

pub fn random_concept(
    rng: &mut ChaCha8Rng,
    n_entities: usize,
    n_relations: usize,
    depth: usize,
    negation: bool,
) -> Concept {
    let leaf = |rng: &mut ChaCha8Rng| Concept::nominal(format!("e{}", rng.gen_range(0..n_entities)));
    if depth == 0 {
        return leaf(rng);
    }
    let sub = |rng: &mut ChaCha8Rng| random_concept(rng, n_entities, n_relations, depth - 1, negation);
    match rng.gen_range(0..7) {
        0 => leaf(rng),
        1 | 2 => {
            let role = random_role(rng, n_relations, 2);
            Concept::exists(role, sub(rng))
        }
        3 => Concept::and(vec![sub(rng), sub(rng)]),
        4 => Concept::or(vec![sub(rng), sub(rng)]),
        5 if negation => Concept::not(sub(rng)),
        _ => {
            let role = random_role(rng, n_relations, 1);
            Concept::exists(role, sub(rng))
        }
    }
}

/// Up to `count` sampled instances per benchmark type on `kg`.
pub fn sampled_queries(kg: &KnowledgeGraph, rng: &mut ChaCha8Rng, count: usize) -> Vec<QueryInstance> {
    let mut out = Vec::new();
    for tag in QueryType::BENCHMARK {
        let template = QueryTemplate::new(tag);
        let mut found = 0;
        for _ in 0..count * 50 {
            if found == count {
                break;
            }
            if let Ok(q) = instantiate_template(kg, &template, rng) {
                out.push(q);
                found += 1;
            }
        }
    }
    out
}
