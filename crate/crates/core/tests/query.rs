mod common;

use std::collections::BTreeSet;

use dage::kg::KnowledgeGraph;
use dage::oracle::{eval_concept, eval_graph, eval_role_pairs, overlap_ratio, AnswerSet};
use dage::query::{
    build_computation_graph, normalize_role, parse_concept, parse_role, relax, render_concept, role_paths, Concept,
    NodeLabel, Role,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{random_concept, random_role, small_kg};

fn r(n: &str) -> Role {
    Role::name(n)
}

fn names(kg: &KnowledgeGraph, s: &AnswerSet) -> BTreeSet<String> {
    s.iter().map(|&e| kg.entity_name(e).to_owned()).collect()
}

fn distinct_leaves(role: &Role, next: &mut usize) -> Role {
    match role {
        Role::Name(_) => {
            *next += 1;
            r(&format!("p{next}"))
        }
        Role::Inverse(x) => distinct_leaves(x, next).inv(),
        Role::Compose(a, b) => {
            let a = distinct_leaves(a, next);
            Role::compose(a, distinct_leaves(b, next))
        }
        Role::Meet(ms) => Role::Meet(ms.iter().map(|m| distinct_leaves(m, next)).collect()),
    }
}

fn kg(triples: &[(&str, &str, &str)]) -> KnowledgeGraph {
    KnowledgeGraph::from_triples(triples.iter().copied())
}

#[test]
fn answer_of_inverse_role() {
    let g = kg(&[("b", "r", "a")]);
    let c = parse_concept("exists r.{a}").unwrap();
    assert_eq!(names(&g, &eval_concept(&g, &c).unwrap()), BTreeSet::from(["b".to_owned()]));
}

#[test]
fn meet_is_tighter_than_its_relaxation() {
    // x reaches a by r through y1 and by s through y2, never by both through
    // the same intermediate
    let g = kg(&[
        ("x", "t", "y1"),
        ("x", "t", "y2"),
        ("y1", "r", "a"),
        ("y2", "s", "a"),
        ("z", "t", "w"),
        ("w", "r", "a"),
        ("w", "s", "a"),
    ]);
    let q = parse_concept("exists (t ; (r & s)).{a}").unwrap();
    let dag = names(&g, &eval_concept(&g, &q).unwrap());
    let tree = names(&g, &eval_concept(&g, &relax(&q)).unwrap());
    assert_eq!(dag, BTreeSet::from(["z".to_owned()]));
    assert_eq!(tree, BTreeSet::from(["x".to_owned(), "z".to_owned()]));
}

#[test]
fn relaxation_of_templates() {
    let two_s = parse_concept("exists inv (r1 ; (r2 & r3)).{e1}").unwrap();
    assert_eq!(
        relax(&two_s),
        parse_concept("exists (inv r2 ; inv r1).{e1} & exists (inv r3 ; inv r1).{e1}").unwrap()
    );
    let sp = parse_concept("exists inv (r1 ; (r2 & r3) ; r4).{e1}").unwrap();
    assert_eq!(
        relax(&sp),
        parse_concept("exists (inv r4 ; (inv r2 ; inv r1)).{e1} & exists (inv r4 ; (inv r3 ; inv r1)).{e1}").unwrap()
    );
}

#[test]
fn role_paths_distribute_meets() {
    let role = parse_role("a ; (b & c) ; d").unwrap();
    assert_eq!(role_paths(&role).len(), 2);
    assert_eq!(role_paths(&parse_role("(a & b) ; (c & d & e)").unwrap()).len(), 6);
    assert_eq!(role_paths(&parse_role("inv (a ; b)").unwrap()).len(), 1);
}

#[test]
fn overlap_of_three_in_four() {
    let g = kg(&[("a", "r", "b"), ("c", "r", "d")]);
    let set = |ns: &[&str]| ns.iter().map(|n| g.entity_id(n).unwrap()).collect::<AnswerSet>();
    assert_eq!(overlap_ratio(&set(&["a", "b", "c"]), &set(&["a", "b", "c", "d"])), 0.75);
    assert_eq!(overlap_ratio(&AnswerSet::new(), &AnswerSet::new()), 1.0);
}

#[test]
fn unknown_names_are_errors() {
    let g = kg(&[("a", "r", "b")]);
    assert!(eval_concept(&g, &parse_concept("exists q.{a}").unwrap()).is_err());
    assert!(eval_concept(&g, &parse_concept("{nobody}").unwrap()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn render_then_parse_is_identity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_concept(&mut rng, 6, 4, 3, true);
        prop_assert_eq!(parse_concept(&render_concept(&c)).unwrap(), c);
    }

    #[test]
    fn relaxation_is_sound_and_tree_form(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = small_kg(&mut rng);
        let c = random_concept(&mut rng, g.num_entities(), g.num_relations(), 3, false);
        let t = relax(&c);
        prop_assert!(t.is_tree_form());
        let dag = eval_concept(&g, &c).unwrap();
        let tree = eval_concept(&g, &t).unwrap();
        prop_assert!(dag.is_subset(&tree));
    }

    #[test]
    fn relaxation_of_any_concept_is_tree_form(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert!(relax(&random_concept(&mut rng, 5, 5, 4, true)).is_tree_form());
    }

    #[test]
    fn normalization_keeps_pair_semantics(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = small_kg(&mut rng);
        let role = random_role(&mut rng, g.num_relations(), 3);
        prop_assert_eq!(
            eval_role_pairs(&g, &normalize_role(&role)).unwrap(),
            eval_role_pairs(&g, &role).unwrap()
        );
    }

    // paths are deduplicated, so `r & r` has one; leaves are renamed apart
    #[test]
    fn one_path_exactly_for_meet_free_roles(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let role = distinct_leaves(&random_role(&mut rng, 4, 3), &mut 0);
        prop_assert_eq!(role_paths(&normalize_role(&role)).len() == 1, role.is_meet_free());
    }

    #[test]
    fn tree_form_graphs_are_trees(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = relax(&random_concept(&mut rng, 5, 4, 3, true));
        let g = build_computation_graph(&c);
        prop_assert!(g.labels().iter().all(|l| *l != NodeLabel::Meet));
        // every node feeds at most one consumer
        let mut fan_out = vec![0usize; g.len()];
        for &(from, _) in g.edges() {
            fan_out[from] += 1;
        }
        prop_assert!(fan_out.iter().all(|&n| n <= 1));
    }

    #[test]
    fn both_evaluators_agree(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kg = small_kg(&mut rng);
        let c = random_concept(&mut rng, kg.num_entities(), kg.num_relations(), 3, true);
        let g = build_computation_graph(&c);
        prop_assert!(g.validate().is_ok());
        prop_assert_eq!(eval_graph(&kg, &g).unwrap(), eval_concept(&kg, &c).unwrap());
    }

    #[test]
    fn double_negation(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kg = small_kg(&mut rng);
        let c = random_concept(&mut rng, kg.num_entities(), kg.num_relations(), 2, true);
        prop_assert_eq!(
            eval_concept(&kg, &Concept::not(Concept::not(c.clone()))).unwrap(),
            eval_concept(&kg, &c).unwrap()
        );
    }

    #[test]
    fn meet_tautologies(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kg = small_kg(&mut rng);
        let a = random_role(&mut rng, kg.num_relations(), 2);
        let b = random_role(&mut rng, kg.num_relations(), 2);
        let ab = eval_role_pairs(&kg, &Role::meet(vec![a.clone(), b.clone()])).unwrap();
        let ba = eval_role_pairs(&kg, &Role::meet(vec![b.clone(), a.clone()])).unwrap();
        prop_assert_eq!(&ab, &ba);
        prop_assert!(ab.is_subset(&eval_role_pairs(&kg, &a).unwrap()));

        let n = kg.num_relations();
        let (x, y) = (r(&format!("r{}", seed as usize % n)), r(&format!("r{}", (seed as usize / 7) % n)));
        let e = Concept::nominal(format!("e{}", (seed as usize / 3) % kg.num_entities()));
        let meet = Concept::exists(Role::meet(vec![x.clone(), y.clone()]).inv(), e.clone());
        let lhs = eval_concept(&kg, &meet).unwrap();
        let rx = eval_concept(&kg, &Concept::exists(x.inv(), e.clone())).unwrap();
        let ry = eval_concept(&kg, &Concept::exists(y.inv(), e)).unwrap();
        prop_assert_eq!(lhs, rx.intersection(&ry).copied().collect::<AnswerSet>());
    }
}
