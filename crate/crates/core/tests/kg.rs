mod common;

use dage::kg::{KgBuilder, KnowledgeGraph, RelationId};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::random_kg;

fn tsv(kg: &KnowledgeGraph) -> Vec<u8> {
    let mut text = Vec::new();
    kg.write_tsv(&mut text).unwrap();
    text
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn indexes_agree_with_triples(seed in any::<u64>(), n in 2usize..40, m in 1usize..6, t in 0usize..300) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kg = random_kg(&mut rng, n, m, t);
        for &(h, r, tail) in kg.triples() {
            prop_assert!(kg.query_edges(h, r, false).unwrap().contains(&tail));
            prop_assert!(kg.query_edges(tail, r, true).unwrap().contains(&h));
        }
        let pairs: usize = (0..m as u32).map(|r| kg.relation_pairs(RelationId(r)).unwrap().len()).sum();
        prop_assert_eq!(pairs, kg.num_triples());
        prop_assert_eq!(kg.index_sizes(), (kg.num_triples(), kg.num_triples()));
        let mut sorted = kg.triples().to_vec();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), kg.num_triples());
    }

    #[test]
    fn loading_twice_gives_the_same_ids(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let text = tsv(&random_kg(&mut rng, 20, 4, 60));
        let kg = KnowledgeGraph::read(text.as_slice(), KgBuilder::new()).unwrap();
        let again = KnowledgeGraph::read(text.as_slice(), KgBuilder::new()).unwrap();
        prop_assert!(again.same_vocabulary(&kg));
        prop_assert_eq!(again.triples(), kg.triples());
        for (i, name) in kg.entities().names().iter().enumerate() {
            prop_assert_eq!(kg.entity_id(name).unwrap().index(), i);
        }
    }
}
