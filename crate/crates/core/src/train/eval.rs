use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use crate::autodiff::Tape;
use crate::bench::{overlap_bucket, QueryInstance, QueryType, BUCKET_LABELS};
use crate::geometry::Model;

use super::{model_form, score, Embedder, TrainError};

/// Distance of every entity to the query, indexed by entity id.
pub fn entity_scores(model: &Model, q: &QueryInstance) -> Result<Vec<f64>, TrainError> {
    let mut t = Tape::new();
    let mut emb = Embedder::new(model);
    let qs = emb.embed(&mut t, &model_form(model, &q.concept))?;
    (0..model.ops.n_entities)
        .map(|e| {
            let d = score(&mut t, model, e, &qs)?;
            Ok(t.item(d))
        })
        .collect()
}

/// Scores of a model that cannot tell entities apart; ties fall back to id
/// order.
pub fn constant_scores(n_entities: usize) -> Vec<f64> {
    vec![0.0; n_entities]
}

/// Rank of each `target` among all entities by ascending score, ties broken
/// by id. Entities in `filter` other than the target itself are skipped.
pub fn rank_answers(scores: &[f64], filter: &HashSet<usize>, targets: &[usize]) -> Vec<usize> {
    targets
        .iter()
        .map(|&a| {
            let sa = scores[a];
            1 + scores
                .iter()
                .enumerate()
                .filter(|&(e, &s)| e != a && !filter.contains(&e) && (s < sa || (s == sa && e < a)))
                .count()
        })
        .collect()
}

/// Mean reciprocal rank; 0 for no ranks.
pub fn mrr(ranks: &[usize]) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TypeScore {
    pub mrr: f64,
    /// Number of (query, hard answer) pairs.
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MrrReport {
    pub per_type: BTreeMap<QueryType, TypeScore>,
    /// Indexed like [`BUCKET_LABELS`].
    pub buckets: [TypeScore; 4],
    /// Over all pairs of the split.
    pub overall: TypeScore,
}

/// MRR of `model` over the hard answers of `split`. Filtered unless `raw`.
pub fn evaluate(model: &Model, split: &[QueryInstance], raw: bool) -> Result<MrrReport, TrainError> {
    evaluate_with(model, split, raw, |q| entity_scores(model, q))
}

/// [`evaluate`] with scores supplied by `scores_of`; `model` only resolves
/// entity names.
pub fn evaluate_with(
    model: &Model,
    split: &[QueryInstance],
    raw: bool,
    mut scores_of: impl FnMut(&QueryInstance) -> Result<Vec<f64>, TrainError>,
) -> Result<MrrReport, TrainError> {
    let emb = Embedder::new(model);
    let ids = |names: &std::collections::BTreeSet<String>| {
        names.iter().map(|n| emb.entity(n)).collect::<Result<Vec<usize>, _>>()
    };
    let mut by_type: BTreeMap<QueryType, Vec<usize>> = BTreeMap::new();
    let mut by_bucket: [Vec<usize>; 4] = Default::default();
    let mut all = Vec::new();
    for q in split {
        let hard = ids(&q.hard_answers)?;
        if hard.is_empty() {
            continue;
        }
        let filter: HashSet<usize> = if raw {
            HashSet::new()
        } else {
            ids(&q.easy_answers)?.into_iter().chain(hard.iter().copied()).collect()
        };
        let ranks = rank_answers(&scores_of(q)?, &filter, &hard);
        by_type.entry(q.tag).or_default().extend(&ranks);
        by_bucket[overlap_bucket(q.overlap)].extend(&ranks);
        all.extend(ranks);
    }
    let summarize = |r: &[usize]| TypeScore {
        mrr: mrr(r),
        count: r.len(),
    };
    Ok(MrrReport {
        per_type: by_type.iter().map(|(&k, v)| (k, summarize(v))).collect(),
        buckets: [0, 1, 2, 3].map(|i| summarize(&by_bucket[i])),
        overall: summarize(&all),
    })
}

/// `type,mrr,count` rows followed by a `bucket,mrr,count` section.
pub fn report_csv(report: &MrrReport) -> String {
    let mut out = String::from("type,mrr,count\n");
    for (tag, s) in &report.per_type {
        let _ = writeln!(out, "{tag},{},{}", s.mrr, s.count);
    }
    let _ = writeln!(out, "all,{},{}", report.overall.mrr, report.overall.count);
    out.push_str("\nbucket,mrr,count\n");
    for (label, s) in BUCKET_LABELS.iter().zip(&report.buckets) {
        if s.count == 0 {
            let _ = writeln!(out, "{label},,0");
        } else {
            let _ = writeln!(out, "{label},{},{}", s.mrr, s.count);
        }
    }
    out
}

const TABLE_TYPES: [QueryType; 5] = [QueryType::S2, QueryType::S3, QueryType::Sp, QueryType::Is, QueryType::Us];

/// One-row table in the usual layout: `2s,3s,sp,is,us,Avg_nn,ins,Avg`.
/// Averages are over the per-type MRRs that are present; `ins` and `Avg`
/// stay empty for geometries without negation.
pub fn report_tables(report: &MrrReport, supports_negation: bool) -> String {
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
    let mean = |xs: &[f64]| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    let get = |t: QueryType| report.per_type.get(&t).filter(|s| s.count > 0).map(|s| s.mrr);

    let nn: Vec<f64> = TABLE_TYPES.iter().filter_map(|&t| get(t)).collect();
    let mut cells: Vec<String> = TABLE_TYPES.iter().map(|&t| cell(get(t))).collect();
    cells.push(cell(mean(&nn)));
    if supports_negation {
        let ins = get(QueryType::Ins);
        let mut every = nn.clone();
        every.extend(ins);
        cells.push(cell(ins));
        cells.push(cell(mean(&every)));
    } else {
        cells.push(String::new());
        cells.push(String::new());
    }
    format!("2s,3s,sp,is,us,Avg_nn,ins,Avg\n{}\n", cells.join(","))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mrr_of_one_two_four() {
        assert!((mrr(&[1, 2, 4]) - 7.0 / 12.0).abs() < 1e-12);
        assert_eq!(mrr(&[1, 1, 1]), 1.0);
    }

    #[test]
    fn ranking_examples() {
        let none = HashSet::new();
        assert_eq!(rank_answers(&[0.5, 0.1, 0.9], &none, &[1]), vec![1]);
        assert_eq!(rank_answers(&[0.0; 5], &none, &[0, 3]), vec![1, 4]);
        // entity 0 is a better-scoring easy answer
        let scores = [0.0, 0.3, 0.2, 0.1];
        assert_eq!(rank_answers(&scores, &none, &[2]), vec![3]);
        assert_eq!(rank_answers(&scores, &[0, 2].into(), &[2]), vec![2]);
    }

    #[test]
    fn box_table_leaves_negation_cells_empty() {
        let mut r = MrrReport::default();
        r.per_type.insert(QueryType::S2, TypeScore { mrr: 0.5, count: 3 });
        r.per_type.insert(QueryType::Is, TypeScore { mrr: 0.25, count: 1 });
        assert_eq!(
            report_tables(&r, false),
            "2s,3s,sp,is,us,Avg_nn,ins,Avg\n0.5000,,,0.2500,,0.3750,,\n"
        );
        r.per_type.insert(QueryType::Ins, TypeScore { mrr: 0.0, count: 2 });
        assert_eq!(
            report_tables(&r, true),
            "2s,3s,sp,is,us,Avg_nn,ins,Avg\n0.5000,,,0.2500,,0.3750,0.0000,0.2500\n"
        );
    }
}
