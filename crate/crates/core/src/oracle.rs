//! Exact set-semantics evaluation of DAG queries under domain closure.
//!
//! Two independent evaluators are provided: [`eval_concept`] recurses over
//! the AST and walks roles backwards from the argument set, and
//! [`eval_graph`] evaluates a [`ComputationGraph`] bottom-up in topological
//! order, evaluating each meet once per value of its fork node.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::kg::{EntityId, KnowledgeGraph, RelationId};
use crate::query::{ComputationGraph, Concept, GraphError, NodeLabel, Role};

pub type AnswerSet = BTreeSet<EntityId>;
pub type PairSet = BTreeSet<(EntityId, EntityId)>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("unknown name '{0}'")]
    UnknownName(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn entity(kg: &KnowledgeGraph, name: &str) -> Result<EntityId, OracleError> {
    kg.entity_id(name)
        .ok_or_else(|| OracleError::UnknownName(name.to_owned()))
}

fn relation(kg: &KnowledgeGraph, name: &str) -> Result<RelationId, OracleError> {
    kg.relation_id(name)
        .ok_or_else(|| OracleError::UnknownName(name.to_owned()))
}

fn all(kg: &KnowledgeGraph) -> AnswerSet {
    kg.all_entities().collect()
}

/// Answers of `c` over `kg`.
pub fn eval_concept(kg: &KnowledgeGraph, c: &Concept) -> Result<AnswerSet, OracleError> {
    match c {
        Concept::Nominal(a) => Ok(BTreeSet::from([entity(kg, a)?])),
        Concept::Not(x) => {
            let inner = eval_concept(kg, x)?;
            Ok(all(kg).difference(&inner).copied().collect())
        }
        Concept::And(xs) => {
            let mut it = xs.iter();
            let mut acc = match it.next() {
                Some(x) => eval_concept(kg, x)?,
                None => return Ok(all(kg)),
            };
            for x in it {
                if acc.is_empty() {
                    // still resolve names so unknown names are reported
                    eval_concept(kg, x)?;
                    continue;
                }
                let s = eval_concept(kg, x)?;
                acc.retain(|e| s.contains(e));
            }
            Ok(acc)
        }
        Concept::Or(xs) => {
            let mut acc = AnswerSet::new();
            for x in xs {
                acc.extend(eval_concept(kg, x)?);
            }
            Ok(acc)
        }
        Concept::Exists(r, x) => {
            let arg = eval_concept(kg, x)?;
            preimage(kg, r, &arg)
        }
    }
}

/// `{u | exists v in targets: (u, v) in r}`.
pub fn preimage(kg: &KnowledgeGraph, r: &Role, targets: &AnswerSet) -> Result<AnswerSet, OracleError> {
    match r {
        Role::Name(n) => {
            let rel = relation(kg, n)?;
            Ok(targets
                .iter()
                .flat_map(|&v| kg.neighbours(v, rel, true).iter().copied())
                .collect())
        }
        Role::Inverse(inner) => image(kg, inner, targets),
        Role::Compose(a, b) => {
            let mid = preimage(kg, b, targets)?;
            preimage(kg, a, &mid)
        }
        Role::Meet(ms) => meet_walk(kg, ms, targets, preimage),
    }
}

/// `{v | exists u in sources: (u, v) in r}`.
pub fn image(kg: &KnowledgeGraph, r: &Role, sources: &AnswerSet) -> Result<AnswerSet, OracleError> {
    match r {
        Role::Name(n) => {
            let rel = relation(kg, n)?;
            Ok(sources
                .iter()
                .flat_map(|&u| kg.neighbours(u, rel, false).iter().copied())
                .collect())
        }
        Role::Inverse(inner) => preimage(kg, inner, sources),
        Role::Compose(a, b) => {
            let mid = image(kg, a, sources)?;
            image(kg, b, &mid)
        }
        Role::Meet(ms) => meet_walk(kg, ms, sources, image),
    }
}

type Walk = fn(&KnowledgeGraph, &Role, &AnswerSet) -> Result<AnswerSet, OracleError>;

// A meet must be satisfied by a single endpoint, so each endpoint is walked
// separately; the set-level walk first narrows the candidates.
fn meet_walk(
    kg: &KnowledgeGraph,
    members: &[Role],
    ends: &AnswerSet,
    walk: Walk,
) -> Result<AnswerSet, OracleError> {
    let mut candidates: Option<AnswerSet> = None;
    for m in members {
        let s = walk(kg, m, ends)?;
        candidates = Some(match candidates {
            None => s,
            Some(c) => c.intersection(&s).copied().collect(),
        });
    }
    let candidates = candidates.unwrap_or_default();
    let mut out = AnswerSet::new();
    if candidates.is_empty() {
        return Ok(out);
    }
    for &v in ends {
        let single = BTreeSet::from([v]);
        let mut acc = candidates.clone();
        for m in members {
            let s = walk(kg, m, &single)?;
            acc.retain(|e| s.contains(e));
            if acc.is_empty() {
                break;
            }
        }
        out.extend(acc);
    }
    Ok(out)
}

/// All pairs related by `r`.
pub fn eval_role_pairs(kg: &KnowledgeGraph, r: &Role) -> Result<PairSet, OracleError> {
    match r {
        Role::Name(n) => {
            let rel = relation(kg, n)?;
            Ok(kg
                .relation_pairs(rel)
                .expect("resolved relation id")
                .iter()
                .copied()
                .collect())
        }
        Role::Inverse(inner) => Ok(eval_role_pairs(kg, inner)?
            .into_iter()
            .map(|(u, v)| (v, u))
            .collect()),
        Role::Compose(a, b) => {
            let left = eval_role_pairs(kg, a)?;
            let right = eval_role_pairs(kg, b)?;
            let mut by_head: HashMap<EntityId, Vec<EntityId>> = HashMap::new();
            for (w, v) in right {
                by_head.entry(w).or_default().push(v);
            }
            let mut out = PairSet::new();
            for (u, w) in left {
                if let Some(vs) = by_head.get(&w) {
                    out.extend(vs.iter().map(|&v| (u, v)));
                }
            }
            Ok(out)
        }
        Role::Meet(ms) => {
            let mut it = ms.iter();
            let mut acc = match it.next() {
                Some(m) => eval_role_pairs(kg, m)?,
                None => PairSet::new(),
            };
            for m in it {
                let s = eval_role_pairs(kg, m)?;
                acc.retain(|p| s.contains(p));
            }
            Ok(acc)
        }
    }
}

/// Jaccard overlap `|A ∩ B| / |A ∪ B|`; 1.0 when both are empty.
pub fn overlap_ratio(a: &AnswerSet, b: &AnswerSet) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Answers of the query whose computation graph is `g`.
pub fn eval_graph(kg: &KnowledgeGraph, g: &ComputationGraph) -> Result<AnswerSet, OracleError> {
    let order = g.topo_order()?;
    let ev = GraphEval {
        kg,
        g,
        preds: g.predecessors(),
        order,
    };
    let mut values = ev.run(None, None)?;
    Ok(values.remove(&g.target()).unwrap_or_default())
}

struct GraphEval<'a> {
    kg: &'a KnowledgeGraph,
    g: &'a ComputationGraph,
    preds: Vec<Vec<usize>>,
    order: Vec<usize>,
}

impl GraphEval<'_> {
    /// Evaluates nodes in topological order up to (excluding) `stop`. With
    /// `pinned = (n, e)`, node `n` takes the value `{e}` and only its
    /// descendants are computed.
    fn run(
        &self,
        pinned: Option<(usize, EntityId)>,
        stop: Option<usize>,
    ) -> Result<HashMap<usize, AnswerSet>, OracleError> {
        let mut values: HashMap<usize, AnswerSet> = HashMap::new();
        let mut started = pinned.is_none();
        for &node in &self.order {
            if Some(node) == stop {
                break;
            }
            if let Some((p, e)) = pinned {
                if node == p {
                    values.insert(node, BTreeSet::from([e]));
                    started = true;
                    continue;
                }
                // only descendants of the pinned node matter
                if !started || !self.preds[node].iter().all(|i| values.contains_key(i)) {
                    continue;
                }
            }
            let v = self.node_value(node, &values)?;
            values.insert(node, v);
        }
        Ok(values)
    }

    fn node_value(&self, node: usize, values: &HashMap<usize, AnswerSet>) -> Result<AnswerSet, OracleError> {
        let preds = &self.preds[node];
        let input = |i: usize| &values[&preds[i]];
        Ok(match self.g.label(node) {
            NodeLabel::Nominal(a) => BTreeSet::from([entity(self.kg, a)?]),
            NodeLabel::ExistsRole { relation: name, inverse } => {
                let rel = relation(self.kg, name)?;
                // exists r . S walks r backwards; exists r^- . S forwards
                input(0)
                    .iter()
                    .flat_map(|&v| self.kg.neighbours(v, rel, !inverse).iter().copied())
                    .collect()
            }
            NodeLabel::Not => all(self.kg).difference(input(0)).copied().collect(),
            NodeLabel::And => {
                let mut acc = input(0).clone();
                for i in 1..preds.len() {
                    acc.retain(|e| input(i).contains(e));
                }
                acc
            }
            NodeLabel::Or => (0..preds.len()).flat_map(|i| input(i).iter().copied()).collect(),
            NodeLabel::Meet => {
                let fork = self.g.fork_of(node).expect("meet node records its fork");
                let mut out = AnswerSet::new();
                for &f in &values[&fork] {
                    let branch = self.run(Some((fork, f)), Some(node))?;
                    let mut acc = branch[&preds[0]].clone();
                    for p in &preds[1..] {
                        acc.retain(|e| branch[p].contains(e));
                    }
                    out.extend(acc);
                }
                out
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::{build_computation_graph, normalize_role, parse_concept, parse_role, relax};

    fn oscar_kg() -> KnowledgeGraph {
        KnowledgeGraph::from_triples([
            ("Oscar", "wonBy", "x1"),
            ("Oscar", "wonBy", "x2"),
            ("Oscar", "wonBy", "x3"),
            ("x1", "edited", "w1"),
            ("x1", "produced", "w1"),
            ("x2", "edited", "w2"),
            ("x3", "produced", "w2"),
        ])
    }

    fn names(kg: &KnowledgeGraph, s: &AnswerSet) -> Vec<String> {
        s.iter().map(|&e| kg.entity_name(e).to_owned()).collect()
    }

    // Brute force: enumerate every entity pair against Table-1 semantics
    // through explicit pair sets, independent of both evaluators.
    fn brute(kg: &KnowledgeGraph, c: &Concept) -> AnswerSet {
        match c {
            Concept::Nominal(a) => BTreeSet::from([kg.entity_id(a).unwrap()]),
            Concept::Not(x) => {
                let s = brute(kg, x);
                kg.all_entities().filter(|e| !s.contains(e)).collect()
            }
            Concept::And(xs) => {
                let sets: Vec<_> = xs.iter().map(|x| brute(kg, x)).collect();
                kg.all_entities()
                    .filter(|e| sets.iter().all(|s| s.contains(e)))
                    .collect()
            }
            Concept::Or(xs) => xs.iter().flat_map(|x| brute(kg, x)).collect(),
            Concept::Exists(r, x) => {
                let s = brute(kg, x);
                let pairs = eval_role_pairs(kg, r).unwrap();
                kg.all_entities()
                    .filter(|&u| kg.all_entities().any(|v| s.contains(&v) && pairs.contains(&(u, v))))
                    .collect()
            }
        }
    }

    const D: &str = "exists (inv (edited & produced)) . (exists (inv wonBy) . {Oscar})";

    #[test]
    fn d_on_oscar_graph() {
        let kg = oscar_kg();
        let d = parse_concept(D).unwrap();
        let expected = brute(&kg, &d);
        assert_eq!(names(&kg, &expected), vec!["w1"]);
        assert_eq!(eval_concept(&kg, &d).unwrap(), expected);
        assert_eq!(eval_graph(&kg, &build_computation_graph(&d)).unwrap(), expected);
    }

    #[test]
    fn relaxed_d_on_oscar_graph() {
        let kg = oscar_kg();
        let c = relax(&parse_concept(D).unwrap());
        let expected = brute(&kg, &c);
        assert_eq!(names(&kg, &expected), vec!["w1", "w2"]);
        assert_eq!(eval_concept(&kg, &c).unwrap(), expected);
        assert_eq!(eval_graph(&kg, &build_computation_graph(&c)).unwrap(), expected);
    }

    #[test]
    fn complement_uses_domain_closure() {
        let kg = KnowledgeGraph::from_triples([("a", "r", "b"), ("b", "r", "c")]);
        let s = eval_concept(&kg, &parse_concept("not {a}").unwrap()).unwrap();
        assert_eq!(names(&kg, &s), vec!["b", "c"]);
    }

    #[test]
    fn role_pair_examples() {
        let kg = KnowledgeGraph::from_triples([("a", "r", "b")]);
        let id = |n| kg.entity_id(n).unwrap();
        assert_eq!(
            eval_role_pairs(&kg, &parse_role("inv r").unwrap()).unwrap(),
            PairSet::from([(id("b"), id("a"))])
        );

        let kg = KnowledgeGraph::from_triples([("a", "r", "b"), ("b", "s", "c")]);
        let id = |n| kg.entity_id(n).unwrap();
        assert_eq!(
            eval_role_pairs(&kg, &parse_role("r ; s").unwrap()).unwrap(),
            PairSet::from([(id("a"), id("c"))])
        );

        let kg = KnowledgeGraph::from_triples([("a", "r", "b"), ("a", "s", "b"), ("a", "r", "c")]);
        let id = |n| kg.entity_id(n).unwrap();
        assert_eq!(
            eval_role_pairs(&kg, &parse_role("r & s").unwrap()).unwrap(),
            PairSet::from([(id("a"), id("b"))])
        );
    }

    #[test]
    fn unknown_names_are_errors() {
        let kg = oscar_kg();
        assert_eq!(
            eval_concept(&kg, &parse_concept("{Emmy}").unwrap()),
            Err(OracleError::UnknownName("Emmy".into()))
        );
        assert_eq!(
            eval_concept(&kg, &parse_concept("exists directed . {Oscar}").unwrap()),
            Err(OracleError::UnknownName("directed".into()))
        );
        assert!(eval_role_pairs(&kg, &parse_role("inv nope").unwrap()).is_err());
    }

    #[test]
    fn overlap_examples() {
        let s = |v: &[u32]| v.iter().map(|&i| EntityId(i)).collect::<AnswerSet>();
        assert_eq!(overlap_ratio(&s(&[0, 1, 2]), &s(&[0, 1, 2, 3])), 0.75);
        assert_eq!(overlap_ratio(&s(&[4, 5]), &s(&[4, 5])), 1.0);
        assert_eq!(overlap_ratio(&s(&[0]), &s(&[1])), 0.0);
        assert_eq!(overlap_ratio(&s(&[]), &s(&[])), 1.0);
    }

    #[test]
    fn nested_meets_and_compositions() {
        let kg = KnowledgeGraph::from_triples([
            ("a", "p", "b"),
            ("a", "q", "b"),
            ("b", "r", "c"),
            ("b", "s", "c"),
            ("a", "p", "d"),
            ("d", "r", "c"),
            ("e", "q", "d"),
            ("d", "s", "c"),
        ]);
        for text in [
            "exists ((p & q) ; (r & s)) . {c}",
            "exists (p ; r & q ; s) . {c}",
            "exists inv ((p & q) ; r) . {a}",
            "exists (inv (p ; (r & s)) & inv (q ; s)) . {a}",
            "not exists (p & q) . (exists r . {c} | {d})",
        ] {
            let c = parse_concept(text).unwrap();
            let expected = brute(&kg, &c);
            assert_eq!(eval_concept(&kg, &c).unwrap(), expected, "{text}");
            assert_eq!(
                eval_graph(&kg, &build_computation_graph(&c)).unwrap(),
                expected,
                "{text}"
            );
            if let Concept::Exists(r, _) = &c {
                assert_eq!(
                    eval_role_pairs(&kg, &normalize_role(r)).unwrap(),
                    eval_role_pairs(&kg, r).unwrap()
                );
            }
        }
    }
}
