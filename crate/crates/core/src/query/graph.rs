//! Computation graphs: labelled DAGs whose nodes apply one operator each
//! and whose distinguished target node computes the whole query.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;

use thiserror::Error;

use super::{normalize_role, Concept, Role};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("computation graph contains a cycle")]
    Cycle,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum NodeLabel {
    Nominal(String),
    /// One existential step along an atomic role (`inverse` for `r^-`).
    ExistsRole { relation: String, inverse: bool },
    Meet,
    Not,
    And,
    Or,
}

impl fmt::Display for NodeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeLabel::Nominal(a) => write!(f, "{{{a}}}"),
            NodeLabel::ExistsRole { relation, inverse: false } => write!(f, "exists {relation}"),
            NodeLabel::ExistsRole { relation, inverse: true } => write!(f, "exists (inv {relation})"),
            NodeLabel::Meet => f.write_str("meet"),
            NodeLabel::Not => f.write_str("not"),
            NodeLabel::And => f.write_str("and"),
            NodeLabel::Or => f.write_str("or"),
        }
    }
}

/// Nodes are `0..len()`, numbered in creation order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComputationGraph {
    labels: Vec<NodeLabel>,
    edges: BTreeSet<(usize, usize)>,
    target: usize,
    /// For every meet node, the node its branches start from.
    forks: BTreeMap<usize, usize>,
}

impl ComputationGraph {
    /// Single-node graph for a nominal.
    pub fn nominal(entity: impl Into<String>) -> Self {
        Self {
            labels: vec![NodeLabel::Nominal(entity.into())],
            edges: BTreeSet::new(),
            target: 0,
            forks: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[NodeLabel] {
        &self.labels
    }

    pub fn label(&self, node: usize) -> &NodeLabel {
        &self.labels[node]
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn target(&self) -> usize {
        self.target
    }

    /// Branch point of a meet node.
    pub fn fork_of(&self, meet: usize) -> Option<usize> {
        self.forks.get(&meet).copied()
    }

    /// Incoming neighbours of every node, sorted.
    pub fn predecessors(&self) -> Vec<Vec<usize>> {
        let mut preds = vec![Vec::new(); self.len()];
        for &(u, v) in &self.edges {
            preds[v].push(u);
        }
        preds
    }

    fn add_node(&mut self, label: NodeLabel, inputs: &[usize]) -> usize {
        let id = self.labels.len();
        self.labels.push(label);
        for &i in inputs {
            self.edges.insert((i, id));
        }
        id
    }

    fn add_concept(&mut self, c: &Concept) -> usize {
        match c {
            Concept::Nominal(a) => self.add_node(NodeLabel::Nominal(a.clone()), &[]),
            Concept::Not(x) => {
                let t = self.add_concept(x);
                self.add_node(NodeLabel::Not, &[t])
            }
            Concept::And(xs) | Concept::Or(xs) => {
                let ts: Vec<usize> = xs.iter().map(|x| self.add_concept(x)).collect();
                let label = if matches!(c, Concept::And(_)) {
                    NodeLabel::And
                } else {
                    NodeLabel::Or
                };
                self.add_node(label, &ts)
            }
            Concept::Exists(r, x) => {
                let t = self.add_concept(x);
                self.add_role(t, &normalize_role(r))
            }
        }
    }

    /// Appends the nodes for `role` after `from` and returns the new target.
    fn add_role(&mut self, from: usize, role: &Role) -> usize {
        match role {
            Role::Name(n) => self.add_node(
                NodeLabel::ExistsRole {
                    relation: n.clone(),
                    inverse: false,
                },
                &[from],
            ),
            Role::Inverse(inner) => match inner.as_ref() {
                Role::Name(n) => self.add_node(
                    NodeLabel::ExistsRole {
                        relation: n.clone(),
                        inverse: true,
                    },
                    &[from],
                ),
                _ => self.add_role(from, &normalize_role(role)),
            },
            // exists (a ; b) . C = exists a . (exists b . C): the right
            // factor is applied first.
            Role::Compose(a, b) => {
                let mid = self.add_role(from, b);
                self.add_role(mid, a)
            }
            // Every branch starts from the same prefix, so the prefix nodes
            // are shared.
            Role::Meet(ms) => {
                let ends: Vec<usize> = ms.iter().map(|m| self.add_role(from, m)).collect();
                let u = self.add_node(NodeLabel::Meet, &ends);
                self.forks.insert(u, from);
                u
            }
        }
    }

    /// Nodes in dependency order, ties broken by smallest id.
    pub fn topo_order(&self) -> Result<Vec<usize>, GraphError> {
        let mut indeg = vec![0usize; self.len()];
        let mut succ = vec![Vec::new(); self.len()];
        for &(u, v) in &self.edges {
            indeg[v] += 1;
            succ[u].push(v);
        }
        let mut ready: BinaryHeap<Reverse<usize>> = indeg
            .iter()
            .enumerate()
            .filter(|(_, &d)| d == 0)
            .map(|(i, _)| Reverse(i))
            .collect();
        let mut order = Vec::with_capacity(self.len());
        while let Some(Reverse(u)) = ready.pop() {
            order.push(u);
            for &v in &succ[u] {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    ready.push(Reverse(v));
                }
            }
        }
        if order.len() == self.len() {
            Ok(order)
        } else {
            Err(GraphError::Cycle)
        }
    }

    /// Checks the structural invariants: acyclic, target present, nominal
    /// nodes are exactly the sources, unary labels have one input.
    pub fn validate(&self) -> Result<(), String> {
        if self.target >= self.len() {
            return Err("target out of range".into());
        }
        self.topo_order().map_err(|e| e.to_string())?;
        let preds = self.predecessors();
        for (i, label) in self.labels.iter().enumerate() {
            let n = preds[i].len();
            let ok = match label {
                NodeLabel::Nominal(_) => n == 0,
                NodeLabel::ExistsRole { .. } | NodeLabel::Not => n == 1,
                NodeLabel::Meet | NodeLabel::And | NodeLabel::Or => n >= 1,
            };
            if !ok {
                return Err(format!("node {i} ({label}) has in-degree {n}"));
            }
        }
        for (&meet, &fork) in &self.forks {
            if self.labels[meet] != NodeLabel::Meet || fork >= self.len() {
                return Err(format!("bad fork record {meet} -> {fork}"));
            }
        }
        Ok(())
    }
}

/// Extends `g` with the nodes of `role`, starting at its target.
pub fn compose_graph(g: &ComputationGraph, role: &Role) -> ComputationGraph {
    let mut out = g.clone();
    out.target = out.add_role(g.target, &normalize_role(role));
    out
}

/// Smallest computation graph of `c`.
pub fn build_computation_graph(c: &Concept) -> ComputationGraph {
    let mut g = ComputationGraph {
        labels: Vec::new(),
        edges: BTreeSet::new(),
        target: 0,
        forks: BTreeMap::new(),
    };
    g.target = g.add_concept(c);
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: &str) -> Role {
        Role::name(n)
    }

    fn step(rel: &str, inverse: bool) -> NodeLabel {
        NodeLabel::ExistsRole {
            relation: rel.into(),
            inverse,
        }
    }

    fn base() -> ComputationGraph {
        compose_graph(&ComputationGraph::nominal("Oscar"), &r("wonBy").inv())
    }

    #[test]
    fn base_graph() {
        let g = base();
        assert_eq!(g.labels(), &[NodeLabel::Nominal("Oscar".into()), step("wonBy", true)]);
        assert_eq!(g.edges().iter().copied().collect::<Vec<_>>(), vec![(0, 1)]);
        assert_eq!(g.target(), 1);
    }

    #[test]
    fn compose_with_inverse_atom_gives_chain() {
        let g = compose_graph(&base(), &r("edited").inv());
        assert_eq!(g.len(), 3);
        assert_eq!(g.label(2), &step("edited", true));
        assert_eq!(g.edges().iter().copied().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
        assert_eq!(g.target(), 2);
    }

    #[test]
    fn compose_with_inverse_meet_shares_prefix() {
        let g = compose_graph(&base(), &Role::meet(vec![r("edited"), r("produced")]).inv());
        assert_eq!(g.len(), 5);
        assert_eq!(g.label(2), &step("edited", true));
        assert_eq!(g.label(3), &step("produced", true));
        assert_eq!(g.label(4), &NodeLabel::Meet);
        assert_eq!(g.target(), 4);
        assert_eq!(
            g.edges().iter().copied().collect::<Vec<_>>(),
            vec![(0, 1), (1, 2), (1, 3), (2, 4), (3, 4)]
        );
        assert_eq!(g.fork_of(4), Some(1));
        g.validate().unwrap();
    }

    #[test]
    fn sequential_composition_equals_composed_role() {
        // exists (r ; s) . C = exists r . exists s . C, so s is applied first.
        let g0 = base();
        let seq = compose_graph(&compose_graph(&g0, &r("s")), &r("r"));
        let once = compose_graph(&g0, &Role::compose(r("r"), r("s")));
        assert_eq!(seq, once);
    }

    #[test]
    fn graph_of_d() {
        let d = Concept::exists(
            Role::meet(vec![r("edited"), r("produced")]).inv(),
            Concept::exists(r("wonBy").inv(), Concept::nominal("Oscar")),
        );
        let g = build_computation_graph(&d);
        assert_eq!(g, compose_graph(&base(), &Role::meet(vec![r("edited"), r("produced")]).inv()));
        assert_eq!(g.topo_order().unwrap(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn graph_of_tree_form_duplicates_branches() {
        let winner = Concept::exists(r("wonBy").inv(), Concept::nominal("Oscar"));
        let c = Concept::and(vec![
            Concept::exists(r("edited").inv(), winner.clone()),
            Concept::exists(r("produced").inv(), winner),
        ]);
        let g = build_computation_graph(&c);
        assert_eq!(g.len(), 7);
        let nominals = g
            .labels()
            .iter()
            .filter(|l| matches!(l, NodeLabel::Nominal(_)))
            .count();
        assert_eq!(nominals, 2);
        assert_eq!(g.label(g.target()), &NodeLabel::And);
        assert!(!g.labels().contains(&NodeLabel::Meet));
        g.validate().unwrap();
    }

    #[test]
    fn single_node_and_chain_orders() {
        let g = build_computation_graph(&Concept::nominal("a"));
        assert_eq!(g.len(), 1);
        assert_eq!(g.target(), 0);
        assert_eq!(g.topo_order().unwrap(), vec![0]);

        let chain = build_computation_graph(&Concept::exists(
            r("a"),
            Concept::exists(r("b"), Concept::nominal("x")),
        ));
        assert_eq!(chain.topo_order().unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn cycle_is_reported() {
        let mut g = build_computation_graph(&Concept::exists(r("a"), Concept::nominal("x")));
        g.edges.insert((1, 0));
        assert_eq!(g.topo_order(), Err(GraphError::Cycle));
    }
}
