//! DAG query algebra: concept and role descriptions, normalization,
//! tree-form relaxation, textual and JSON encodings, and computation graphs.
//!
//! Concepts follow the grammar
//!
//! ```text
//! C ::= {a} | not C | C & C | C | C | exists R . C
//! R ::= r | inv R | R ; R | R & R
//! ```
//!
//! where `;` is role composition and `&` between roles is role meet
//! (relation intersection). A query is *tree-form* when none of its roles
//! contains a meet.

mod graph;
mod json;
mod parser;

pub use graph::{build_computation_graph, compose_graph, ComputationGraph, GraphError, NodeLabel};
pub use json::JsonAstError;
pub use parser::{parse_concept, parse_role, ParseError};

use std::fmt;

/// Role description.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Name(String),
    Inverse(Box<Role>),
    /// `Compose(a, b)` relates `u` to `v` when `u -a-> w -b-> v`.
    Compose(Box<Role>, Box<Role>),
    /// Relation intersection; at least two members.
    Meet(Vec<Role>),
}

/// Concept description (a query).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Concept {
    Nominal(String),
    Not(Box<Concept>),
    And(Vec<Concept>),
    Or(Vec<Concept>),
    Exists(Role, Box<Concept>),
}

impl Role {
    pub fn name(n: impl Into<String>) -> Self {
        Role::Name(n.into())
    }

    pub fn inv(self) -> Self {
        Role::Inverse(Box::new(self))
    }

    pub fn compose(left: Role, right: Role) -> Self {
        Role::Compose(Box::new(left), Box::new(right))
    }

    /// Left-associated composition chain `r1 ; r2 ; ... ; rn`.
    pub fn chain(roles: impl IntoIterator<Item = Role>) -> Self {
        let mut it = roles.into_iter();
        let first = it.next().expect("chain needs at least one role");
        it.fold(first, Role::compose)
    }

    /// Panics with fewer than two members.
    pub fn meet(members: Vec<Role>) -> Self {
        assert!(members.len() >= 2, "a role meet needs at least two members");
        Role::Meet(members)
    }

    pub fn is_meet_free(&self) -> bool {
        match self {
            Role::Name(_) => true,
            Role::Inverse(r) => r.is_meet_free(),
            Role::Compose(a, b) => a.is_meet_free() && b.is_meet_free(),
            Role::Meet(_) => false,
        }
    }

    /// True for `r` and `inv r` with `r` a relation name.
    pub fn is_atomic(&self) -> bool {
        match self {
            Role::Name(_) => true,
            Role::Inverse(r) => matches!(**r, Role::Name(_)),
            _ => false,
        }
    }

    /// Relation names in order of first occurrence.
    pub fn relation_names(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_names(&mut out);
        out
    }

    fn collect_names<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Role::Name(n) => {
                if !out.contains(&n.as_str()) {
                    out.push(n);
                }
            }
            Role::Inverse(r) => r.collect_names(out),
            Role::Compose(a, b) => {
                a.collect_names(out);
                b.collect_names(out);
            }
            Role::Meet(ms) => ms.iter().for_each(|m| m.collect_names(out)),
        }
    }
}

impl Concept {
    pub fn nominal(a: impl Into<String>) -> Self {
        Concept::Nominal(a.into())
    }

    pub fn not(c: Concept) -> Self {
        Concept::Not(Box::new(c))
    }

    /// Panics with fewer than two arguments.
    pub fn and(args: Vec<Concept>) -> Self {
        assert!(args.len() >= 2, "a conjunction needs at least two arguments");
        Concept::And(args)
    }

    /// Panics with fewer than two arguments.
    pub fn or(args: Vec<Concept>) -> Self {
        assert!(args.len() >= 2, "a disjunction needs at least two arguments");
        Concept::Or(args)
    }

    pub fn exists(role: Role, arg: Concept) -> Self {
        Concept::Exists(role, Box::new(arg))
    }

    /// True iff no role anywhere in the concept contains a meet.
    pub fn is_tree_form(&self) -> bool {
        match self {
            Concept::Nominal(_) => true,
            Concept::Not(c) => c.is_tree_form(),
            Concept::And(cs) | Concept::Or(cs) => cs.iter().all(Concept::is_tree_form),
            Concept::Exists(r, c) => r.is_meet_free() && c.is_tree_form(),
        }
    }

    pub fn has_negation(&self) -> bool {
        match self {
            Concept::Nominal(_) => false,
            Concept::Not(_) => true,
            Concept::And(cs) | Concept::Or(cs) => cs.iter().any(Concept::has_negation),
            Concept::Exists(_, c) => c.has_negation(),
        }
    }

    /// Entity names (anchors) in order of first occurrence.
    pub fn entity_names(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit(&mut |c| {
            if let Concept::Nominal(a) = c {
                if !out.contains(&a.as_str()) {
                    out.push(a.as_str());
                }
            }
        });
        out
    }

    /// Relation names in order of first occurrence.
    pub fn relation_names(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        self.visit(&mut |c| {
            if let Concept::Exists(r, _) = c {
                for n in r.relation_names() {
                    if !out.contains(&n) {
                        out.push(n);
                    }
                }
            }
        });
        out
    }

    /// Pre-order traversal.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Concept)) {
        f(self);
        match self {
            Concept::Nominal(_) => {}
            Concept::Not(c) | Concept::Exists(_, c) => c.visit(f),
            Concept::And(cs) | Concept::Or(cs) => cs.iter().for_each(|c| c.visit(f)),
        }
    }

    /// Normalizes every role in the concept (see [`normalize_role`]).
    pub fn normalize(&self) -> Concept {
        match self {
            Concept::Nominal(_) => self.clone(),
            Concept::Not(c) => Concept::not(c.normalize()),
            Concept::And(cs) => Concept::And(cs.iter().map(Concept::normalize).collect()),
            Concept::Or(cs) => Concept::Or(cs.iter().map(Concept::normalize).collect()),
            Concept::Exists(r, c) => Concept::exists(normalize_role(r), c.normalize()),
        }
    }

    /// Normalizes roles and rewrites compositions outside meets into nested
    /// existentials: `exists (a ; b) . C` becomes `exists a . exists b . C`.
    /// Afterwards every `Exists` role is atomic or a meet.
    pub fn unfold(&self) -> Concept {
        match self {
            Concept::Nominal(_) => self.clone(),
            Concept::Not(c) => Concept::not(c.unfold()),
            Concept::And(cs) => Concept::And(cs.iter().map(Concept::unfold).collect()),
            Concept::Or(cs) => Concept::Or(cs.iter().map(Concept::unfold).collect()),
            Concept::Exists(r, c) => unfold_exists(normalize_role(r), c.unfold()),
        }
    }
}

fn unfold_exists(role: Role, arg: Concept) -> Concept {
    match role {
        Role::Compose(a, b) => unfold_exists(*a, unfold_exists(*b, arg)),
        other => Concept::exists(other, arg),
    }
}

/// Pushes inverses down to relation names and flattens nested meets.
///
/// Uses `inv inv R = R`, `inv (R ; S) = inv S ; inv R` and
/// `inv (R & S) = inv R & inv S`.
pub fn normalize_role(r: &Role) -> Role {
    push_inverse(r, false)
}

fn push_inverse(r: &Role, inverted: bool) -> Role {
    match r {
        Role::Name(_) => {
            if inverted {
                r.clone().inv()
            } else {
                r.clone()
            }
        }
        Role::Inverse(inner) => push_inverse(inner, !inverted),
        Role::Compose(a, b) => {
            if inverted {
                Role::compose(push_inverse(b, true), push_inverse(a, true))
            } else {
                Role::compose(push_inverse(a, false), push_inverse(b, false))
            }
        }
        Role::Meet(ms) => {
            let mut flat = Vec::with_capacity(ms.len());
            for m in ms {
                match push_inverse(m, inverted) {
                    Role::Meet(inner) => flat.extend(inner),
                    other => flat.push(other),
                }
            }
            Role::Meet(flat)
        }
    }
}

/// Meet-free roles whose union over-approximates `r`, deduplicated in
/// first-occurrence order. Expects a normalized role.
pub fn role_paths(r: &Role) -> Vec<Role> {
    let mut out = Vec::new();
    match r {
        Role::Name(_) => out.push(r.clone()),
        Role::Inverse(inner) => {
            for p in role_paths(inner) {
                push_unique(&mut out, p.inv());
            }
        }
        Role::Compose(a, b) => {
            let right = role_paths(b);
            for pa in role_paths(a) {
                for pb in &right {
                    push_unique(&mut out, Role::compose(pa.clone(), pb.clone()));
                }
            }
        }
        Role::Meet(ms) => {
            for m in ms {
                for p in role_paths(m) {
                    push_unique(&mut out, p);
                }
            }
        }
    }
    out
}

fn push_unique(out: &mut Vec<Role>, r: Role) {
    if !out.contains(&r) {
        out.push(r);
    }
}

/// Tree-form approximation: replaces every `exists (R1 & ... & Rk) . C`
/// by `exists P1 . C & ... & exists Pm . C` over the role paths `Pi`.
/// Tree-form input is returned unchanged.
pub fn relax(c: &Concept) -> Concept {
    match c {
        Concept::Nominal(_) => c.clone(),
        Concept::Not(x) => Concept::not(relax(x)),
        Concept::And(xs) => Concept::And(xs.iter().map(relax).collect()),
        Concept::Or(xs) => Concept::Or(xs.iter().map(relax).collect()),
        Concept::Exists(r, x) => {
            let arg = relax(x);
            if r.is_meet_free() {
                return Concept::exists(r.clone(), arg);
            }
            let mut paths = role_paths(&normalize_role(r));
            if paths.len() == 1 {
                Concept::exists(paths.pop().unwrap(), arg)
            } else {
                Concept::And(
                    paths
                        .into_iter()
                        .map(|p| Concept::exists(p, arg.clone()))
                        .collect(),
                )
            }
        }
    }
}

fn write_role(r: &Role, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match r {
        Role::Name(n) => f.write_str(n),
        Role::Inverse(x) => {
            f.write_str("(inv ")?;
            write_role(x, f)?;
            f.write_str(")")
        }
        Role::Compose(a, b) => {
            f.write_str("(")?;
            write_role(a, f)?;
            f.write_str(" ; ")?;
            write_role(b, f)?;
            f.write_str(")")
        }
        Role::Meet(ms) => {
            f.write_str("(")?;
            for (i, m) in ms.iter().enumerate() {
                if i > 0 {
                    f.write_str(" & ")?;
                }
                write_role(m, f)?;
            }
            f.write_str(")")
        }
    }
}

// Operand of `not`, `exists` or a binary connective: anything but a nominal
// is parenthesized.
fn write_operand(c: &Concept, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match c {
        Concept::Nominal(_) => write_concept(c, f),
        _ => {
            f.write_str("(")?;
            write_concept(c, f)?;
            f.write_str(")")
        }
    }
}

fn write_concept(c: &Concept, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match c {
        Concept::Nominal(a) => write!(f, "{{{a}}}"),
        Concept::Not(x) => {
            f.write_str("not ")?;
            write_operand(x, f)
        }
        Concept::Exists(r, x) => {
            f.write_str("exists ")?;
            write_role(r, f)?;
            f.write_str(" . ")?;
            write_operand(x, f)
        }
        Concept::And(xs) | Concept::Or(xs) => {
            let sep = if matches!(c, Concept::And(_)) { " & " } else { " | " };
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    f.write_str(sep)?;
                }
                match x {
                    Concept::And(_) | Concept::Or(_) => write_operand(x, f)?,
                    _ => write_concept(x, f)?,
                }
            }
            Ok(())
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_role(self, f)
    }
}

/// Canonical text form; `parse_concept(&c.to_string())` yields `c` back.
impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_concept(self, f)
    }
}

pub fn render_concept(c: &Concept) -> String {
    c.to_string()
}
