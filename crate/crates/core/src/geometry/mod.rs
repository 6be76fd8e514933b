//! Query embeddings in three geometries (boxes, Beta vectors, sector cones)
//! and the operators that build them, including the relational combinator
//! that embeds role meets.
//!
//! [`Operators`] holds the layout of a model's parameters and implements the
//! operators against any [`ParamStore`] with that layout; [`Model`] bundles
//! the layout with trained values and vocabularies.

mod check;
mod io;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, ParamId, ParamStore, Tape, Tensor, Var};

pub use check::{gradcheck_operators, OperatorCheck, OPERATORS};

/// Floor added to softplus outputs so Beta shapes stay strictly positive.
const SHAPE_FLOOR: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("the box geometry cannot embed negation")]
    UnsupportedNegation,
    #[error("the beta geometry cannot embed a composition under a role meet")]
    UnsupportedComposition,
    #[error("intersection needs at least two operands")]
    FewerThanTwo,
    #[error("unknown id {0}")]
    UnknownId(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad model file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    Box,
    Beta,
    Cone,
}

impl Geometry {
    pub const ALL: [Geometry; 3] = [Geometry::Box, Geometry::Beta, Geometry::Cone];

    pub fn supports_negation(self) -> bool {
        self != Geometry::Box
    }

    /// Width of a role vector.
    pub fn role_width(self, dim: usize) -> usize {
        match self {
            Geometry::Beta => dim,
            Geometry::Box | Geometry::Cone => 2 * dim,
        }
    }
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Geometry::Box => "box",
            Geometry::Beta => "beta",
            Geometry::Cone => "cone",
        })
    }
}

impl FromStr for Geometry {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "box" => Ok(Geometry::Box),
            "beta" => Ok(Geometry::Beta),
            "cone" => Ok(Geometry::Cone),
            other => Err(format!("unknown geometry '{other}' (expected box, beta or cone)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    /// Weight of the inside distance for boxes.
    pub alpha_in: f64,
    /// Softplus temperature in the box volume.
    pub volume_beta: f64,
    /// Weight of the inside distance for cones.
    pub cone_lambda: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            alpha_in: 0.02,
            volume_beta: 1.0,
            cone_lambda: 0.02,
        }
    }
}

/// A query embedding. Each variant holds two `d`-vectors on the tape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QueryEmb {
    Box { center: Var, offset: Var },
    Beta { alpha: Var, beta: Var },
    Cone { axis: Var, aperture: Var },
}

impl QueryEmb {
    pub fn new(g: Geometry, a: Var, b: Var) -> Self {
        match g {
            Geometry::Box => QueryEmb::Box { center: a, offset: b },
            Geometry::Beta => QueryEmb::Beta { alpha: a, beta: b },
            Geometry::Cone => QueryEmb::Cone { axis: a, aperture: b },
        }
    }

    pub fn geometry(&self) -> Geometry {
        match self {
            QueryEmb::Box { .. } => Geometry::Box,
            QueryEmb::Beta { .. } => Geometry::Beta,
            QueryEmb::Cone { .. } => Geometry::Cone,
        }
    }

    /// The two parameter vectors in declaration order.
    pub fn parts(&self) -> (Var, Var) {
        match *self {
            QueryEmb::Box { center, offset } => (center, offset),
            QueryEmb::Beta { alpha, beta } => (alpha, beta),
            QueryEmb::Cone { axis, aperture } => (axis, aperture),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoleVec(pub Var);

/// One hidden layer of width `2d` with relu.
///
/// Attention nets are built without biases: their outputs feed a softmax,
/// which ignores any shift shared by all operands, so biases would only add
/// directions the loss cannot see.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mlp {
    w1: ParamId,
    b1: Option<ParamId>,
    w2: ParamId,
    b2: Option<ParamId>,
}

impl Mlp {
    fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        (input, hidden, output): (usize, usize, usize),
        bias: bool,
    ) -> Self {
        let w1 = store.add(format!("{name}.w1"), glorot(rng, hidden, input));
        let b1 = bias.then(|| store.add(format!("{name}.b1"), Tensor::zeros(&[hidden])));
        let w2 = store.add(format!("{name}.w2"), glorot(rng, output, hidden));
        let b2 = bias.then(|| store.add(format!("{name}.b2"), Tensor::zeros(&[output])));
        Self { w1, b1, w2, b2 }
    }

    pub fn forward(&self, t: &mut Tape, s: &ParamStore, x: Var) -> Result<Var, AutodiffError> {
        let w1 = t.param(s, self.w1);
        let mut h = t.matvec(w1, x)?;
        if let Some(b1) = self.b1 {
            let b1 = t.param(s, b1);
            h = t.add(h, b1)?;
        }
        let h = t.relu(h);
        let w2 = t.param(s, self.w2);
        let mut y = t.matvec(w2, h)?;
        if let Some(b2) = self.b2 {
            let b2 = t.param(s, b2);
            y = t.add(y, b2)?;
        }
        Ok(y)
    }
}

fn glorot(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::new(vec![rows, cols], data).expect("consistent shape")
}

fn uniform_table(rng: &mut impl Rng, rows: usize, cols: usize, limit: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::new(vec![rows, cols], data).expect("consistent shape")
}

/// Permutation-invariant set network: `rho(mean phi(x_i))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct DeepSets {
    phi: Mlp,
    rho_w: ParamId,
    rho_b: ParamId,
}

impl DeepSets {
    fn new(store: &mut ParamStore, rng: &mut impl Rng, name: &str, input: usize, dim: usize) -> Self {
        Self {
            phi: Mlp::new(store, rng, &format!("{name}.phi"), (input, 2 * dim, dim), true),
            rho_w: store.add(format!("{name}.rho.w"), glorot(rng, dim, dim)),
            rho_b: store.add(format!("{name}.rho.b"), Tensor::zeros(&[dim])),
        }
    }

    fn forward(&self, t: &mut Tape, s: &ParamStore, xs: &[Var]) -> Result<Var, AutodiffError> {
        let phis = xs
            .iter()
            .map(|&x| self.phi.forward(t, s, x))
            .collect::<Result<Vec<_>, _>>()?;
        let stacked = t.stack(&phis)?;
        let total = t.sum_axis0(stacked)?;
        let mean = t.scale(total, 1.0 / xs.len() as f64);
        let (w, b) = (t.param(s, self.rho_w), t.param(s, self.rho_b));
        let y = t.matvec(w, mean)?;
        t.add(y, b)
    }
}

/// Parameter layout of a model plus the operator implementations.
#[derive(Debug, Clone, PartialEq)]
pub struct Operators {
    pub geometry: Geometry,
    pub dim: usize,
    pub config: GeometryConfig,
    pub n_entities: usize,
    pub n_relations: usize,
    entities: ParamId,
    roles: ParamId,
    inter_attn: Mlp,
    inter_sets: Option<DeepSets>,
    rc_attn: Mlp,
    rc_value: Mlp,
    relation_net: Option<Mlp>,
}

impl Operators {
    /// Registers freshly initialised parameters in `store` (which should be
    /// empty) and returns the layout.
    pub fn init(
        geometry: Geometry,
        dim: usize,
        n_entities: usize,
        n_relations: usize,
        config: GeometryConfig,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Self {
        let d = dim;
        let limit = 1.0 / (d as f64).sqrt();
        let entity_width = if geometry == Geometry::Beta { 2 * d } else { d };
        let role_width = geometry.role_width(d);
        let entities = store.add("entity", uniform_table(rng, n_entities, entity_width, limit));
        let roles = store.add("role", uniform_table(rng, 2 * n_relations, role_width, limit));
        let attn_out = if geometry == Geometry::Beta { 2 * d } else { d };
        let inter_attn = Mlp::new(store, rng, "intersect.attn", (2 * d, 2 * d, attn_out), false);
        let inter_sets = (geometry != Geometry::Beta)
            .then(|| DeepSets::new(store, rng, "intersect.deepsets", 2 * d, d));
        let rc_attn = Mlp::new(store, rng, "rcombine.attn", (role_width, 2 * d, role_width), false);
        let rc_value = Mlp::new(store, rng, "rcombine.value", (role_width, 2 * d, role_width), true);
        let relation_net = match geometry {
            Geometry::Box => None,
            Geometry::Beta => Some(Mlp::new(store, rng, "relation", (3 * d, 2 * d, 2 * d), true)),
            Geometry::Cone => Some(Mlp::new(store, rng, "relation", (2 * d, 2 * d, 2 * d), true)),
        };
        Self {
            geometry,
            dim,
            config,
            n_entities,
            n_relations,
            entities,
            roles,
            inter_attn,
            inter_sets,
            rc_attn,
            rc_value,
            relation_net,
        }
    }

    pub fn entity_table(&self) -> ParamId {
        self.entities
    }

    pub fn role_table(&self) -> ParamId {
        self.roles
    }

    fn check_geometry(&self, q: &QueryEmb) -> Result<(), AutodiffError> {
        if q.geometry() == self.geometry {
            Ok(())
        } else {
            Err(AutodiffError::ShapeMismatch {
                op: "geometry",
                lhs: vec![],
                rhs: vec![],
            })
        }
    }

    fn zeros(&self, t: &mut Tape) -> Var {
        t.constant(Tensor::zeros(&[self.dim]))
    }

    /// Embedding of the nominal `{entity}`.
    pub fn nominal(&self, t: &mut Tape, s: &ParamStore, entity: usize) -> Result<QueryEmb, GeometryError> {
        if entity >= self.n_entities {
            return Err(GeometryError::UnknownId(format!("entity #{entity}")));
        }
        let row = t.param_row(s, self.entities, entity);
        let d = self.dim;
        Ok(match self.geometry {
            Geometry::Box => QueryEmb::Box {
                center: row,
                offset: self.zeros(t),
            },
            Geometry::Beta => {
                let a = t.slice(row, 0, d)?;
                let b = t.slice(row, d, d)?;
                QueryEmb::Beta {
                    alpha: positive(t, a),
                    beta: positive(t, b),
                }
            }
            Geometry::Cone => QueryEmb::Cone {
                axis: t.wrap(row),
                aperture: self.zeros(t),
            },
        })
    }

    /// Role vector of `relation` (or its inverse).
    pub fn role(&self, t: &mut Tape, s: &ParamStore, relation: usize, inverse: bool) -> Result<RoleVec, GeometryError> {
        if relation >= self.n_relations {
            return Err(GeometryError::UnknownId(format!("relation #{relation}")));
        }
        let row = t.param_row(s, self.roles, 2 * relation + usize::from(inverse));
        if self.geometry != Geometry::Box {
            return Ok(RoleVec(row));
        }
        // box offsets are nonnegative from the start, so composing roles by
        // addition matches applying them one after the other
        let d = self.dim;
        let cen = t.slice(row, 0, d)?;
        let off = t.slice(row, d, d)?;
        let off = t.relu(off);
        Ok(RoleVec(t.concat(&[cen, off])?))
    }

    pub fn rel_transform(
        &self,
        t: &mut Tape,
        s: &ParamStore,
        q: QueryEmb,
        r: RoleVec,
    ) -> Result<QueryEmb, GeometryError> {
        self.check_geometry(&q)?;
        let d = self.dim;
        let (a, b) = q.parts();
        Ok(match self.geometry {
            Geometry::Box => {
                let rc = t.slice(r.0, 0, d)?;
                let ro = t.slice(r.0, d, d)?;
                let ro = t.relu(ro);
                QueryEmb::Box {
                    center: t.add(a, rc)?,
                    offset: t.add(b, ro)?,
                }
            }
            Geometry::Beta => {
                let x = t.concat(&[a, b, r.0])?;
                let y = self.relation_net.expect("beta relation net").forward(t, s, x)?;
                let ya = t.slice(y, 0, d)?;
                let yb = t.slice(y, d, d)?;
                QueryEmb::Beta {
                    alpha: positive(t, ya),
                    beta: positive(t, yb),
                }
            }
            Geometry::Cone => {
                let rax = t.slice(r.0, 0, d)?;
                let rap = t.slice(r.0, d, d)?;
                let ax = t.add(a, rax)?;
                let ap = t.add(b, rap)?;
                let x = t.concat(&[ax, ap])?;
                let y = self.relation_net.expect("cone relation net").forward(t, s, x)?;
                let yax = t.slice(y, 0, d)?;
                let yap = t.slice(y, d, d)?;
                let sig = t.sigmoid(yap);
                QueryEmb::Cone {
                    axis: t.wrap(yax),
                    aperture: t.scale(sig, 2.0 * PI),
                }
            }
        })
    }

    pub fn intersect(&self, t: &mut Tape, s: &ParamStore, qs: &[QueryEmb]) -> Result<QueryEmb, GeometryError> {
        if qs.len() < 2 {
            return Err(GeometryError::FewerThanTwo);
        }
        for q in qs {
            self.check_geometry(q)?;
        }
        let d = self.dim;
        let firsts: Vec<Var> = qs.iter().map(|q| q.parts().0).collect();
        let seconds: Vec<Var> = qs.iter().map(|q| q.parts().1).collect();
        let joined = qs
            .iter()
            .map(|q| {
                let (a, b) = q.parts();
                t.concat(&[a, b])
            })
            .collect::<Result<Vec<_>, _>>()?;
        let scores = joined
            .iter()
            .map(|&x| self.inter_attn.forward(t, s, x))
            .collect::<Result<Vec<_>, _>>()?;
        if self.geometry == Geometry::Beta {
            // the weighted product of Beta densities is again Beta with
            // shapes 1 + sum w (shape - 1), which `convex` computes
            let mut blocks = [Vec::new(), Vec::new()];
            for &sc in &scores {
                blocks[0].push(t.slice(sc, 0, d)?);
                blocks[1].push(t.slice(sc, d, d)?);
            }
            let wa = t.stack(&blocks[0])?;
            let wa = t.softmax(wa, 0)?;
            let wb = t.stack(&blocks[1])?;
            let wb = t.softmax(wb, 0)?;
            return Ok(QueryEmb::Beta {
                alpha: convex(t, wa, &firsts)?,
                beta: convex(t, wb, &seconds)?,
            });
        }
        let scores = t.stack(&scores)?;
        let w = t.softmax(scores, 0)?;
        Ok(match self.geometry {
            Geometry::Box => {
                let center = convex(t, w, &firsts)?;
                let offset = self.shrunk_min(t, s, &seconds, &joined)?;
                QueryEmb::Box { center, offset }
            }
            Geometry::Beta => unreachable!("handled above"),
            Geometry::Cone => {
                let sins: Vec<Var> = firsts.iter().map(|&x| t.sin(x)).collect();
                let coss: Vec<Var> = firsts.iter().map(|&x| t.cos(x)).collect();
                let sins = t.stack(&sins)?;
                let coss = t.stack(&coss)?;
                let ws = t.mul(w, sins)?;
                let wc = t.mul(w, coss)?;
                let y = t.sum_axis0(ws)?;
                let x = t.sum_axis0(wc)?;
                let axis = t.atan2(y, x)?;
                QueryEmb::Cone {
                    axis: t.wrap(axis),
                    aperture: self.shrunk_min(t, s, &seconds, &joined)?,
                }
            }
        })
    }

    /// Elementwise minimum of `sizes` scaled by `sigmoid(DeepSets(joined))`.
    fn shrunk_min(&self, t: &mut Tape, s: &ParamStore, sizes: &[Var], joined: &[Var]) -> Result<Var, AutodiffError> {
        let stacked = t.stack(sizes)?;
        let m = t.min_axis0(stacked)?;
        let gate = self.inter_sets.expect("deepsets net").forward(t, s, joined)?;
        let gate = t.sigmoid(gate);
        t.mul(m, gate)
    }

    pub fn complement(&self, t: &mut Tape, q: QueryEmb) -> Result<QueryEmb, GeometryError> {
        self.check_geometry(&q)?;
        match q {
            QueryEmb::Box { .. } => Err(GeometryError::UnsupportedNegation),
            QueryEmb::Beta { alpha, beta } => Ok(QueryEmb::Beta {
                alpha: t.recip(alpha)?,
                beta: t.recip(beta)?,
            }),
            QueryEmb::Cone { axis, aperture } => {
                let upper: Vec<bool> = t.value(axis).iter().map(|&x| x >= 0.0).collect();
                let shift = upper.iter().map(|&u| if u { -PI } else { PI }).collect();
                t.note_branch(upper);
                let shift = t.vector(shift);
                let neg = t.neg(aperture);
                Ok(QueryEmb::Cone {
                    axis: t.add(axis, shift)?,
                    aperture: t.add_scalar(neg, 2.0 * PI),
                })
            }
        }
    }

    /// Embedding of a role meet: `sum_i softmax_i(attn(r_j)) * value(r_i)`.
    pub fn rcombine(&self, t: &mut Tape, s: &ParamStore, roles: &[RoleVec]) -> Result<RoleVec, GeometryError> {
        if roles.is_empty() {
            return Err(GeometryError::FewerThanTwo);
        }
        let scores = roles
            .iter()
            .map(|r| self.rc_attn.forward(t, s, r.0))
            .collect::<Result<Vec<_>, _>>()?;
        let values = roles
            .iter()
            .map(|&r| self.rcombine_value(t, s, r).map(|v| v.0))
            .collect::<Result<Vec<_>, _>>()?;
        let scores = t.stack(&scores)?;
        let w = t.softmax(scores, 0)?;
        Ok(RoleVec(convex(t, w, &values)?))
    }

    /// Value network alone; `rcombine` of identical roles reduces to it.
    /// Residual, so a fresh meet starts out as a blend of its members.
    pub fn rcombine_value(&self, t: &mut Tape, s: &ParamStore, r: RoleVec) -> Result<RoleVec, GeometryError> {
        let y = self.rc_value.forward(t, s, r.0)?;
        Ok(RoleVec(t.add(r.0, y)?))
    }

    pub fn rcompose(&self, t: &mut Tape, r1: RoleVec, r2: RoleVec) -> Result<RoleVec, GeometryError> {
        match self.geometry {
            Geometry::Beta => Err(GeometryError::UnsupportedComposition),
            Geometry::Box | Geometry::Cone => Ok(RoleVec(t.add(r1.0, r2.0)?)),
        }
    }

    /// Distance from an entity (given by its nominal embedding) to a query.
    pub fn distance(&self, t: &mut Tape, entity: QueryEmb, q: QueryEmb) -> Result<Var, GeometryError> {
        self.check_geometry(&entity)?;
        self.check_geometry(&q)?;
        Ok(match (entity, q) {
            (QueryEmb::Box { center: v, .. }, QueryEmb::Box { center, offset }) => {
                let hi = t.add(center, offset)?;
                let lo = t.sub(center, offset)?;
                let above = t.sub(v, hi)?;
                let above = t.relu(above);
                let below = t.sub(lo, v)?;
                let below = t.relu(below);
                let out = t.add(above, below)?;
                let outside = t.sum(out);
                let pulled = t.maximum(lo, v)?;
                let pulled = t.minimum(hi, pulled)?;
                let gap = t.sub(center, pulled)?;
                let gap = t.abs(gap);
                let inside = t.sum(gap);
                let inside = t.scale(inside, self.config.alpha_in);
                t.add(outside, inside)?
            }
            (QueryEmb::Beta { alpha: a1, beta: b1 }, QueryEmb::Beta { alpha: a2, beta: b2 }) => {
                let kl = beta_kl(t, a1, b1, a2, b2)?;
                t.sum(kl)
            }
            (QueryEmb::Cone { axis: v, .. }, QueryEmb::Cone { axis, aperture }) => {
                let half = t.scale(aperture, 0.5);
                let lo = t.sub(axis, half)?;
                let hi = t.add(axis, half)?;
                let to_lo = half_sin_abs(t, v, lo)?;
                let to_hi = half_sin_abs(t, v, hi)?;
                let edge = t.minimum(to_lo, to_hi)?;
                // members (inside the sector) have no outside distance
                let outside_mask: Vec<bool> = t
                    .value(v)
                    .iter()
                    .zip(t.value(axis))
                    .zip(t.value(half))
                    .map(|((&x, &c), &h)| crate::autodiff::wrap_angle(x - c).abs() > h)
                    .collect();
                let mask = outside_mask.iter().map(|&o| f64::from(u8::from(o))).collect();
                t.note_branch(outside_mask);
                let mask = t.vector(mask);
                let masked = t.mul(edge, mask)?;
                let d_out = t.sum(masked);
                let to_axis = half_sin_abs(t, v, axis)?;
                let ap_half = t.sin(half);
                let ap_half = t.abs(ap_half);
                let inner = t.minimum(to_axis, ap_half)?;
                let d_in = t.sum(inner);
                let d_in = t.scale(d_in, self.config.cone_lambda);
                t.add(d_out, d_in)?
            }
            _ => unreachable!("geometries checked above"),
        })
    }

    /// Symmetric L1 difference of two embeddings.
    pub fn diff(&self, t: &mut Tape, q1: QueryEmb, q2: QueryEmb) -> Result<Var, GeometryError> {
        self.check_geometry(&q1)?;
        self.check_geometry(&q2)?;
        let (a1, b1) = q1.parts();
        let (a2, b2) = q2.parts();
        let da = t.sub(a1, a2)?;
        let da = t.abs(da);
        let db = t.sub(b1, b2)?;
        let db = t.abs(db);
        let sa = t.sum(da);
        let sb = t.sum(db);
        Ok(t.add(sa, sb)?)
    }

    /// Small when `inner` lies inside `outer`; zero for full containment.
    pub fn containment_penalty(
        &self,
        t: &mut Tape,
        s: &ParamStore,
        inner: QueryEmb,
        outer: QueryEmb,
    ) -> Result<Var, GeometryError> {
        let both = self.intersect(t, s, &[inner, outer])?;
        match (both, inner) {
            (QueryEmb::Box { offset: oi, .. }, QueryEmb::Box { offset: oq, .. }) => {
                let log_vi = self.log_volume(t, oi)?;
                let log_vq = self.log_volume(t, oq)?;
                let log_ratio = t.sub(log_vi, log_vq)?;
                let ratio = t.exp(log_ratio);
                let neg = t.neg(ratio);
                let pen = t.add_scalar(neg, 1.0);
                Ok(t.clamp(pen, 0.0, 1.0))
            }
            _ => self.diff(t, both, inner),
        }
    }

    fn log_volume(&self, t: &mut Tape, offset: Var) -> Result<Var, AutodiffError> {
        let sp = t.softplus(offset, self.config.volume_beta);
        let l = t.log(sp)?;
        Ok(t.sum(l))
    }
}

/// `softplus(x) + floor`, the positive reparameterisation of Beta shapes.
fn positive(t: &mut Tape, x: Var) -> Var {
    let sp = t.softplus(x, 1.0);
    t.add_scalar(sp, SHAPE_FLOOR)
}

/// `sum_i w_i * v_i` for column-normalised weights `w` (`[k, d]`), written
/// as `v_1 + sum_i w_i (v_i - v_1)` so that identical inputs reproduce `v_1`
/// exactly.
fn convex(t: &mut Tape, w: Var, vs: &[Var]) -> Result<Var, AutodiffError> {
    let diffs = vs
        .iter()
        .map(|&v| t.sub(v, vs[0]))
        .collect::<Result<Vec<_>, _>>()?;
    let diffs = t.stack(&diffs)?;
    let weighted = t.mul(w, diffs)?;
    let shift = t.sum_axis0(weighted)?;
    t.add(vs[0], shift)
}

/// `|sin((x - y) / 2)|` elementwise.
fn half_sin_abs(t: &mut Tape, x: Var, y: Var) -> Result<Var, AutodiffError> {
    let d = t.sub(x, y)?;
    let h = t.scale(d, 0.5);
    let s = t.sin(h);
    Ok(t.abs(s))
}

/// Elementwise KL(Beta(a1, b1) || Beta(a2, b2)).
fn beta_kl(t: &mut Tape, a1: Var, b1: Var, a2: Var, b2: Var) -> Result<Var, AutodiffError> {
    let log_beta = |t: &mut Tape, a: Var, b: Var| -> Result<Var, AutodiffError> {
        let la = t.lgamma(a)?;
        let lb = t.lgamma(b)?;
        let ab = t.add(a, b)?;
        let lab = t.lgamma(ab)?;
        let s = t.add(la, lb)?;
        t.sub(s, lab)
    };
    let lb2 = log_beta(t, a2, b2)?;
    let lb1 = log_beta(t, a1, b1)?;
    let mut kl = t.sub(lb2, lb1)?;
    let da = t.sub(a1, a2)?;
    let psi_a = t.digamma(a1)?;
    let term = t.mul(da, psi_a)?;
    kl = t.add(kl, term)?;
    let db = t.sub(b1, b2)?;
    let psi_b = t.digamma(b1)?;
    let term = t.mul(db, psi_b)?;
    kl = t.add(kl, term)?;
    let s1 = t.add(a1, b1)?;
    let s2 = t.add(a2, b2)?;
    let ds = t.sub(s2, s1)?;
    let psi_s = t.digamma(s1)?;
    let term = t.mul(ds, psi_s)?;
    t.add(kl, term)
}

/// A model: operator layout, parameter values, and the vocabularies the
/// entity and role tables are indexed by.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub ops: Operators,
    pub params: ParamStore,
    pub entity_names: Vec<String>,
    pub relation_names: Vec<String>,
    /// Free-form configuration echo stored in the model file header.
    pub meta: serde_json::Value,
}

impl Model {
    pub fn new(
        geometry: Geometry,
        dim: usize,
        entity_names: Vec<String>,
        relation_names: Vec<String>,
        config: GeometryConfig,
        rng: &mut impl Rng,
    ) -> Self {
        let mut params = ParamStore::new();
        let ops = Operators::init(
            geometry,
            dim,
            entity_names.len(),
            relation_names.len(),
            config,
            &mut params,
            rng,
        );
        Self {
            ops,
            params,
            entity_names,
            relation_names,
            meta: serde_json::Value::Null,
        }
    }

    pub fn geometry(&self) -> Geometry {
        self.ops.geometry
    }
}
