//! Finite-difference checks of every geometry operator at random points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Geometry, GeometryConfig, GeometryError, Model, QueryEmb, RoleVec};
use crate::autodiff::{grad_check, GradCheckOptions, GradCheckReport, ParamId, ParamStore, Tape, Tensor, Var};

pub const OPERATORS: [&str; 7] = [
    "rel_transform",
    "intersect",
    "complement",
    "rcombine",
    "distance",
    "diff",
    "containment_penalty",
];

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorCheck {
    pub operator: &'static str,
    /// `None` when the geometry does not support the operator.
    pub report: Option<GradCheckReport>,
}

const DIM: usize = 3;

struct Point {
    model: Model,
    /// Raw parameter vectors of three query embeddings.
    queries: Vec<(ParamId, ParamId)>,
    weights: (Tensor, Tensor),
}

fn sample_point(g: Geometry, rng: &mut ChaCha8Rng) -> Point {
    let mut model = Model::new(
        g,
        DIM,
        (0..3).map(|i| format!("e{i}")).collect(),
        (0..2).map(|i| format!("r{i}")).collect(),
        GeometryConfig::default(),
        rng,
    );
    let (ra, rb) = match g {
        Geometry::Box => ((-1.0, 1.0), (0.1, 1.0)),
        Geometry::Beta => ((0.5, 3.0), (0.5, 3.0)),
        Geometry::Cone => ((-3.0, 3.0), (0.3, 6.0)),
    };
    let vec = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
        Tensor::vector((0..DIM).map(|_| rng.gen_range(lo..hi)).collect())
    };
    let queries = (0..3)
        .map(|i| {
            let a = vec(rng, ra);
            let b = vec(rng, rb);
            (
                model.params.add(format!("query{i}.a"), a),
                model.params.add(format!("query{i}.b"), b),
            )
        })
        .collect();
    let width = g.role_width(DIM);
    let weights = (
        Tensor::vector((0..width).map(|_| rng.gen_range(0.5..1.5)).collect()),
        Tensor::vector((0..DIM).map(|_| rng.gen_range(0.5..1.5)).collect()),
    );
    Point { model, queries, weights }
}

fn query(t: &mut Tape, s: &ParamStore, g: Geometry, ids: (ParamId, ParamId)) -> QueryEmb {
    QueryEmb::new(g, t.param(s, ids.0), t.param(s, ids.1))
}

fn weighted(t: &mut Tape, w: &Tensor, v: Var) -> Result<Var, GeometryError> {
    let n = t.value(v).len();
    let w = t.vector(w.data()[..n].to_vec());
    let y = t.mul(v, w)?;
    Ok(t.sum(y))
}

/// Scalar summary of an embedding with fixed weights.
fn reduce(t: &mut Tape, weights: &(Tensor, Tensor), q: QueryEmb) -> Result<Var, GeometryError> {
    let (a, b) = q.parts();
    let sa = weighted(t, &weights.0, a)?;
    let sb = weighted(t, &weights.1, b)?;
    Ok(t.add(sa, sb)?)
}

fn run_operator(
    op: &str,
    t: &mut Tape,
    s: &ParamStore,
    point: &Point,
) -> Result<Var, GeometryError> {
    let ops = &point.model.ops;
    let g = ops.geometry;
    let q: Vec<QueryEmb> = point.queries.iter().map(|&ids| query(t, s, g, ids)).collect();
    match op {
        "rel_transform" => {
            let r = ops.role(t, s, 1, true)?;
            let out = ops.rel_transform(t, s, q[0], r)?;
            reduce(t, &point.weights, out)
        }
        "intersect" => {
            let out = ops.intersect(t, s, &q)?;
            reduce(t, &point.weights, out)
        }
        "complement" => {
            let out = ops.complement(t, q[0])?;
            reduce(t, &point.weights, out)
        }
        "rcombine" => {
            let roles: Vec<RoleVec> = [(0, false), (1, true), (0, true)]
                .iter()
                .map(|&(r, inv)| ops.role(t, s, r, inv))
                .collect::<Result<_, _>>()?;
            let out = ops.rcombine(t, s, &roles)?;
            weighted(t, &point.weights.0, out.0)
        }
        "distance" => {
            let e = ops.nominal(t, s, 1)?;
            ops.distance(t, e, q[0])
        }
        "diff" => ops.diff(t, q[0], q[1]),
        "containment_penalty" => ops.containment_penalty(t, s, q[0], q[1]),
        other => unreachable!("unknown operator {other}"),
    }
}

/// Checks every operator of `geometry` at `points` random points (fresh
/// network weights and inputs per point) and reports the worst relative
/// error per operator.
pub fn gradcheck_operators(
    geometry: Geometry,
    seed: u64,
    points: usize,
    opts: &GradCheckOptions,
) -> Result<Vec<OperatorCheck>, GeometryError> {
    let mut out = Vec::new();
    for (k, &op) in OPERATORS.iter().enumerate() {
        if op == "complement" && !geometry.supports_negation() {
            out.push(OperatorCheck { operator: op, report: None });
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((k as u64 + 1) << 32));
        let mut total = GradCheckReport::default();
        for _ in 0..points {
            let mut point = sample_point(geometry, &mut rng);
            let ids: Vec<ParamId> = point.model.params.ids().collect();
            let mut store = std::mem::take(&mut point.model.params);
            let report = grad_check(&mut store, &ids, opts, |t: &mut Tape, s: &ParamStore| {
                run_operator(op, t, s, &point)
            })?;
            total.merge(report);
        }
        out.push(OperatorCheck {
            operator: op,
            report: Some(total),
        });
    }
    Ok(out)
}
