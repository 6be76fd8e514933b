use std::f64::consts::PI;

use dage::autodiff::{GradCheckOptions, Tape};
use dage::geometry::{gradcheck_operators, Geometry, GeometryConfig, GeometryError, Model, QueryEmb, RoleVec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(g: Geometry, dim: usize, seed: u64) -> Model {
    model_with(g, dim, seed, GeometryConfig::default())
}

fn model_with(g: Geometry, dim: usize, seed: u64, config: GeometryConfig) -> Model {
    Model::new(
        g,
        dim,
        (0..4).map(|i| format!("e{i}")).collect(),
        (0..3).map(|i| format!("r{i}")).collect(),
        config,
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
}

fn emb(t: &mut Tape, g: Geometry, a: &[f64], b: &[f64]) -> QueryEmb {
    let a = t.vector(a.to_vec());
    let b = t.vector(b.to_vec());
    QueryEmb::new(g, a, b)
}

fn values(t: &Tape, q: QueryEmb) -> (Vec<f64>, Vec<f64>) {
    let (a, b) = q.parts();
    (t.value(a).to_vec(), t.value(b).to_vec())
}

fn random_emb(t: &mut Tape, g: Geometry, d: usize, rng: &mut ChaCha8Rng) -> QueryEmb {
    let (ra, rb) = match g {
        Geometry::Box => ((-1.0, 1.0), (0.0, 1.0)),
        Geometry::Beta => ((0.05, 5.0), (0.05, 5.0)),
        Geometry::Cone => ((-PI, PI), (0.0, 2.0 * PI)),
    };
    let a: Vec<f64> = (0..d).map(|_| rng.gen_range(ra.0..ra.1)).collect();
    let b: Vec<f64> = (0..d).map(|_| rng.gen_range(rb.0..rb.1)).collect();
    emb(t, g, &a, &b)
}

#[test]
fn nominals() {
    let mut t = Tape::new();
    let cone = model(Geometry::Cone, 4, 1);
    let q = cone.ops.nominal(&mut t, &cone.params, 2).unwrap();
    assert!(values(&t, q).1.iter().all(|&x| x == 0.0));
    let boxes = model(Geometry::Box, 4, 1);
    let q = boxes.ops.nominal(&mut t, &boxes.params, 2).unwrap();
    assert!(values(&t, q).1.iter().all(|&x| x == 0.0));
    let beta = model(Geometry::Beta, 4, 1);
    let q1 = beta.ops.nominal(&mut t, &beta.params, 3).unwrap();
    let q2 = beta.ops.nominal(&mut t, &beta.params, 3).unwrap();
    assert_eq!(values(&t, q1), values(&t, q2));
    assert!(values(&t, q1).0.iter().all(|&x| x > 0.0));
    assert!(matches!(
        beta.ops.nominal(&mut t, &beta.params, 4),
        Err(GeometryError::UnknownId(_))
    ));
}

#[test]
fn box_rel_transform_adds_role_vector() {
    let mut m = model(Geometry::Box, 2, 3);
    let (ent, role) = (m.ops.entity_table(), m.ops.role_table());
    m.params.get_mut(ent).data_mut()[..2].copy_from_slice(&[1.0, 2.0]);
    m.params.get_mut(role).data_mut()[..4].copy_from_slice(&[0.5, -1.0, 0.3, -0.2]);
    let mut t = Tape::new();
    let q = m.ops.nominal(&mut t, &m.params, 0).unwrap();
    let r = m.ops.role(&mut t, &m.params, 0, false).unwrap();
    let out = m.ops.rel_transform(&mut t, &m.params, q, r).unwrap();
    assert_eq!(values(&t, out), (vec![1.5, 1.0], vec![0.3, 0.0]));
}

#[test]
fn box_offsets_only_grow_and_cone_apertures_stay_in_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for g in [Geometry::Box, Geometry::Cone] {
        let m = model(g, 5, 5);
        for _ in 0..200 {
            let mut t = Tape::new();
            let q = random_emb(&mut t, g, 5, &mut rng);
            let r = m.ops.role(&mut t, &m.params, rng.gen_range(0..3), rng.gen()).unwrap();
            let out = m.ops.rel_transform(&mut t, &m.params, q, r).unwrap();
            let (before, after) = (values(&t, q), values(&t, out));
            if g == Geometry::Box {
                assert!(after.1.iter().zip(&before.1).all(|(a, b)| a >= b));
            } else {
                assert!(after.1.iter().all(|&x| (0.0..=2.0 * PI).contains(&x)));
                assert!(after.0.iter().all(|&x| (-PI..PI).contains(&x)));
            }
        }
    }
}

#[test]
fn intersection_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for g in Geometry::ALL {
        let m = model(g, 4, 7);
        for k in 2..5 {
            for _ in 0..50 {
                let mut t = Tape::new();
                let qs: Vec<QueryEmb> = (0..k).map(|_| random_emb(&mut t, g, 4, &mut rng)).collect();
                let out = m.ops.intersect(&mut t, &m.params, &qs).unwrap();
                let (a, b) = values(&t, out);
                match g {
                    Geometry::Box | Geometry::Cone => {
                        for j in 0..4 {
                            let min = qs.iter().map(|q| values(&t, *q).1[j]).fold(f64::INFINITY, f64::min);
                            assert!(b[j] <= min && b[j] >= 0.0);
                        }
                        if g == Geometry::Cone {
                            assert!(a.iter().all(|&x| (-PI..PI).contains(&x)));
                        }
                    }
                    Geometry::Beta => assert!(a.iter().chain(&b).all(|&x| x > 0.0)),
                }
            }
        }
    }
    let mut t = Tape::new();
    let m = model(Geometry::Box, 2, 1);
    let q = emb(&mut t, Geometry::Box, &[0.0, 0.0], &[1.0, 1.0]);
    assert!(matches!(m.ops.intersect(&mut t, &m.params, &[q]), Err(GeometryError::FewerThanTwo)));
}

#[test]
fn beta_intersection_of_identical_inputs_is_identity() {
    let m = model(Geometry::Beta, 3, 8);
    let mut t = Tape::new();
    for k in 2..6 {
        let q = emb(&mut t, Geometry::Beta, &[0.3, 1.7, 4.2], &[2.5, 0.1, 1.0]);
        let out = m.ops.intersect(&mut t, &m.params, &vec![q; k]).unwrap();
        assert_eq!(values(&t, out), values(&t, q));
    }
}

#[test]
fn complements() {
    let mut t = Tape::new();
    let beta = model(Geometry::Beta, 1, 1);
    let q = emb(&mut t, Geometry::Beta, &[2.0], &[4.0]);
    let c = beta.ops.complement(&mut t, q).unwrap();
    assert_eq!(values(&t, c), (vec![0.5], vec![0.25]));

    let cone = model(Geometry::Cone, 1, 1);
    let q = emb(&mut t, Geometry::Cone, &[0.0], &[0.5]);
    let c = cone.ops.complement(&mut t, q).unwrap();
    assert_eq!(values(&t, c), (vec![-PI], vec![2.0 * PI - 0.5]));

    let boxes = model(Geometry::Box, 1, 1);
    let q = emb(&mut t, Geometry::Box, &[0.0], &[0.5]);
    assert!(matches!(boxes.ops.complement(&mut t, q), Err(GeometryError::UnsupportedNegation)));
}

#[test]
fn complement_involutions() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let beta = model(Geometry::Beta, 6, 1);
    let cone = model(Geometry::Cone, 6, 1);
    for _ in 0..500 {
        let mut t = Tape::new();
        let q = random_emb(&mut t, Geometry::Beta, 6, &mut rng);
        let c = beta.ops.complement(&mut t, q).unwrap();
        let cc = beta.ops.complement(&mut t, c).unwrap();
        assert_eq!(values(&t, cc), values(&t, q));

        let q = random_emb(&mut t, Geometry::Cone, 6, &mut rng);
        let c = cone.ops.complement(&mut t, q).unwrap();
        let cc = cone.ops.complement(&mut t, c).unwrap();
        let (orig, back) = (values(&t, q), values(&t, cc));
        for j in 0..6 {
            let d = (orig.0[j] - back.0[j]).rem_euclid(2.0 * PI);
            assert!(d.min(2.0 * PI - d) < 1e-9);
            assert!((orig.1[j] - back.1[j]).abs() < 1e-9);
        }
    }
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn rcombine_is_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for g in Geometry::ALL {
        let m = model(g, 4, 11);
        let width = g.role_width(4);
        for k in 1..=4 {
            let mut t = Tape::new();
            let roles: Vec<RoleVec> = (0..k)
                .map(|_| RoleVec(t.vector((0..width).map(|_| rng.gen_range(-1.0..1.0)).collect())))
                .collect();
            let base = m.ops.rcombine(&mut t, &m.params, &roles).unwrap();
            let base = t.value(base.0).to_vec();
            for p in permutations(k) {
                let perm: Vec<RoleVec> = p.iter().map(|&i| roles[i]).collect();
                let out = m.ops.rcombine(&mut t, &m.params, &perm).unwrap();
                for (x, y) in t.value(out.0).iter().zip(&base) {
                    assert!((x - y).abs() <= 1e-9 * y.abs().max(1e-12), "{g} k={k}");
                }
            }
        }
    }
}

#[test]
fn rcombine_of_copies_is_value_net() {
    for g in Geometry::ALL {
        let m = model(g, 4, 12);
        let mut t = Tape::new();
        let r = m.ops.role(&mut t, &m.params, 1, true).unwrap();
        let v = m.ops.rcombine_value(&mut t, &m.params, r).unwrap();
        for k in 1..=4 {
            let out = m.ops.rcombine(&mut t, &m.params, &vec![r; k]).unwrap();
            assert_eq!(t.value(out.0), t.value(v.0), "{g} k={k}");
        }
    }
}

#[test]
fn rcompose() {
    let m = model(Geometry::Box, 2, 13);
    let mut t = Tape::new();
    let r = t.vector(vec![0.4, -0.3, 0.2, -0.5]);
    let zero = t.vector(vec![0.0; 4]);
    let out = m.ops.rcompose(&mut t, RoleVec(r), RoleVec(zero)).unwrap();
    assert_eq!(t.value(out.0), t.value(r));

    let r = m.ops.role(&mut t, &m.params, 0, false).unwrap();
    let s = m.ops.role(&mut t, &m.params, 2, true).unwrap();
    let q = emb(&mut t, Geometry::Box, &[1.0, 2.0], &[0.1, 0.2]);
    let rs = m.ops.rcompose(&mut t, r, s).unwrap();
    let once = m.ops.rel_transform(&mut t, &m.params, q, rs).unwrap();
    let step = m.ops.rel_transform(&mut t, &m.params, q, r).unwrap();
    let twice = m.ops.rel_transform(&mut t, &m.params, step, s).unwrap();
    let (a, b) = (values(&t, once), values(&t, twice));
    for (x, y) in a.0.iter().chain(&a.1).zip(b.0.iter().chain(&b.1)) {
        assert!((x - y).abs() < 1e-12);
    }

    let beta = model(Geometry::Beta, 2, 13);
    let r = t.vector(vec![0.4, -0.3]);
    assert!(matches!(
        beta.ops.rcompose(&mut t, RoleVec(r), RoleVec(r)),
        Err(GeometryError::UnsupportedComposition)
    ));
}

#[test]
fn distance_examples() {
    let mut t = Tape::new();
    let m = model(Geometry::Box, 1, 1);
    let q = emb(&mut t, Geometry::Box, &[0.0], &[1.0]);
    let e = emb(&mut t, Geometry::Box, &[3.0], &[0.0]);
    let d = m.ops.distance(&mut t, e, q).unwrap();
    assert!((t.item(d) - 2.02).abs() < 1e-12);
    let at_center = emb(&mut t, Geometry::Box, &[0.0], &[0.0]);
    let d = m.ops.distance(&mut t, at_center, q).unwrap();
    assert_eq!(t.item(d), 0.0);

    let beta = model(Geometry::Beta, 3, 1);
    let p = emb(&mut t, Geometry::Beta, &[0.7, 2.0, 9.0], &[1.3, 0.2, 3.0]);
    let d = beta.ops.distance(&mut t, p, p).unwrap();
    assert!(t.item(d).abs() < 1e-12);
}

#[test]
fn box_outside_distance_vanishes_exactly_inside() {
    let config = GeometryConfig {
        alpha_in: 0.0,
        ..GeometryConfig::default()
    };
    let m = model_with(Geometry::Box, 3, 1, config);
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..1000 {
        let mut t = Tape::new();
        let q = random_emb(&mut t, Geometry::Box, 3, &mut rng);
        let p: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let e = emb(&mut t, Geometry::Box, &p, &[0.0; 3]);
        let d = m.ops.distance(&mut t, e, q).unwrap();
        let (c, o) = values(&t, q);
        let inside = (0..3).all(|j| (p[j] - c[j]).abs() <= o[j]);
        assert_eq!(t.item(d) == 0.0, inside);
    }
}

#[test]
fn cone_members_have_no_outside_distance() {
    let config = GeometryConfig {
        cone_lambda: 0.0,
        ..GeometryConfig::default()
    };
    let m = model_with(Geometry::Cone, 1, 1, config);
    let mut t = Tape::new();
    let q = emb(&mut t, Geometry::Cone, &[3.0], &[1.0]);
    // 3.3 and -2.9 (wrapped past pi) are inside [2.5, 3.5]
    for (v, inside) in [(3.3, true), (-2.9, true), (2.4, false), (0.0, false)] {
        let e = emb(&mut t, Geometry::Cone, &[v], &[0.0]);
        let d = m.ops.distance(&mut t, e, q).unwrap();
        assert_eq!(t.item(d) == 0.0, inside, "v = {v}");
    }
}

#[test]
fn distance_and_diff_are_nonnegative() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for g in Geometry::ALL {
        let m = model(g, 4, 16);
        for _ in 0..300 {
            let mut t = Tape::new();
            let q1 = random_emb(&mut t, g, 4, &mut rng);
            let q2 = random_emb(&mut t, g, 4, &mut rng);
            let e = m.ops.nominal(&mut t, &m.params, rng.gen_range(0..4)).unwrap();
            let d = m.ops.distance(&mut t, e, q1).unwrap();
            assert!(t.item(d) >= 0.0);
            let d12 = m.ops.diff(&mut t, q1, q2).unwrap();
            let d21 = m.ops.diff(&mut t, q2, q1).unwrap();
            assert!(t.item(d12) >= 0.0);
            assert_eq!(t.item(d12), t.item(d21));
            let d11 = m.ops.diff(&mut t, q1, q1).unwrap();
            assert_eq!(t.item(d11), 0.0);
        }
    }
    let mut t = Tape::new();
    let m = model(Geometry::Box, 2, 1);
    let a = emb(&mut t, Geometry::Box, &[0.0, 0.0], &[0.5, 0.5]);
    let b = emb(&mut t, Geometry::Box, &[1.0, 1.0], &[0.5, 0.5]);
    let d = m.ops.diff(&mut t, a, b).unwrap();
    assert_eq!(t.item(d), 2.0);
}

#[test]
fn containment_penalties() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let beta = model(Geometry::Beta, 3, 18);
    let boxes = model(Geometry::Box, 3, 18);
    for _ in 0..200 {
        let mut t = Tape::new();
        let q = random_emb(&mut t, Geometry::Beta, 3, &mut rng);
        let p = beta.ops.containment_penalty(&mut t, &beta.params, q, q).unwrap();
        assert_eq!(t.item(p), 0.0);
        let mut t = Tape::new();
        let a = random_emb(&mut t, Geometry::Box, 3, &mut rng);
        let b = random_emb(&mut t, Geometry::Box, 3, &mut rng);
        let p = boxes.ops.containment_penalty(&mut t, &boxes.params, a, b).unwrap();
        assert!((0.0..=1.0).contains(&t.item(p)));
    }
}

#[test]
fn box_penalty_grows_as_outer_moves_away() {
    // freeze the intersection gate at sigmoid(0) so only the geometry moves
    let mut m = model(Geometry::Box, 1, 19);
    for id in m.params.ids().collect::<Vec<_>>() {
        if m.params.name(id).starts_with("intersect.deepsets") {
            m.params.get_mut(id).data_mut().fill(0.0);
        }
    }
    let mut last = -1.0;
    for step in 0..20 {
        let shift = 0.1 * step as f64;
        let size = 1.0 - 0.04 * step as f64;
        let mut t = Tape::new();
        let inner = emb(&mut t, Geometry::Box, &[0.0], &[1.0]);
        let outer = emb(&mut t, Geometry::Box, &[shift], &[size]);
        let p = m.ops.containment_penalty(&mut t, &m.params, inner, outer).unwrap();
        let p = t.item(p);
        assert!(p > last, "step {step}: {p} <= {last}");
        last = p;
    }
}

#[test]
fn all_operators_pass_grad_check() {
    for g in Geometry::ALL {
        let checks = gradcheck_operators(g, 1, 20, &GradCheckOptions::default()).unwrap();
        assert_eq!(checks.len(), 7);
        for c in checks {
            match c.report {
                Some(r) => {
                    assert!(r.max_rel_error < 1e-4, "{g} {}: {r:?}", c.operator);
                    assert!(r.checked > 0);
                }
                None => assert!(g == Geometry::Box && c.operator == "complement"),
            }
        }
    }
}

#[test]
fn grad_check_detects_injected_fault() {
    let opts = GradCheckOptions {
        fault: Some("softplus".into()),
        ..GradCheckOptions::default()
    };
    let checks = gradcheck_operators(Geometry::Beta, 1, 2, &opts).unwrap();
    let worst = checks
        .iter()
        .filter_map(|c| c.report.map(|r| r.max_rel_error))
        .fold(0.0, f64::max);
    assert!(worst > 1e-4);
}
