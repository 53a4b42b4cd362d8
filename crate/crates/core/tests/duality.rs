use std::collections::BTreeMap;

use proptest::prelude::*;

use spline_manifold::atlas::ProtoManifold;
use spline_manifold::duality::*;
use spline_manifold::fixtures::*;
use spline_manifold::knots::eval_univariate;
use spline_manifold::refine::refine_levels;
use spline_manifold::*;

const TOL: f64 = 1e-10;

fn space(proto: ProtoManifold, p: usize) -> SplineSpace {
    SplineSpace::assemble(ParameterManifold::build(proto).unwrap(), p).unwrap()
}

fn positive_spaces() -> Vec<(&'static str, SplineSpace)> {
    vec![
        ("star3-p2", space(star_atlas(3, 2).unwrap(), 2)),
        ("star3-p3", space(star_atlas(3, 3).unwrap(), 3)),
        ("star5-p2", space(star_atlas(5, 2).unwrap(), 2)),
        ("star5-p3", space(star_atlas(5, 3).unwrap(), 3)),
        ("lshape", space(lshape_atlas(2).unwrap(), 2)),
        ("torus", space(torus_atlas().unwrap(), 2)),
    ]
}

/// Gram matrix recomputed densely from the raw functional points and the
/// global evaluator, independent of the sparse row assembly.
fn dense_gram(s: &SplineSpace, duals: &DualSet) -> Vec<Vec<f64>> {
    duals
        .functionals
        .iter()
        .map(|f| (0..s.len()).map(|b| f.apply(|o, x| s.eval(b, o, x).0)).collect())
        .collect()
}

fn max_identity_error(g: &[Vec<f64>]) -> f64 {
    let mut e: f64 = 0.0;
    for (i, row) in g.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            e = e.max((v - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    e
}

#[test]
fn explicit_and_corrected_duals_are_biorthogonal() {
    for (name, s) in positive_spaces() {
        let explicit = build_explicit_dual(&s).unwrap();
        let proto = build_proto_duals(&s).unwrap();
        let corrected = build_corrected_dual(&s, &proto).unwrap();
        let ge = explicit.gram(&s);
        let gc = corrected.gram(&s);
        assert!(gram_residual(&ge) <= TOL, "{name} explicit {}", gram_residual(&ge));
        assert!(gram_residual(&gc) <= TOL, "{name} corrected {}", gram_residual(&gc));
        assert!(gram_distance(&ge, &gc) <= TOL, "{name}");
    }
}

#[test]
fn dense_gram_matches_sparse_rows() {
    let s = space(star_atlas(3, 2).unwrap(), 2);
    let d = build_explicit_dual(&s).unwrap();
    assert!(max_identity_error(&dense_gram(&s, &d)) <= TOL);
}

#[test]
fn three_dimensional_spaces_are_biorthogonal() {
    for proto in [cover_mesh(&cube_raw(), 2).unwrap(), cover_mesh(&extruded_star_raw(3, 2), 2).unwrap()] {
        let s = space(proto, 2);
        let d = analysis::default_duals(&s).unwrap();
        assert!(gram_residual(&d.gram(&s)) <= TOL);
    }
}

#[test]
fn duality_survives_refinement() {
    for p in [2, 3] {
        let base = star_atlas(3, p).unwrap();
        for level in 1..=2 {
            let s = space(refine_levels(&base, level).unwrap(), p);
            let d = build_explicit_dual(&s).unwrap();
            assert!(gram_residual(&d.gram(&s)) <= TOL, "p={p} level={level}");
        }
    }
}

#[test]
fn functionals_sample_inside_their_support() {
    for (name, s) in positive_spaces() {
        let d = build_explicit_dual(&s).unwrap();
        for (a, f) in d.functionals.iter().enumerate() {
            for o in f.orbits() {
                assert!(s.functions[a].support.binary_search(&o).is_ok(), "{name}: function {a} orbit {o}");
            }
        }
    }
}

#[test]
fn disjoint_supports_give_structural_zeros() {
    let s = space(star_atlas(5, 2).unwrap(), 2);
    let d = build_explicit_dual(&s).unwrap();
    for (a, f) in d.functionals.iter().enumerate() {
        let row = f.gram_row(&s);
        for b in 0..s.len() {
            let disjoint = s.functions[a]
                .support
                .iter()
                .all(|o| s.functions[b].support.binary_search(o).is_err());
            if disjoint {
                assert!(!row.contains_key(&b), "{a} sees {b} through disjoint supports");
            }
        }
    }
}

#[test]
fn proto_duals_satisfy_block_duality() {
    let spaces = [
        space(star_atlas(3, 2).unwrap(), 2),
        space(cover_mesh(&cube_raw(), 2).unwrap(), 2),
        space(cover_mesh(&extruded_star_raw(3, 2), 2).unwrap(), 2),
    ];
    for s in &spaces {
        let proto = build_proto_duals(s).unwrap();
        let g = proto.gram(s);
        let class = |a: usize| s.functions[a].class;
        for (a, row) in g.iter().enumerate() {
            let checked: Vec<usize> = match class(a) {
                FunctionClass::Structured => (0..s.len()).collect(),
                FunctionClass::Edge => (0..s.len()).filter(|&b| class(b) != FunctionClass::Structured).collect(),
                FunctionClass::Vertex => (0..s.len()).filter(|&b| class(b) == FunctionClass::Vertex).collect(),
            };
            for b in checked {
                let want = if a == b { 1.0 } else { 0.0 };
                let got = row.get(&b).copied().unwrap_or(0.0);
                assert!((got - want).abs() <= TOL, "{:?} {a} vs {b}: {got}", class(a));
            }
        }
    }
}

#[test]
fn vertex_dual_averages_segment_duals() {
    for k in [3, 5] {
        let s = space(star_atlas(k, 2).unwrap(), 2);
        let d = build_explicit_dual(&s).unwrap();
        let v = s.functions.iter().position(|f| f.class == FunctionClass::Vertex).unwrap();
        let f = &d.functionals[v];
        assert!(matches!(f.kind, DualKind::Vertex { segments, .. } if segments == k));
        let mut per_orbit: BTreeMap<usize, f64> = BTreeMap::new();
        for q in &f.points {
            *per_orbit.entry(q.orbit).or_default() += q.w * s.eval(v, q.orbit, &q.x).0;
        }
        assert_eq!(per_orbit.len(), k);
        for c in per_orbit.values() {
            assert!((c - 1.0 / k as f64).abs() < 1e-12);
        }
        assert!((f.apply_basis(&s, v) - 1.0).abs() < 1e-12);
        assert_eq!(f.apply(|_, _| 0.0), 0.0);
    }
}

#[test]
fn corrections_vanish_without_crossing_supports() {
    let s = space(square_atlas(3, 4).unwrap(), 3);
    let proto = build_proto_duals(&s).unwrap();
    let corrected = build_corrected_dual(&s, &proto).unwrap();
    assert_eq!(proto, corrected);
}

#[test]
fn independence_is_certified_on_positive_fixtures() {
    for (name, s) in positive_spaces() {
        let d = analysis::default_duals(&s).unwrap();
        let c = certify_linear_independence(&s, &d, TOL);
        assert!(c.certified, "{name}: {}", c.residual);
    }
    let single = space(square_atlas(2, 1).unwrap(), 2);
    let d = build_explicit_dual(&single).unwrap();
    assert!(certify_linear_independence(&single, &d, TOL).certified);
}

#[test]
fn duplicated_function_defeats_certification() {
    let s = space(star_atlas(3, 2).unwrap(), 2);
    for a in [0, s.len() / 2] {
        let dup = s.clone().with_duplicate(a);
        let cert = match analysis::default_duals(&dup) {
            Ok(d) => certify_linear_independence(&dup, &d, TOL),
            Err(_) => continue,
        };
        assert!(!cert.certified);
        assert!(cert.residual >= 0.5);
    }
}

#[test]
fn dual_compatibility_verdicts() {
    for (name, s) in positive_spaces() {
        let r = check_dual_compatibility(&s);
        assert!(r.verdict, "{name}: {:?}", &r.failures[..r.failures.len().min(3)]);
        assert!(r.pairs_checked > 0);
    }
    assert!(check_dual_compatibility(&space(square_atlas(2, 4).unwrap(), 2)).verdict);
}

#[test]
fn incompatible_fixture_is_caught() {
    let (proto, overrides) = incompatible_square().unwrap();
    let s = SplineSpace::assemble_with(ParameterManifold::build(proto).unwrap(), 2, &overrides).unwrap();
    let injected = s.global_of(overrides[0].chart, overrides[0].local).unwrap();
    let r = check_dual_compatibility(&s);
    assert!(!r.verdict);
    assert!(r.failures.iter().any(|f| f.first == injected || f.second == injected));
    let naive = build_explicit_dual(&s).unwrap();
    assert!(gram_residual(&naive.gram(&s)) > 1e-3);
}

#[test]
fn overlap_accepts_mesh_windows_only() {
    let a = [0.25, 0.5, 0.75, 1.0];
    assert!(knots::overlap_and_differ(&a, &[0.0, 0.25, 0.5, 0.75]));
    assert!(!knots::overlap_and_differ(&a, &a));
    assert!(!knots::overlap_and_differ(&[0.25, 0.5, 0.5, 0.75], &[0.0, 0.25, 0.5, 0.75]));
}

#[test]
fn uniform_line_duals_are_exact() {
    for p in 1..=4 {
        let line = uniform_knots(p, 1.0, 0.125);
        let windows: Vec<&[f64]> = line.windows(p + 2).collect();
        for (i, wi) in windows.iter().enumerate() {
            let d = univariate_dual(wi).unwrap();
            for (j, wj) in windows.iter().enumerate() {
                let got = d.apply(|y| eval_univariate(wj, y).unwrap());
                assert!((got - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12, "p={p} {i} {j}: {got}");
            }
        }
    }
}

#[test]
fn norm_constant_is_level_independent() {
    let constants: Vec<f64> = [4usize, 8, 16, 32]
        .iter()
        .map(|&n| {
            let line = uniform_knots(2, 1.0, 1.0 / n as f64);
            let mid = line.len() / 2 - 2;
            univariate_dual(&line[mid..mid + 4]).unwrap().norm_constant()
        })
        .collect();
    for c in &constants {
        assert!((c - constants[0]).abs() < 1e-9 * constants[0], "{constants:?}");
    }
}

/// Random knot line: `p + 1` fold ends, interior knots of multiplicity at
/// most `p`.
fn knot_line() -> impl Strategy<Value = (usize, Vec<f64>)> {
    (1usize..=4).prop_flat_map(|p| {
        proptest::collection::vec((1u8..4, 1usize..=p), 1..6).prop_map(move |steps| {
            let mut line = vec![0.0; p + 1];
            let mut x = 0.0;
            for (dx, m) in &steps[..steps.len() - 1] {
                x += f64::from(*dx);
                line.extend(std::iter::repeat_n(x, *m));
            }
            x += f64::from(steps[steps.len() - 1].0);
            line.extend(std::iter::repeat_n(x, p + 1));
            (p, line)
        })
    })
}

proptest! {
    #[test]
    fn univariate_duals_are_biorthogonal((p, line) in knot_line()) {
        let windows: Vec<&[f64]> = line.windows(p + 2).collect();
        for (i, wi) in windows.iter().enumerate() {
            let d = univariate_dual(wi).unwrap();
            for (j, wj) in windows.iter().enumerate() {
                let got = d.apply(|y| eval_univariate(wj, y).unwrap());
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((got - want).abs() < TOL, "p={} line={:?} {} {}: {}", p, line, i, j, got);
            }
        }
    }

    #[test]
    fn univariate_dual_norm_bound((p, line) in knot_line(), freq in 0.5f64..6.0, phase in 0.0f64..3.0) {
        let w = &line[..p + 2];
        let d = univariate_dual(w).unwrap();
        let (lo, hi) = d.interval;
        let f = |y: f64| (freq * y + phase).sin();
        // L2 norm of f on the functional's interval by a fine midpoint rule
        let n = 4000;
        let h = (hi - lo) / n as f64;
        let l2 = ((0..n).map(|k| f(lo + (k as f64 + 0.5) * h).powi(2)).sum::<f64>() * h).sqrt();
        let bound = d.norm_constant() * (hi - lo).powf(-0.5) * l2;
        prop_assert!(d.apply(f).abs() <= bound * (1.0 + 1e-6) + 1e-12);
    }
}
