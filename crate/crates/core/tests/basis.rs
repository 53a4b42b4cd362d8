use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use spline_manifold::atlas::ProtoManifold;
use spline_manifold::basis::{eval_proto, proto_basis, ElementFrame, ProtoRepr};
use spline_manifold::fixtures::*;
use spline_manifold::knots::{eval_univariate, overlap, LocalKnotVector};
use spline_manifold::*;

fn space(proto: ProtoManifold, p: usize) -> SplineSpace {
    SplineSpace::assemble(ParameterManifold::build(proto).unwrap(), p).unwrap()
}

/// Textbook Cox-de Boor recursion over the local knots.
fn cox_de_boor(knots: &[f64], x: f64) -> f64 {
    fn n(k: &[f64], i: usize, p: usize, x: f64) -> f64 {
        if p == 0 {
            return if k[i] <= x && x < k[i + 1] { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        if k[i + p] > k[i] {
            v += (x - k[i]) / (k[i + p] - k[i]) * n(k, i, p - 1, x);
        }
        if k[i + p + 1] > k[i + 1] {
            v += (k[i + p + 1] - x) / (k[i + p + 1] - k[i + 1]) * n(k, i + 1, p - 1, x);
        }
        v
    }
    n(knots, 0, knots.len() - 2, x)
}

#[test]
fn univariate_values() {
    assert_abs_diff_eq!(eval_univariate(&[0.0, 0.0, 0.0, 1.0], 0.0).unwrap(), 1.0, epsilon = 1e-15);
    assert_abs_diff_eq!(eval_univariate(&[0.0, 0.0, 0.0, 1.0], 0.5).unwrap(), 0.25, epsilon = 1e-15);
    assert_abs_diff_eq!(eval_univariate(&[0.0, 1.0, 2.0, 3.0], 1.5).unwrap(), 0.75, epsilon = 1e-15);
    assert!(eval_univariate(&[1.0, 0.0, 2.0], 0.5).is_err());
    assert!(eval_univariate(&[0.0, 0.0, 0.0, 0.0], 0.0).is_err());
}

#[test]
fn overlap_examples() {
    let w = overlap(&[0.0, 1.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap().unwrap();
    assert_eq!(w.common, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    assert_eq!((w.offset_first, w.offset_second), (0, 1));
    assert!(overlap(&[0.0, 1.0, 2.0, 3.0], &[0.0, 1.0, 2.5, 3.0]).unwrap().is_none());
    assert!(overlap(&[0.0, 1.0, 2.0], &[0.0, 1.0]).is_err());
}

#[test]
fn star_fixture_has_one_vertex_function() {
    for k in [3, 5] {
        for p in [2, 3] {
            let s = space(star_atlas(k, p).unwrap(), p);
            let counts = s.class_counts();
            assert_eq!(counts.get(&FunctionClass::Vertex), Some(&1));
            assert_eq!(counts.get(&FunctionClass::Edge), None);
            assert_eq!(counts.values().sum::<usize>(), s.len());
        }
    }
}

#[test]
fn single_chart_functions_are_structured() {
    let s = space(square_atlas(2, 4).unwrap(), 2);
    assert_eq!(s.len(), 36);
    assert!(s.functions.iter().all(|f| f.class == FunctionClass::Structured && f.instances.len() == 1));
}

#[test]
fn extruded_star_has_edge_functions() {
    let s = space(cover_mesh(&extruded_star_raw(3, 2), 2).unwrap(), 2);
    assert!(s.class_counts().get(&FunctionClass::Edge).copied().unwrap_or(0) > 0);
}

#[test]
fn vertex_function_values() {
    let proto = star_atlas(3, 2).unwrap();
    let chart = proto.charts.iter().find(|c| c.kind.is_vertex_like()).unwrap();
    let basis = proto_basis(chart, 2, 2).unwrap();
    assert_eq!(basis.len(), 1);
    let f = &basis[0];
    assert!(matches!(f.repr, ProtoRepr::Vertex));
    let center = chart.center().unwrap();
    assert_abs_diff_eq!(eval_proto(f, chart, &center, 2), 1.0, epsilon = 1e-14);
    for e in 0..chart.element_count() {
        // segment centre, and the corner opposite the vertex
        let (v, _) = f.eval_element(chart, e, &[0.5, 0.5, 0.0], 2);
        assert_abs_diff_eq!(v, 0.0625, epsilon = 1e-14);
        let (v, _) = f.eval_element(chart, e, &[1.0, 1.0, 0.0], 2);
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-14);
        // brute-force composition with the bilinear segment map
        let cell = proto.cell(ElementRef { chart: chart.id, element: e });
        let zeta = cell.eval(&[0.3, 0.6, 0.0]);
        assert_abs_diff_eq!(eval_proto(f, chart, &zeta, 2), 0.7f64.powi(2) * 0.4f64.powi(2), epsilon = 1e-12);
    }
}

/// Values of every global function agree across all chart instances of
/// every element it lives on.
fn check_continuity(s: &SplineSpace) {
    let dim = s.dim();
    let refs = [[0.2, 0.7, 0.4], [0.0, 0.5, 1.0], [1.0, 1.0, 0.0], [0.55, 0.0, 0.3]];
    let m = &s.manifold;
    for (o, orbit) in m.orbits.iter().enumerate() {
        let metric = &s.metric[o];
        for &a in &s.alive[o] {
            for r in &refs {
                let mut r = *r;
                r[dim..].iter_mut().for_each(|v| *v = 0.0);
                let x = metric.frame.to_frame(&r);
                let (want, _) = s.eval(a, o, &x);
                for inst in &orbit.members {
                    let chart = m.proto.chart(inst.element.chart);
                    let Some(&(_, local)) = s.functions[a].instances.iter().find(|(c, _)| *c == chart.id) else {
                        continue;
                    };
                    let ri = m.relative_orientation(&metric.instance, inst).apply(&r);
                    let (got, _) = s.protos[chart.id.0][local].eval_element(chart, inst.element.element, &ri, dim);
                    assert!((got - want).abs() < 1e-12, "function {a} orbit {o}: {got} vs {want}");
                }
            }
        }
    }
}

#[test]
fn functions_agree_across_charts() {
    for p in [2, 3] {
        check_continuity(&space(star_atlas(3, p).unwrap(), p));
        check_continuity(&space(star_atlas(5, p).unwrap(), p));
    }
    check_continuity(&space(lshape_atlas(2).unwrap(), 2));
    check_continuity(&space(torus_atlas().unwrap(), 2));
    check_continuity(&space(cover_mesh(&extruded_star_raw(3, 1), 2).unwrap(), 2));
}

#[test]
fn interface_function_has_matching_instances() {
    let s = space(star_atlas(3, 2).unwrap(), 2);
    let a = s
        .functions
        .iter()
        .position(|f| f.class == FunctionClass::Structured && f.instances.len() == 2)
        .expect("some structured function spans two charts");
    let f = &s.functions[a];
    let mut compared = 0;
    for &o in &f.support {
        for inst in &s.manifold.orbits[o].members {
            let Some(&(_, local)) = f.instances.iter().find(|(c, _)| *c == inst.element.chart) else { continue };
            let ProtoRepr::Tensor { knots } = &s.protos[inst.element.chart.0][local].repr else { continue };
            // structured element frames are chart coordinates
            let got = s.restriction_on(a, inst.element).unwrap();
            for (k, g) in knots.iter().zip(&got) {
                assert!(k.knots().iter().zip(g).all(|(x, y)| (x - y).abs() < 1e-12), "{:?} vs {g:?}", k.knots());
            }
            compared += 1;
        }
    }
    assert!(compared > f.support.len(), "some element is seen from both charts");
}

#[test]
fn structured_restrictions_are_tensor_windows() {
    let s = space(star_atlas(3, 2).unwrap(), 2);
    for (c, chart) in s.manifold.proto.charts.iter().enumerate() {
        let Some(lines) = chart.knots() else { continue };
        for &a in &s.chart_sets[c] {
            if s.functions[a].class != FunctionClass::Structured {
                continue;
            }
            let (_, local) = *s.functions[a].instances.iter().find(|(ch, _)| ch.0 == c).unwrap();
            let ProtoRepr::Tensor { knots } = &s.protos[c][local].repr else { panic!("structured proto is a tensor") };
            for (axis, k) in knots.iter().enumerate() {
                let line = &lines[axis];
                let ok = line.windows(k.knots().len()).any(|w| w == k.knots());
                assert!(ok, "axis {axis} knots {:?} not a window of {:?}", k.knots(), line);
            }
        }
    }
}

#[test]
fn extraordinary_restrictions_have_clamped_shape() {
    let p = 2;
    let s = space(star_atlas(3, p).unwrap(), p);
    let v = s.functions.iter().position(|f| f.class == FunctionClass::Vertex).unwrap();
    let mut checked = 0;
    for chart in s.manifold.proto.charts.iter().filter(|c| c.kind.is_structured()) {
        for e in 0..chart.element_count() {
            let Ok(knots) = s.extraordinary_restriction_knots(v, chart.id, e) else { continue };
            let frame = ElementFrame::of(chart, e, 2);
            for (axis, k) in knots.iter().enumerate() {
                let (lo, hi) = (frame.lo[axis], frame.lo[axis] + frame.len[axis]);
                let near = vec![lo, lo, lo, hi];
                let far = vec![lo, hi, hi, hi];
                let close = |w: &[f64]| w.iter().zip(k.knots()).all(|(a, b)| (a - b).abs() < 1e-12);
                assert!(close(&near) || close(&far), "{:?}", k.knots());
            }
            // tensor reproduction on a 3x3 grid
            let ring = s.manifold.proto.charts.iter().find(|c| c.kind.is_vertex_like()).unwrap();
            let vf = &s.protos[ring.id.0][0];
            let er = ElementRef { chart: chart.id, element: e };
            let inst = s.manifold.instance(er);
            let orbit = &s.manifold.orbits[s.manifold.orbit_of(er)];
            let ring_inst = orbit.instance_on(ring.id).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let r = [0.1 + 0.4 * i as f64, 0.1 + 0.4 * j as f64, 0.0];
                    let u = frame.to_frame(&r);
                    let tensor: f64 = (0..2).map(|ax| eval_piece_at(k_of(&knots, ax), u[ax], frame.midpoint()[ax])).product();
                    let rr = s.manifold.relative_orientation(inst, ring_inst).apply(&r);
                    let (direct, _) = vf.eval_element(ring, ring_inst.element.element, &rr, 2);
                    assert!((tensor - direct).abs() < 1e-12, "{tensor} vs {direct}");
                }
            }
            checked += 1;
        }
    }
    assert_eq!(checked, 3 * 2, "two structured instances per ring segment");
    let far = s.manifold.proto.charts.iter().find(|c| c.kind.is_structured()).unwrap();
    assert!(s.extraordinary_restriction_knots(v, far.id, far.element_count() - 1).is_err());
}

fn k_of(knots: &[LocalKnotVector], axis: usize) -> &[f64] {
    knots[axis].knots()
}

fn eval_piece_at(knots: &[f64], x: f64, mid: f64) -> f64 {
    knots::eval_piece(knots, mid, x, 0)[0]
}

#[test]
fn partition_of_unity_on_structured_charts() {
    let s = space(square_atlas(3, 5).unwrap(), 3);
    let ones = vec![1.0; s.len()];
    for o in 0..s.manifold.orbits.len() {
        let x = s.metric[o].frame.to_frame(&[0.3, 0.8, 0.0]);
        let (v, g) = s.eval_combination(&ones, o, &x);
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-13);
        assert!(g.iter().all(|d| d.abs() < 1e-11));
    }
}

#[test]
fn classes_partition_the_index_set() {
    let s = space(cover_mesh(&extruded_star_raw(3, 2), 2).unwrap(), 2);
    let total: usize = s.class_counts().values().sum();
    assert_eq!(total, s.len());
    for (i, set) in s.chart_sets.iter().enumerate() {
        for a in set {
            assert!(s.extended_sets[i].contains(a), "A_i is contained in its extension");
        }
    }
}

fn knot_vector() -> impl Strategy<Value = Vec<f64>> {
    (1usize..=4).prop_flat_map(|p| {
        proptest::collection::vec(0u8..6, p + 2).prop_map(|mut v| {
            v.sort_unstable();
            if v[0] == v[v.len() - 1] {
                let n = v.len();
                v[n - 1] += 1;
            }
            v.into_iter().map(f64::from).collect::<Vec<f64>>()
        })
    })
}

proptest! {
    #[test]
    fn evaluation_matches_cox_de_boor(knots in knot_vector(), t in 0.0f64..1.0) {
        prop_assume!(LocalKnotVector::new(knots.clone()).is_ok());
        let x = knots[0] + t * (knots[knots.len() - 1] - knots[0]);
        let got = eval_univariate(&knots, x).unwrap();
        prop_assert!((got - cox_de_boor(&knots, x)).abs() < 1e-13);
        prop_assert!(got >= 0.0);
    }

    #[test]
    fn support_is_contained_in_knot_span(knots in knot_vector(), x in -2.0f64..8.0) {
        prop_assume!(LocalKnotVector::new(knots.clone()).is_ok());
        if x < knots[0] || x >= knots[knots.len() - 1] {
            prop_assert_eq!(eval_univariate(&knots, x).unwrap(), 0.0);
        }
    }

    #[test]
    fn windows_of_one_line_sum_to_one(p in 1usize..=4, n in 2usize..8, t in 0.0f64..1.0) {
        let line = uniform_knots(p, 1.0, 1.0 / n as f64);
        let sum: f64 = line.windows(p + 2).map(|w| eval_univariate(w, t).unwrap()).sum();
        prop_assert!((sum - 1.0).abs() < 1e-13);
    }

    #[test]
    fn overlap_witness_is_a_common_line(a in knot_vector(), shift in 0usize..4) {
        prop_assume!(LocalKnotVector::new(a.clone()).is_ok());
        // a window of a strictly increasing extension of `a`
        let mut line = a.clone();
        for j in 1..=shift {
            line.push(a[a.len() - 1] + j as f64);
        }
        let b = line[shift..shift + a.len()].to_vec();
        let w = overlap(&a, &b).unwrap().expect("windows of one line overlap");
        let n = a.len();
        prop_assert_eq!(&w.common[w.offset_first..w.offset_first + n], &a[..]);
        prop_assert_eq!(&w.common[w.offset_second..w.offset_second + n], &b[..]);
        prop_assert!(w.common.windows(2).all(|p| p[0] <= p[1]));
        let sym = overlap(&b, &a).unwrap().unwrap();
        prop_assert_eq!(sym.common.len(), w.common.len());
    }
}
