use proptest::prelude::*;

use spline_manifold::atlas::ProtoManifold;
use spline_manifold::fixtures::*;
use spline_manifold::mesh::{classify, GlobalMesh, VertexClass2D};
use spline_manifold::refine::{bisect_knots, refine, refine_levels};
use spline_manifold::*;

fn report(proto: &ProtoManifold) -> ValidationReport {
    validate_proto_manifold(proto, &ValidationOptions::default()).expect("structurally sound")
}

fn mesh_of(proto: &ProtoManifold) -> GlobalMesh {
    GlobalMesh::build(&ParameterManifold::build(proto.clone()).unwrap(), 0).unwrap()
}

/// The same atlas with chart `i` renamed `perm[i]`.
fn relabel(proto: &ProtoManifold, perm: &[usize]) -> ProtoManifold {
    let mut charts = vec![None; perm.len()];
    for (i, c) in proto.charts.iter().enumerate() {
        let mut c = c.clone();
        c.id = ChartId(perm[i]);
        charts[perm[i]] = Some(c);
    }
    let mut out = proto.clone();
    out.charts = charts.into_iter().map(Option::unwrap).collect();
    for t in &mut out.transitions {
        t.source = ChartId(perm[t.source.0]);
        t.target = ChartId(perm[t.target.0]);
    }
    for f in &mut out.frames {
        f.chart = ChartId(perm[f.chart.0]);
    }
    out
}

#[test]
fn positive_fixtures_validate() {
    for p in [2, 3] {
        for proto in [star_atlas(3, p), star_atlas(5, p), lshape_atlas(p), torus_atlas()] {
            let r = report(&proto.unwrap());
            assert!(r.passed(), "{r:?}");
        }
    }
}

#[test]
fn negative_fixtures_report_their_defect() {
    let cases = [
        (broken_cocycle_atlas(2), CheckKind::Cocycle),
        (broken_inverse_atlas(2), CheckKind::Inverse),
        (element_mismatch_atlas(2), CheckKind::ElementCompatibility),
        (overlapping_vertex_charts_atlas(2), CheckKind::ChartKind),
        (two_extraordinary_atlas(2), CheckKind::ChartKind),
    ];
    for (proto, kind) in cases {
        let r = report(&proto.unwrap());
        assert!(r.failed(kind), "{} not flagged", kind.name());
        assert!(!r.check(kind).failures[0].message.is_empty());
    }
}

#[test]
fn uniform_grid_has_only_regular_interior_vertices() {
    let c = classify(&mesh_of(&square_atlas(2, 4).unwrap()));
    assert!(c.extraordinary_2d().is_empty());
    // boundary vertices with fewer than three elements count as regular too
    assert_eq!(c.counts().into_iter().collect::<Vec<_>>(), vec![("regular".to_string(), 25)]);
}

#[test]
fn star_fixtures_have_one_extraordinary_vertex() {
    for k in [3, 5] {
        let c = classify(&mesh_of(&star_atlas(k, 2).unwrap()));
        let ev = c.extraordinary_2d();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].1, k);
        assert!(c.violations.is_empty());
    }
}

#[test]
fn cube_without_subdivision_violates_chart_constraints() {
    let proto = cover::atlas_from_patches(&cube_raw(), 2, 1).unwrap();
    let c = classify(&mesh_of(&proto));
    assert_eq!(c.extraordinary_2d().len(), 8);
    assert!(!c.violations.is_empty());
}

#[test]
fn classification_ignores_chart_labels() {
    let proto = star_atlas(3, 2).unwrap();
    let base = classify(&mesh_of(&proto)).counts();
    let n = proto.charts.len();
    for shift in 1..n {
        let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let moved = relabel(&proto, &perm);
        assert!(report(&moved).passed());
        assert_eq!(classify(&mesh_of(&moved)).counts(), base);
    }
}

#[test]
fn refinement_doubles_structured_charts() {
    let proto = square_atlas(2, 3).unwrap();
    let fine = refine(&proto).unwrap();
    let knots = fine.charts[0].knots().unwrap();
    assert_eq!(atlas::breakpoints(&knots[0]).len() - 1, 6);
    assert_eq!(fine.charts[0].element_count(), 36);
}

#[test]
fn refinement_keeps_the_extraordinary_vertex() {
    let proto = star_atlas(3, 2).unwrap();
    let coarse = ParameterManifold::build(proto.clone()).unwrap();
    let fine_proto = refine(&proto).unwrap();
    assert!(report(&fine_proto).passed());
    let fine = ParameterManifold::build(fine_proto.clone()).unwrap();
    let structured = |p: &ProtoManifold| -> usize {
        p.charts
            .iter()
            .filter(|c| c.kind.is_structured())
            .map(|c| c.element_count())
            .sum()
    };
    assert_eq!(structured(&fine_proto), 4 * structured(&proto));
    // one element per ring segment at every level
    let ring = |p: &ProtoManifold| p.charts.iter().find(|c| !c.kind.is_structured()).unwrap().element_count();
    assert_eq!(ring(&fine_proto), 3);
    assert_eq!(fine.orbits.len(), 4 * coarse.orbits.len());
    let ev = classify(&GlobalMesh::build(&fine, 1).unwrap()).extraordinary_2d();
    assert_eq!(ev.len(), 1);
    assert_eq!(ev[0].1, 3);
}

#[test]
fn refinement_preserves_structured_orientations() {
    let proto = star_atlas(5, 2).unwrap();
    let fine = refine(&proto).unwrap();
    for (a, b) in proto.transitions.iter().zip(&fine.transitions) {
        assert_eq!((a.source, a.target), (b.source, b.target));
        let structured = proto.chart(a.source).kind.is_structured() && proto.chart(a.target).kind.is_structured();
        if structured {
            assert_eq!(b.pairs.len(), 4 * a.pairs.len());
            for p in &a.pairs {
                assert!(b.pairs.iter().any(|q| q.orient == p.orient));
            }
        }
    }
}

#[test]
fn two_refinements_match_four_fold_split() {
    let proto = star_atlas(3, 2).unwrap();
    let twice = refine_levels(&proto, 2).unwrap();
    for (c, t) in proto.charts.iter().zip(&twice.charts) {
        if let (Some(k0), Some(k2)) = (c.knots(), t.knots()) {
            for (a, b) in k0.iter().zip(k2) {
                let bp = atlas::breakpoints(a);
                let quartered: Vec<f64> = bp
                    .windows(2)
                    .flat_map(|w| (0..4).map(move |j| w[0] + (w[1] - w[0]) * j as f64 / 4.0))
                    .chain(std::iter::once(*bp.last().unwrap()))
                    .collect();
                assert_eq!(atlas::breakpoints(b), quartered);
            }
        }
    }
    let m = ParameterManifold::build(twice).unwrap();
    let m0 = ParameterManifold::build(proto).unwrap();
    assert_eq!(m.orbits.len(), 16 * m0.orbits.len());
}

#[test]
fn cover_mesh_chart_counts() {
    for (k, raw) in [(3, star_raw(3)), (5, star_raw(5))] {
        let proto = cover_mesh(&raw, 2).unwrap();
        assert!(report(&proto).passed());
        let rings: Vec<_> = proto.charts.iter().filter(|c| !c.kind.is_structured()).collect();
        assert_eq!(rings.len(), 1);
        assert_eq!(rings[0].kind.valence(), Some(k));
        assert_eq!(rings[0].element_count(), k);
        assert_eq!(proto.charts.len() - 1, k);
        for t in proto.transitions.iter().filter(|t| t.target == rings[0].id) {
            assert_eq!(t.pairs.len(), 2, "transition domains span two segments");
        }
    }
    let regular = cover_mesh(&grid_raw(2), 2).unwrap();
    assert!(report(&regular).passed());
    assert!(regular.charts.iter().all(|c| c.kind.is_structured()));
}

#[test]
fn cover_mesh_output_keeps_extraordinary_vertices_apart() {
    for raw in [star_raw(3), star_raw(5), lshape_raw()] {
        let c = classify(&mesh_of(&cover_mesh(&raw, 3).unwrap()));
        assert!(c.violations.is_empty());
    }
}

#[test]
fn cover_mesh_rejects_non_manifold_input() {
    // three quads sharing one edge
    let v = vec![
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [1.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [1.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [1.0, 0.0, 1.0],
    ];
    let cells = vec![vec![0, 1, 3, 2], vec![0, 4, 5, 1], vec![0, 1, 7, 6]];
    let raw = RawMesh::from_cyclic(2, v, cells).unwrap();
    assert!(cover_mesh(&raw, 2).is_err());
}

#[test]
fn extruded_star_has_an_extraordinary_edge() {
    let proto = cover_mesh(&extruded_star_raw(3, 2), 2).unwrap();
    assert!(report(&proto).passed());
    assert!(proto.charts.iter().any(|c| c.kind.name() == "edge3d"));
}

#[test]
fn manifold_files_reload_to_equal_atlases() {
    for proto in [star_atlas(5, 3).unwrap(), lshape_atlas(2).unwrap(), cover_mesh(&extruded_star_raw(3, 1), 2).unwrap()] {
        let text = ManifoldFile::from_proto(&proto).to_json();
        let back = ManifoldFile::parse(&text).unwrap().to_proto().unwrap();
        assert_eq!(back, proto);
    }
}

#[test]
fn shipped_data_files() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let Ok(entries) = std::fs::read_dir(&dir) else { return };
    let negative = ["broken-", "element-mismatch", "overlapping-", "two-extraordinary", "nonmanifold"];
    for e in entries {
        let path = e.unwrap().path();
        let stem = path.file_stem().unwrap().to_str().unwrap();
        let expect_ok = !negative.iter().any(|n| stem.starts_with(n));
        match path.extension().and_then(|s| s.to_str()) {
            Some("json") => {
                let proto = ManifoldFile::read(&path).unwrap().to_proto().unwrap();
                assert_eq!(report(&proto).passed(), expect_ok, "{}", path.display());
            }
            Some("mesh") => {
                let raw = io::read_raw_mesh(&path).unwrap();
                match cover_mesh(&raw, 2) {
                    Ok(proto) => assert!(expect_ok && report(&proto).passed(), "{}", path.display()),
                    Err(_) => assert!(!expect_ok, "{}", path.display()),
                }
            }
            _ => {}
        }
    }
}

#[test]
fn boundary_fixture_has_boundary_vertices() {
    let c = classify(&mesh_of(&lshape_atlas(2).unwrap()));
    assert!(c.vertices_2d.iter().any(|v| matches!(v, VertexClass2D::Boundary { .. })));
}

proptest! {
    #[test]
    fn orientation_codes_round_trip(dim in 2usize..=3, seed in 0u32..48) {
        let code = seed % (if dim == 2 { 8 } else { 48 });
        let o = Orientation::from_code(dim, code).unwrap();
        prop_assert_eq!(o.code(), code);
        prop_assert_eq!(o.inverse().after(&o), Orientation::identity(dim));
    }

    #[test]
    fn bisection_halves_every_interval(mut cuts in proptest::collection::vec(0.01f64..1.0, 1..6)) {
        cuts.sort_by(f64::total_cmp);
        let mut knots = vec![0.0, 0.0, 0.0];
        knots.extend(&cuts);
        knots.extend([1.0, 1.0, 1.0]);
        let fine = bisect_knots(&knots);
        let bp = atlas::breakpoints(&knots);
        let fbp = atlas::breakpoints(&fine);
        prop_assert_eq!(fbp.len(), 2 * bp.len() - 1);
        for (i, w) in bp.windows(2).enumerate() {
            prop_assert!((fbp[2 * i + 1] - 0.5 * (w[0] + w[1])).abs() < 1e-15);
        }
    }

    #[test]
    fn random_samples_never_break_valid_atlases(seed in any::<u64>()) {
        let opts = ValidationOptions { samples_per_axis: 2, random_samples: 3, seed, ..Default::default() };
        let r = validate_proto_manifold(&star_atlas(3, 2).unwrap(), &opts).unwrap();
        prop_assert!(r.passed());
    }
}
