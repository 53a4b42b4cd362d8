//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs as part of `cargo test`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use spline_manifold::analysis::*;
use spline_manifold::atlas::ProtoManifold;
use spline_manifold::duality::*;
use spline_manifold::fixtures::*;
use spline_manifold::refine::refine_levels;
use spline_manifold::*;

const DUAL_TOL: f64 = 1e-10;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

fn space(proto: ProtoManifold, p: usize) -> SplineSpace {
    SplineSpace::assemble(ParameterManifold::build(proto).expect("manifold"), p).expect("space")
}

fn validate(proto: &ProtoManifold) -> ValidationReport {
    validate_proto_manifold(proto, &ValidationOptions::default()).expect("structurally sound")
}

fn atlas_validity() -> Outcome {
    let limit = Duration::from_secs(1);
    let mut notes = Vec::new();
    let mut pass = true;
    let positive: [(&str, fn() -> Result<ProtoManifold, AtlasError>); 4] = [
        ("valence-3", || star_atlas(3, 2)),
        ("valence-5", || star_atlas(5, 2)),
        ("torus", torus_atlas),
        ("boundary", || lshape_atlas(2)),
    ];
    for (name, make) in positive {
        let t = Instant::now();
        let r = validate(&make().expect("fixture"));
        let dt = t.elapsed();
        let ok = r.passed() && dt < limit;
        pass &= ok;
        if !ok {
            notes.push(format!("{name} failed ({dt:?})"));
        }
    }
    let negative: [(&str, fn() -> Result<ProtoManifold, AtlasError>, CheckKind); 5] = [
        ("broken cocycle", || broken_cocycle_atlas(2), CheckKind::Cocycle),
        ("broken inverse", || broken_inverse_atlas(2), CheckKind::Inverse),
        ("element mismatch", || element_mismatch_atlas(2), CheckKind::ElementCompatibility),
        ("overlapping vertex charts", || overlapping_vertex_charts_atlas(2), CheckKind::ChartKind),
        ("two EVs in one element", || two_extraordinary_atlas(2), CheckKind::ChartKind),
    ];
    for (name, make, kind) in negative {
        let t = Instant::now();
        let r = validate(&make().expect("fixture"));
        let dt = t.elapsed();
        let ok = r.failed(kind) && dt < limit;
        pass &= ok;
        notes.push(format!("{name} -> {}{}", kind.name(), if ok { "" } else { " MISSING" }));
    }
    Outcome::new(pass, format!("4 positive ok; {}", notes.join(", ")))
}

fn duality() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let mut worst_rows: f64 = 0.0;
    for k in [3, 5] {
        for p in [2, 3] {
            let s = space(star_atlas(k, p).unwrap(), p);
            let ge = build_explicit_dual(&s).unwrap().gram(&s);
            let gc = build_corrected_dual(&s, &build_proto_duals(&s).unwrap()).unwrap().gram(&s);
            worst = worst.max(gram_residual(&ge)).max(gram_residual(&gc));
            worst_rows = worst_rows.max(gram_distance(&ge, &gc));
        }
    }
    let dt = t.elapsed();
    Outcome::new(
        worst <= DUAL_TOL && worst_rows <= DUAL_TOL && dt < Duration::from_secs(30),
        format!("max |G-I| {worst:.2e}, row distance {worst_rows:.2e}, {:.2}s", dt.as_secs_f64()),
    )
}

fn independence() -> Outcome {
    let fixtures = [
        ("valence-3", star_atlas(3, 2).unwrap()),
        ("valence-5", star_atlas(5, 2).unwrap()),
        ("torus", torus_atlas().unwrap()),
        ("boundary", lshape_atlas(2).unwrap()),
    ];
    let mut worst: f64 = 0.0;
    let mut all = true;
    for (_, proto) in fixtures {
        let s = space(proto, 2);
        let c = certify_linear_independence(&s, &default_duals(&s).unwrap(), DUAL_TOL);
        all &= c.certified;
        worst = worst.max(c.residual);
    }
    let s = space(star_atlas(3, 2).unwrap(), 2).with_duplicate(7);
    let withheld = match default_duals(&s) {
        Ok(d) => !certify_linear_independence(&s, &d, DUAL_TOL).certified,
        Err(_) => true,
    };
    Outcome::new(all && withheld, format!("certified 4/4 (max residual {worst:.2e}); duplicate withheld: {withheld}"))
}

/// Monomials `x^a y^b` whose pullback to every patch has per-axis degree at
/// most `p`; requires parallelogram patches.
fn reproducible_monomials(proto: &ProtoManifold, p: u32) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for a in 0..=2 * p {
        for b in 0..=2 * p {
            let ok = proto.frames.iter().all(|f| {
                let c = &f.corners;
                let parallelogram = (0..2).all(|i| (c[3][i] - c[1][i] - c[2][i] + c[0][i]).abs() < 1e-12);
                parallelogram
                    && (1..=2).all(|j| {
                        let col = [c[j][0] - c[0][0], c[j][1] - c[0][1]];
                        let deg = a * u32::from(col[0].abs() > 1e-12) + b * u32::from(col[1].abs() > 1e-12);
                        deg <= p
                    })
            });
            if ok {
                out.push((a, b));
            }
        }
    }
    out
}

fn projector() -> Outcome {
    let field = Field::SinSin { dims: 2 };
    let mut idem: f64 = 0.0;
    let mut repro: f64 = 0.0;
    let mut tested = 0;
    let fixtures = [
        (star_atlas(3, 2).unwrap(), 2),
        (star_atlas(3, 3).unwrap(), 3),
        (star_atlas(5, 2).unwrap(), 2),
        (star_atlas(5, 3).unwrap(), 3),
        (lshape_atlas(2).unwrap(), 2),
        (lshape_atlas(3).unwrap(), 3),
    ];
    for (proto, p) in &fixtures {
        let s = space(proto.clone(), *p);
        let d = default_duals(&s).unwrap();
        let loc = PatchLocator::new(&s).unwrap();
        let phi = Pullback { locator: &loc, field: &field };
        let c = project(&d, &phi);
        let pi = SplineField { space: &s, coeffs: &c };
        let c2 = project(&d, &pi);
        let diff: Vec<f64> = c2.iter().zip(&c).map(|(x, y)| x - y).collect();
        idem = idem.max(l2_norm(&s, &SplineField { space: &s, coeffs: &diff }) / l2_norm(&s, &pi));
        for (a, b) in reproducible_monomials(proto, *p as u32) {
            let m = Field::Monomial { exponents: [a, b, 0] };
            let exact = Pullback { locator: &loc, field: &m };
            let c = project(&d, &exact);
            let (e, _) = error_norms(&s, &exact, &SplineField { space: &s, coeffs: &c });
            repro = repro.max(e / l2_norm(&s, &exact));
            tested += 1;
        }
    }
    let mut spread: f64 = 0.0;
    for (proto, p) in [(star_atlas(3, 2).unwrap(), 2), (star_atlas(5, 2).unwrap(), 2), (star_atlas(3, 3).unwrap(), 3)] {
        let ratios: Vec<f64> = (1..=4)
            .map(|level| {
                let s = space(refine_levels(&proto, level).unwrap(), p);
                let d = default_duals(&s).unwrap();
                let loc = PatchLocator::new(&s).unwrap();
                let phi = Pullback { locator: &loc, field: &field };
                let c = project(&d, &phi);
                l2_norm(&s, &SplineField { space: &s, coeffs: &c }) / l2_norm(&s, &phi)
            })
            .collect();
        let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &r| (l.min(r), h.max(r)));
        spread = spread.max((hi - lo) / lo);
    }
    Outcome::new(
        idem <= 1e-10 && repro <= 1e-9 && spread < 0.05,
        format!("idempotence {idem:.2e}; {tested} monomials, max rel error {repro:.2e}; stability spread {:.3}%", 100.0 * spread),
    )
}

fn convergence() -> Outcome {
    let t = Instant::now();
    let mut pass = true;
    let mut notes = Vec::new();
    for p in [2usize, 3] {
        let proto = star_atlas(3, p).unwrap();
        let table = convergence_study(&proto, p, 5, &Field::SinSin { dims: 2 }).unwrap();
        let (l2, h1) = table.ls_rates(3);
        let pf = p as f64;
        let ok = (pf + 0.8..=pf + 1.2).contains(&l2) && (pf - 0.2..=pf + 0.2).contains(&h1);
        pass &= ok;
        notes.push(format!("p={p} L2 {l2:.3} H1 {h1:.3}"));
        let table = surface_convergence_study(&proto, p, 5, &Field::Wave, |s, d, l| saddle_geometry(s, d, l, 0.25)).unwrap();
        let (l2, _) = table.ls_rates(3);
        let ok = (pf + 0.8..=pf + 1.2).contains(&l2);
        pass &= ok;
        notes.push(format!("surface p={p} L2 {l2:.3}"));
    }
    let dt = t.elapsed();
    pass &= dt < Duration::from_secs(300);
    Outcome::new(pass, format!("{}; {:.1}s", notes.join(", "), dt.as_secs_f64()))
}

fn incompatibility() -> Outcome {
    let (proto, overrides) = incompatible_square().unwrap();
    let s = SplineSpace::assemble_with(ParameterManifold::build(proto).unwrap(), 2, &overrides).unwrap();
    let dc = check_dual_compatibility(&s);
    let deviation = gram_residual(&build_explicit_dual(&s).unwrap().gram(&s));
    Outcome::new(
        !dc.verdict && deviation > 1e-3,
        format!("DC verdict {} ({} failing pairs); naive |G-I| {deviation:.3}", dc.verdict, dc.failures.len()),
    )
}

fn cover() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for (name, raw, valence) in [("3-quad", star_raw(3), Some(3)), ("5-quad", star_raw(5), Some(5)), ("regular 2x2", grid_raw(2), None)] {
        let proto = cover_mesh(&raw, 2).unwrap();
        // through the file format, as the command line does
        let proto = ManifoldFile::parse(&ManifoldFile::from_proto(&proto).to_json()).unwrap().to_proto().unwrap();
        let valid = validate(&proto).passed();
        let rings: Vec<_> = proto.charts.iter().filter(|c| !c.kind.is_structured()).collect();
        let structured = proto.charts.len() - rings.len();
        let ok = valid
            && match valence {
                Some(k) => rings.len() == 1 && rings[0].kind.valence() == Some(k) && structured == k,
                None => rings.is_empty(),
            };
        pass &= ok;
        notes.push(format!("{name}: {} vertex + {structured} structured", rings.len()));
    }
    Outcome::new(pass, notes.join(", "))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("atlas validity", atlas_validity),
        ("duality", duality),
        ("linear independence", independence),
        ("projector properties", projector),
        ("convergence", convergence),
        ("dual compatibility necessary", incompatibility),
        ("cover_mesh", cover),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        println!("criterion {} {:<30} {}  {}", i + 1, name, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
