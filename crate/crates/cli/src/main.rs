use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use spline_manifold::analysis::{l2_norm, Pullback, SplineField};
use spline_manifold::duality::gram_residual;
use spline_manifold::io::{read_raw_mesh, write_raw_mesh};
use spline_manifold::mesh::{classify, GlobalMesh};
use spline_manifold::{fixtures, AnalysisError, *};

#[derive(Parser)]
#[command(name = "splman", version, about = "Spline spaces on unstructured manifold atlases")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Tolerance for geometric checks or Gram residuals.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Seed for randomly placed validation samples.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file for commands that produce one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Check transition maps and chart constraints of a manifold file.
    Validate { input: PathBuf },
    /// Classify vertices (and edges in 3D) of the global mesh.
    Classify { input: PathBuf },
    /// Build an atlas from a raw quad/hex mesh.
    Cover {
        input: PathBuf,
        #[arg(long, default_value_t = 2)]
        degree: usize,
    },
    /// Assemble the spline space and count basis functions by class.
    Space {
        input: PathBuf,
        #[arg(long)]
        degree: Option<usize>,
    },
    /// Check dual compatibility and biorthogonality of the dual basis.
    Dualcheck {
        input: PathBuf,
        #[arg(long)]
        degree: Option<usize>,
    },
    /// Quasi-interpolate a manufactured field.
    Project {
        input: PathBuf,
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long, default_value = "sinsin")]
        field: String,
    },
    /// Projection errors under uniform refinement, as CSV.
    Converge {
        /// Manifold file; defaults to the built-in valence-3 atlas.
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        p: usize,
        #[arg(long, default_value_t = 5)]
        levels: usize,
        #[arg(long, default_value = "sinsin")]
        field: String,
        /// Measure on the saddle surface of this amplitude instead of the
        /// file's control points.
        #[arg(long)]
        saddle: Option<f64>,
    },
    /// Write a built-in fixture.
    Fixture {
        #[arg(value_enum)]
        name: FixtureName,
        #[arg(long, default_value_t = 2)]
        degree: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureName {
    Valence3,
    Valence5,
    Torus,
    Lshape,
    Square,
    Incompatible,
    BrokenCocycle,
    BrokenInverse,
    ElementMismatch,
    OverlappingVertexCharts,
    TwoExtraordinary,
    Star3Mesh,
    Star5Mesh,
    GridMesh,
    LshapeMesh,
}

enum Failure {
    Check(String),
    Input(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Input(e.to_string())
    }
}

struct Report {
    text: String,
    json: Value,
    ok: bool,
}

impl Report {
    fn ok(text: String, json: Value) -> Self {
        Self { text, json, ok: true }
    }
}

fn load(path: &Path) -> Result<(ManifoldFile, ProtoManifold), Failure> {
    let file = ManifoldFile::read(path)?;
    let proto = file.to_proto()?;
    Ok((file, proto))
}

fn assemble(file: &ManifoldFile, proto: ProtoManifold, degree: Option<usize>) -> Result<SplineSpace, Failure> {
    let degree = degree.or(file.degree).unwrap_or(2);
    let manifold = ParameterManifold::build(proto)?;
    Ok(SplineSpace::assemble_with(manifold, degree, &file.overrides())?)
}

fn write_out(out: Option<&Path>, contents: &str) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, contents).map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn validate(cli: &Cli, input: &Path) -> Result<Report, Failure> {
    let (_, proto) = load(input)?;
    let mut opts = ValidationOptions { random_samples: 2, seed: cli.seed, ..Default::default() };
    if let Some(tol) = cli.tol {
        opts.tol = tol;
    }
    let report = validate_proto_manifold(&proto, &opts)?;
    let mut text = String::new();
    for c in &report.checks {
        let _ = writeln!(text, "{:<22} {} ({} samples)", c.kind.name(), if c.passed { "ok" } else { "FAILED" }, c.samples);
        for f in c.failures.iter().take(10) {
            let ids: Vec<String> = f.charts.iter().map(usize::to_string).collect();
            let _ = writeln!(text, "  charts ({}): {}", ids.join(","), f.message);
        }
        if c.failures.len() > 10 {
            let _ = writeln!(text, "  ... {} more", c.failures.len() - 10);
        }
    }
    let _ = writeln!(text, "{}", if report.passed() { "valid" } else { "invalid" });
    Ok(Report { text, ok: report.passed(), json: json!({ "valid": report.passed(), "checks": report.checks }) })
}

fn classify_cmd(input: &Path) -> Result<Report, Failure> {
    let (_, proto) = load(input)?;
    let manifold = ParameterManifold::build(proto)?;
    let c = classify(&GlobalMesh::build(&manifold, 0)?);
    let mut text = String::new();
    for (name, n) in c.counts() {
        let _ = writeln!(text, "{name:<32} {n}");
    }
    for (v, k) in c.extraordinary_2d() {
        let _ = writeln!(text, "extraordinary vertex {v} valence {k}");
    }
    if !c.violations.is_empty() {
        let _ = writeln!(text, "elements with two extraordinary vertices: {:?}", c.violations);
    }
    let json = json!({ "counts": c.counts(), "classification": c });
    Ok(Report { text, json, ok: c.violations.is_empty() })
}

fn cover_cmd(cli: &Cli, input: &Path, degree: usize) -> Result<Report, Failure> {
    let raw = read_raw_mesh(input)?;
    let proto = cover_mesh(&raw, degree).map_err(|e| Failure::Check(e.to_string()))?;
    let structured = proto.charts.iter().filter(|c| c.kind.is_structured()).count();
    let file = ManifoldFile::from_proto(&proto).with_degree(degree).to_json();
    let summary = format!(
        "{} charts: {} structured, {} unstructured; {} transitions\n",
        proto.charts.len(),
        structured,
        proto.charts.len() - structured,
        proto.transitions.len()
    );
    let text = match &cli.out {
        Some(path) => {
            write_out(Some(path), &file)?;
            summary
        }
        None => file + "\n",
    };
    let charts: Vec<&str> = proto.charts.iter().map(|c| c.kind.name()).collect();
    Ok(Report::ok(text, json!({ "charts": charts, "transitions": proto.transitions.len() })))
}

fn space_cmd(input: &Path, degree: Option<usize>) -> Result<Report, Failure> {
    let (file, proto) = load(input)?;
    let s = assemble(&file, proto, degree)?;
    let counts: Vec<(String, usize)> = s.class_counts().into_iter().map(|(c, n)| (c.name().to_string(), n)).collect();
    let mut text = format!("dimension {}, degree {}, {} functions\n", s.dim(), s.degree, s.len());
    for (c, n) in &counts {
        let _ = writeln!(text, "  {c:<24} {n}");
    }
    let json = json!({ "dimension": s.dim(), "degree": s.degree, "functions": s.len(), "classes": counts });
    Ok(Report::ok(text, json))
}

fn dualcheck(cli: &Cli, input: &Path, degree: Option<usize>) -> Result<Report, Failure> {
    let (file, proto) = load(input)?;
    let s = assemble(&file, proto, degree)?;
    let tol = cli.tol.unwrap_or(1e-10);
    let dc = check_dual_compatibility(&s);
    let mut text = format!(
        "dual compatibility: {} ({} pairs checked, {} failing)\n",
        if dc.verdict { "yes" } else { "no" },
        dc.pairs_checked,
        dc.failures.len()
    );
    for f in dc.failures.iter().take(10) {
        let _ = writeln!(text, "  chart {}: functions {} and {} ({:?})", f.chart, f.first, f.second, f.condition);
    }
    let explicit = build_explicit_dual(&s)?;
    let naive = gram_residual(&explicit.gram(&s));
    let (residual, certified) = if dc.verdict {
        let c = certify_linear_independence(&s, &default_duals(&s)?, tol);
        (c.residual, c.certified)
    } else {
        (naive, false)
    };
    let _ = writeln!(text, "max |G - I| = {residual:.3e} (tol {tol:e})");
    let _ = writeln!(text, "linear independence {}", if certified { "certified" } else { "not certified" });
    let ok = dc.verdict && certified;
    let json = json!({ "compatible": dc.verdict, "dc": dc, "residual": residual, "tol": tol, "certified": certified });
    Ok(Report { text, json, ok })
}

fn project_cmd(cli: &Cli, input: &Path, degree: Option<usize>, field: &str) -> Result<Report, Failure> {
    let (file, proto) = load(input)?;
    let s = assemble(&file, proto, degree)?;
    let field = Field::parse(field)?;
    let duals = default_duals(&s)?;
    let locator = PatchLocator::new(&s)?;
    let exact = Pullback { locator: &locator, field: &field };
    let coeffs = project(&duals, &exact);
    let approx = SplineField { space: &s, coeffs: &coeffs };
    let (l2, h1) = error_norms(&s, &exact, &approx);
    let again = project(&duals, &approx);
    let diff: Vec<f64> = again.iter().zip(&coeffs).map(|(a, b)| a - b).collect();
    let idem = l2_norm(&s, &SplineField { space: &s, coeffs: &diff }) / l2_norm(&s, &approx).max(f64::MIN_POSITIVE);
    if let Some(path) = &cli.out {
        write_out(Some(path), &serde_json::to_string_pretty(&coeffs)?)?;
    }
    let text = format!(
        "{} coefficients\nL2 error {l2:.6e}\nH1 error {h1:.6e}\nidempotence {idem:.3e}\n",
        coeffs.len()
    );
    let json = json!({ "functions": coeffs.len(), "err_l2": l2, "err_h1": h1, "idempotence": idem });
    Ok(Report::ok(text, json))
}

fn converge(cli: &Cli, input: Option<&Path>, p: usize, levels: usize, field: &str, saddle: Option<f64>) -> Result<Report, Failure> {
    let field = Field::parse(field)?;
    let (file, proto) = match input {
        Some(path) => load(path)?,
        None => {
            let proto = fixtures::star_atlas(3, p)?;
            (ManifoldFile::from_proto(&proto), proto)
        }
    };
    if levels < 2 {
        return Err(Failure::Input("at least two levels are needed for a rate".into()));
    }
    let analysis = |e: AnalysisError| match e {
        AnalysisError::NonRegularGeometry { .. } => Failure::Check(e.to_string()),
        e => Failure::Input(e.to_string()),
    };
    let table = if let Some(amplitude) = saddle {
        surface_convergence_study(&proto, p, levels, &field, |s, d, l| {
            spline_manifold::analysis::saddle_geometry(s, d, l, amplitude)
        })
    } else if !file.control_points.is_empty() {
        let coarse = SplineSpace::assemble_with(ParameterManifold::build(proto.clone())?, p, &file.overrides())?;
        if coarse.len() != file.control_points.len() {
            return Err(Failure::Input(format!(
                "{} control points for {} basis functions of degree {p}",
                file.control_points.len(),
                coarse.len()
            )));
        }
        let control = file.control_points.clone();
        surface_convergence_study(&proto, p, levels, &field, |s, _, _| GeometryMap::new(s, control))
    } else {
        convergence_study(&proto, p, levels, &field)
    }
    .map_err(analysis)?;
    let csv = table.to_csv();
    if let Some(path) = &cli.out {
        write_out(Some(path), &csv)?;
    }
    let (l2, h1) = table.ls_rates(3);
    let mut text = if cli.out.is_none() { csv } else { String::new() };
    let _ = writeln!(text, "least-squares rates over the last {} levels: L2 {l2:.3}, H1 {h1:.3}", levels.min(3));
    let json = json!({ "rows": table.rows, "rate_l2": l2, "rate_h1": h1 });
    Ok(Report::ok(text, json))
}

fn fixture(cli: &Cli, name: FixtureName, degree: usize) -> Result<Report, Failure> {
    use FixtureName::*;
    let manifold = |proto: ProtoManifold| ManifoldFile::from_proto(&proto).with_degree(degree).to_json();
    let contents = match name {
        Valence3 => manifold(fixtures::star_atlas(3, degree)?),
        Valence5 => manifold(fixtures::star_atlas(5, degree)?),
        Torus => manifold(fixtures::torus_atlas()?),
        Lshape => manifold(fixtures::lshape_atlas(degree)?),
        Square => manifold(fixtures::square_atlas(degree, 4)?),
        Incompatible => {
            let (proto, overrides) = fixtures::incompatible_square()?;
            ManifoldFile::from_proto(&proto).with_degree(2).with_overrides(&overrides).to_json()
        }
        BrokenCocycle => manifold(fixtures::broken_cocycle_atlas(degree)?),
        BrokenInverse => manifold(fixtures::broken_inverse_atlas(degree)?),
        ElementMismatch => manifold(fixtures::element_mismatch_atlas(degree)?),
        OverlappingVertexCharts => manifold(fixtures::overlapping_vertex_charts_atlas(degree)?),
        TwoExtraordinary => manifold(fixtures::two_extraordinary_atlas(degree)?),
        Star3Mesh => write_raw_mesh(&fixtures::star_raw(3)),
        Star5Mesh => write_raw_mesh(&fixtures::star_raw(5)),
        GridMesh => write_raw_mesh(&fixtures::grid_raw(2)),
        LshapeMesh => write_raw_mesh(&fixtures::lshape_raw()),
    };
    write_out(cli.out.as_deref(), &contents)?;
    Ok(Report { text: String::new(), json: Value::Null, ok: true })
}

fn run(cli: &Cli) -> Result<Report, Failure> {
    match &cli.command {
        Command::Validate { input } => validate(cli, input),
        Command::Classify { input } => classify_cmd(input),
        Command::Cover { input, degree } => cover_cmd(cli, input, *degree),
        Command::Space { input, degree } => space_cmd(input, *degree),
        Command::Dualcheck { input, degree } => dualcheck(cli, input, *degree),
        Command::Project { input, degree, field } => project_cmd(cli, input, *degree, field),
        Command::Converge { input, p, levels, field, saddle } => converge(cli, input.as_deref(), *p, *levels, field, *saddle),
        Command::Fixture { name, degree } => fixture(cli, *name, *degree),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(report) => {
            match cli.format {
                Format::Text => print!("{}", report.text),
                Format::Json if !report.json.is_null() => {
                    println!("{}", serde_json::to_string_pretty(&report.json).expect("reports serialize"))
                }
                Format::Json => {}
            }
            ExitCode::from(if report.ok { 0 } else { 1 })
        }
        Err(Failure::Check(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
