//! Norms, the spline projector, support extensions, geometry maps and
//! convergence studies.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use serde::Serialize;

use crate::atlas::{breakpoints, ChartKind, ElementRef, PatchFrame, ProtoManifold};
use crate::basis::{transfer_point, ElementFrame, FunctionClass, SplineSpace};
use crate::duality::{build_corrected_dual, build_explicit_dual, build_proto_duals, DualSet};
use crate::error::{AnalysisError, DualityError};
use crate::geom::{Point, MAX_DIM};
use crate::manifold::{Instance, ParameterManifold};
use crate::quadrature::{norm_points, QuadratureRule};
use crate::refine::refine_levels;

/// Smallest admissible `det(DG^T DG)`.
pub const REGULARITY_TOL: f64 = 1e-10;

type Mat = [[f64; MAX_DIM]; MAX_DIM];

/// Affine map `y = a x + b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine {
    pub a: Mat,
    pub b: Point,
}

impl Affine {
    pub fn apply(&self, x: &Point) -> Point {
        let mut y = self.b;
        for i in 0..MAX_DIM {
            for j in 0..MAX_DIM {
                y[i] += self.a[i][j] * x[j];
            }
        }
        y
    }

    /// Fits the affine map through `f` at `x0` and `x0 + e_a`.
    fn fit(x0: &Point, dim: usize, f: impl Fn(&Point) -> Point) -> Self {
        let y0 = f(x0);
        let mut a = [[0.0; MAX_DIM]; MAX_DIM];
        for j in 0..dim {
            let mut x = *x0;
            x[j] += 1.0;
            let y = f(&x);
            for i in 0..MAX_DIM {
                a[i][j] = y[i] - y0[i];
            }
        }
        let mut b = y0;
        for i in 0..MAX_DIM {
            for j in 0..dim {
                b[i] -= a[i][j] * x0[j];
            }
        }
        Self { a, b }
    }
}

/// Metric coordinates of `to` as an affine function of those of `from`.
fn instance_affine(m: &ParameterManifold, from: (&Instance, &ElementFrame), to: (&Instance, &ElementFrame)) -> Affine {
    Affine::fit(&from.1.midpoint(), m.dim(), |x| transfer_point(x, from, to, m))
}

/// Where each element orbit sits in the patches of the atlas.
#[derive(Clone, Debug)]
pub struct PatchLocator {
    pub dim: usize,
    pub frames: Vec<PatchFrame>,
    /// Per orbit: patch index and the affine map from metric to patch
    /// coordinates. `None` when the atlas has no patches; metric
    /// coordinates are then used as physical coordinates.
    pub sites: Vec<Option<(usize, Affine)>>,
}

impl PatchLocator {
    pub fn new(space: &SplineSpace) -> Result<Self, AnalysisError> {
        let m = &space.manifold;
        let dim = m.dim();
        let frames = m.proto.frames.clone();
        let mut sites = Vec::with_capacity(m.orbits.len());
        for (o, orbit) in m.orbits.iter().enumerate() {
            if frames.is_empty() {
                sites.push(None);
                continue;
            }
            let metric = &space.metric[o];
            let found = orbit.members.iter().find_map(|inst| {
                let chart = m.proto.chart(inst.element.chart);
                if !chart.kind.is_structured() {
                    return None;
                }
                let frame = ElementFrame::of(chart, inst.element.element, dim);
                let centre = frame.midpoint();
                frames.iter().enumerate().find_map(|(f, pf)| {
                    let u = pf.to_patch(&centre, dim).filter(|_| pf.chart == inst.element.chart)?;
                    if !(0..dim).all(|a| (-1e-9..=1.0 + 1e-9).contains(&u[a])) {
                        return None;
                    }
                    let to_chart = instance_affine(m, (&metric.instance, &metric.frame), (inst, &frame));
                    let map = Affine::fit(&metric.frame.midpoint(), dim, |x| {
                        pf.to_patch(&to_chart.apply(x), dim).expect("invertible frame")
                    });
                    Some((f, map))
                })
            });
            sites.push(Some(found.ok_or(AnalysisError::Embedding(o))?));
        }
        Ok(Self { dim, frames, sites })
    }

    /// Physical point of metric coordinates `x` on orbit `orbit` and the
    /// Jacobian `dX/dx`.
    pub fn physical(&self, orbit: usize, x: &Point) -> (Point, Mat) {
        match &self.sites[orbit] {
            None => {
                let mut id = [[0.0; MAX_DIM]; MAX_DIM];
                for (a, row) in id.iter_mut().enumerate().take(self.dim) {
                    row[a] = 1.0;
                }
                let mut p = [0.0; MAX_DIM];
                p[..self.dim].copy_from_slice(&x[..self.dim]);
                (p, id)
            }
            Some((f, map)) => {
                let u = map.apply(x);
                let (p, ju) = self.frames[*f].embed(&u, self.dim);
                let mut jac = [[0.0; MAX_DIM]; MAX_DIM];
                for i in 0..MAX_DIM {
                    for j in 0..self.dim {
                        jac[i][j] = (0..self.dim).map(|k| ju[i][k] * map.a[k][j]).sum();
                    }
                }
                (p, jac)
            }
        }
    }

    pub fn patch_of(&self, orbit: usize) -> Option<usize> {
        self.sites[orbit].map(|(f, _)| f)
    }
}

/// Built-in manufactured fields of physical coordinates.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Field {
    Constant { value: f64 },
    /// `x^e0 y^e1 z^e2`.
    Monomial { exponents: [u32; 3] },
    /// `sin(pi x) sin(pi y)`, times `sin(pi z)` in three dimensions.
    SinSin { dims: usize },
    /// `sin(pi x) sin(pi y) cos(pi z)`.
    Wave,
}

impl Field {
    /// Parses `one`, `constant:<c>`, `monomial:<i>,<j>[,<k>]`, `sinsin`,
    /// `sinsinsin` or `wave`.
    pub fn parse(name: &str) -> Result<Self, AnalysisError> {
        let bad = || AnalysisError::UnknownField(name.to_string());
        let (head, arg) = name.split_once(':').unwrap_or((name, ""));
        match head {
            "one" if arg.is_empty() => Ok(Field::Constant { value: 1.0 }),
            "constant" => arg.parse().map(|value| Field::Constant { value }).map_err(|_| bad()),
            "monomial" => {
                let parts: Vec<u32> = arg
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad())?;
                if parts.is_empty() || parts.len() > 3 {
                    return Err(bad());
                }
                let mut exponents = [0; 3];
                exponents[..parts.len()].copy_from_slice(&parts);
                Ok(Field::Monomial { exponents })
            }
            "sinsin" if arg.is_empty() => Ok(Field::SinSin { dims: 2 }),
            "sinsinsin" if arg.is_empty() => Ok(Field::SinSin { dims: 3 }),
            "wave" if arg.is_empty() => Ok(Field::Wave),
            _ => Err(bad()),
        }
    }

    /// Value and gradient at a physical point.
    pub fn eval(&self, x: &Point) -> (f64, Point) {
        let mut g = [0.0; MAX_DIM];
        match self {
            Field::Constant { value } => (*value, g),
            Field::Monomial { exponents } => {
                let pow = |a: usize, e: u32| if e == 0 { 1.0 } else { x[a].powi(e as i32) };
                let v: f64 = (0..3).map(|a| pow(a, exponents[a])).product();
                for a in 0..3 {
                    let e = exponents[a];
                    if e == 0 {
                        continue;
                    }
                    let d = e as f64 * pow(a, e - 1);
                    g[a] = (0..3).filter(|&b| b != a).map(|b| pow(b, exponents[b])).product::<f64>() * d;
                }
                (v, g)
            }
            Field::SinSin { dims } => {
                let s: Vec<f64> = (0..*dims).map(|a| (PI * x[a]).sin()).collect();
                let c: Vec<f64> = (0..*dims).map(|a| PI * (PI * x[a]).cos()).collect();
                let v = s.iter().product();
                for a in 0..*dims {
                    g[a] = c[a] * (0..*dims).filter(|&b| b != a).map(|b| s[b]).product::<f64>();
                }
                (v, g)
            }
            Field::Wave => {
                let (sx, sy, cz) = ((PI * x[0]).sin(), (PI * x[1]).sin(), (PI * x[2]).cos());
                g[0] = PI * (PI * x[0]).cos() * sy * cz;
                g[1] = PI * sx * (PI * x[1]).cos() * cz;
                g[2] = -PI * sx * sy * (PI * x[2]).sin();
                (sx * sy * cz, g)
            }
        }
    }
}

/// A function on the parameter manifold: value and metric gradient at
/// metric coordinates of an element orbit.
pub trait ManifoldField {
    fn eval(&self, orbit: usize, x: &Point) -> (f64, Point);
}

impl<F: Fn(usize, &Point) -> (f64, Point)> ManifoldField for F {
    fn eval(&self, orbit: usize, x: &Point) -> (f64, Point) {
        self(orbit, x)
    }
}

fn pull_gradient(jac: &Mat, grad: &Point, dim: usize) -> Point {
    let mut out = [0.0; MAX_DIM];
    for (j, o) in out.iter_mut().enumerate().take(dim) {
        *o = (0..MAX_DIM).map(|i| jac[i][j] * grad[i]).sum();
    }
    out
}

/// A manufactured field composed with the patch embedding.
pub struct Pullback<'a> {
    pub locator: &'a PatchLocator,
    pub field: &'a Field,
}

impl ManifoldField for Pullback<'_> {
    fn eval(&self, orbit: usize, x: &Point) -> (f64, Point) {
        let (p, jac) = self.locator.physical(orbit, x);
        let (v, g) = self.field.eval(&p);
        (v, pull_gradient(&jac, &g, self.locator.dim))
    }
}

/// `Σ c_A B_A`.
pub struct SplineField<'a> {
    pub space: &'a SplineSpace,
    pub coeffs: &'a [f64],
}

impl ManifoldField for SplineField<'_> {
    fn eval(&self, orbit: usize, x: &Point) -> (f64, Point) {
        self.space.eval_combination(self.coeffs, orbit, x)
    }
}

/// `∫_Ω f` with `n` Gauss points per axis on each element.
pub fn integrate(space: &SplineSpace, n: usize, f: impl Fn(usize, &Point) -> f64) -> f64 {
    let dim = space.dim();
    let rule = QuadratureRule::tensor(dim, n);
    let mut total = 0.0;
    for (o, metric) in space.metric.iter().enumerate() {
        let vol: f64 = metric.frame.len[..dim].iter().product::<f64>().abs();
        for (r, w) in rule.iter() {
            total += w * vol * f(o, &metric.frame.to_frame(r));
        }
    }
    total
}

pub fn l2_norm(space: &SplineSpace, f: &dyn ManifoldField) -> f64 {
    integrate(space, norm_points(space.degree), |o, x| f.eval(o, x).0.powi(2)).sqrt()
}

/// Elementwise `|φ|_{H^k}`; `k = 0` is the L² norm. Fields carry first
/// derivatives only.
pub fn bent_seminorm(space: &SplineSpace, f: &dyn ManifoldField, k: usize) -> Result<f64, AnalysisError> {
    match k {
        0 => Ok(l2_norm(space, f)),
        1 => Ok(integrate(space, norm_points(space.degree), |o, x| {
            let g = f.eval(o, x).1;
            g.iter().map(|v| v * v).sum()
        })
        .sqrt()),
        _ => Err(AnalysisError::MissingDerivatives(k)),
    }
}

/// L² norm and H¹ seminorm of `f - g`.
pub fn error_norms(space: &SplineSpace, f: &dyn ManifoldField, g: &dyn ManifoldField) -> (f64, f64) {
    let n = norm_points(space.degree);
    let dim = space.dim();
    let rule = QuadratureRule::tensor(dim, n);
    let (mut l2, mut h1) = (0.0, 0.0);
    for (o, metric) in space.metric.iter().enumerate() {
        let vol: f64 = metric.frame.len[..dim].iter().product::<f64>().abs();
        for (r, w) in rule.iter() {
            let x = metric.frame.to_frame(r);
            let (fv, fg) = f.eval(o, &x);
            let (gv, gg) = g.eval(o, &x);
            l2 += w * vol * (fv - gv).powi(2);
            h1 += w * vol * (0..dim).map(|a| (fg[a] - gg[a]).powi(2)).sum::<f64>();
        }
    }
    (l2.sqrt(), h1.sqrt())
}

/// Coefficients `Λ_A(φ)` of `Π φ`.
pub fn project(duals: &DualSet, f: &dyn ManifoldField) -> Vec<f64> {
    duals.functionals.iter().map(|d| d.apply(|o, x| f.eval(o, x).0)).collect()
}

/// Explicit duals when available, corrected ones otherwise.
pub fn default_duals(space: &SplineSpace) -> Result<DualSet, DualityError> {
    match build_explicit_dual(space) {
        Ok(d) => Ok(d),
        Err(DualityError::Configuration(_)) => build_corrected_dual(space, &build_proto_duals(space)?),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum ExtensionCase {
    /// The extension reaches an extraordinary vertex; boxes are per patch.
    ExtraordinaryVertex,
    /// The extension lies in one structured chart; one box in its
    /// coordinates.
    Structured { chart: usize },
    /// Neither; boxes are per patch.
    Unresolved,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtensionBox {
    /// Patch index, or chart index in the structured case.
    pub region: usize,
    pub lo: Point,
    pub hi: Point,
    pub elements: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupportExtension {
    pub element: usize,
    pub case: ExtensionCase,
    pub orbits: Vec<usize>,
    pub boxes: Vec<ExtensionBox>,
}

fn grow(bx: &mut Option<(Point, Point)>, corners: &[Point], dim: usize) {
    let (lo, hi) = bx.get_or_insert(([f64::INFINITY; MAX_DIM], [f64::NEG_INFINITY; MAX_DIM]));
    for c in corners {
        for a in 0..dim {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
    }
    for a in dim..MAX_DIM {
        lo[a] = 0.0;
        hi[a] = 0.0;
    }
}

fn frame_corners(frame: &ElementFrame, dim: usize) -> Vec<Point> {
    (0..1usize << dim)
        .map(|c| {
            let mut r = [0.0; MAX_DIM];
            for (a, v) in r.iter_mut().enumerate().take(dim) {
                *v = ((c >> a) & 1) as f64;
            }
            frame.to_frame(&r)
        })
        .collect()
}

/// `Q̃`: union of the supports of all functions alive on element orbit `q`.
pub fn support_extension(space: &SplineSpace, locator: Option<&PatchLocator>, q: usize) -> SupportExtension {
    let dim = space.dim();
    let m = &space.manifold;
    let alive = &space.alive[q];
    let orbits: BTreeSet<usize> = alive.iter().flat_map(|&a| space.functions[a].support.iter().copied()).collect();
    let extraordinary = alive.iter().any(|&a| space.functions[a].class != FunctionClass::Structured);
    let single = (!extraordinary)
        .then(|| {
            m.proto.charts.iter().find(|c| {
                c.kind.is_structured() && orbits.iter().all(|&o| m.orbits[o].instance_on(c.id).is_some())
            })
        })
        .flatten();
    let (case, boxes) = match single {
        Some(chart) => {
            let mut bx = None;
            for &o in &orbits {
                let inst = m.orbits[o].instance_on(chart.id).unwrap();
                let frame = ElementFrame::of(chart, inst.element.element, dim);
                grow(&mut bx, &frame_corners(&frame, dim), dim);
            }
            let (lo, hi) = bx.unwrap();
            let case = ExtensionCase::Structured { chart: chart.id.0 };
            (case, vec![ExtensionBox { region: chart.id.0, lo, hi, elements: orbits.len() }])
        }
        None => {
            let mut per: BTreeMap<usize, (Option<(Point, Point)>, usize)> = BTreeMap::new();
            for &o in &orbits {
                let frame = space.metric[o].frame;
                let (region, corners) = match locator.and_then(|l| l.sites[o].map(|s| (l, s))) {
                    Some((_, (f, map))) => (f, frame_corners(&frame, dim).iter().map(|c| map.apply(c)).collect()),
                    None => (space.metric[o].instance.element.chart.0, frame_corners(&frame, dim)),
                };
                let entry = per.entry(region).or_insert((None, 0));
                grow(&mut entry.0, &corners, dim);
                entry.1 += 1;
            }
            let boxes = per
                .into_iter()
                .map(|(region, (bx, elements))| {
                    let (lo, hi) = bx.unwrap();
                    ExtensionBox { region, lo, hi, elements }
                })
                .collect();
            let case = if extraordinary {
                ExtensionCase::ExtraordinaryVertex
            } else {
                ExtensionCase::Unresolved
            };
            (case, boxes)
        }
    };
    SupportExtension {
        element: q,
        case,
        orbits: orbits.into_iter().collect(),
        boxes,
    }
}

/// `G = Σ c_A B_A` with control points in `R^3` over a coarse space; it can
/// be evaluated on any refinement of that space through chart coordinates.
#[derive(Clone, Debug)]
pub struct GeometryMap {
    pub space: SplineSpace,
    pub control: Vec<Point>,
    lines: Vec<Option<Vec<Vec<f64>>>>,
}

impl GeometryMap {
    pub fn new(space: SplineSpace, control: Vec<Point>) -> Self {
        let lines = space
            .manifold
            .proto
            .charts
            .iter()
            .map(|c| match &c.kind {
                ChartKind::Structured { knots } => Some(knots.iter().map(|k| breakpoints(k)).collect()),
                _ => None,
            })
            .collect();
        Self { space, control, lines }
    }

    /// Projects a vector field componentwise.
    pub fn project(space: SplineSpace, duals: &DualSet, f: impl Fn(usize, &Point) -> Point) -> Self {
        let control = duals
            .functionals
            .iter()
            .map(|d| {
                let mut c = [0.0; MAX_DIM];
                for (i, v) in c.iter_mut().enumerate() {
                    *v = d.apply(|o, x| f(o, x)[i]);
                }
                c
            })
            .collect();
        Self::new(space, control)
    }

    /// Value and Jacobian on an orbit of the coarse space.
    pub fn eval_coarse(&self, orbit: usize, x: &Point) -> (Point, Mat) {
        let mut g = [0.0; MAX_DIM];
        let mut jac = [[0.0; MAX_DIM]; MAX_DIM];
        for &a in &self.space.alive[orbit] {
            let (v, grad) = self.space.eval(a, orbit, x);
            for i in 0..MAX_DIM {
                g[i] += self.control[a][i] * v;
                for j in 0..MAX_DIM {
                    jac[i][j] += self.control[a][i] * grad[j];
                }
            }
        }
        (g, jac)
    }

    /// Value and Jacobian at metric coordinates of an orbit of `target`, a
    /// refinement of the coarse space.
    pub fn eval_on(&self, target: &SplineSpace, orbit: usize, x: &Point) -> (Point, Mat) {
        let dim = target.dim();
        let metric = &target.metric[orbit];
        let chart = metric.instance.element.chart;
        let lines = self.lines[chart.0].as_ref().expect("metric instances are structured");
        // chart coordinates of x in the coarse chart: locate the element
        let mut idx = 0;
        let mut stride = 1;
        let centre = metric.frame.midpoint();
        for a in 0..dim {
            let bp = &lines[a];
            let i = bp.partition_point(|&b| b <= centre[a]).clamp(1, bp.len() - 1) - 1;
            idx += i * stride;
            stride *= bp.len() - 1;
        }
        let m0 = &self.space.manifold;
        let er = ElementRef { chart, element: idx };
        let o0 = m0.orbit_of(er);
        let inst = m0.instance(er);
        let frame = ElementFrame::of(m0.proto.chart(chart), idx, dim);
        let m0frame = &self.space.metric[o0];
        let map = instance_affine(m0, (inst, &frame), (&m0frame.instance, &m0frame.frame));
        let (g, j0) = self.eval_coarse(o0, &map.apply(x));
        let mut jac = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..MAX_DIM {
            for j in 0..dim {
                jac[i][j] = (0..dim).map(|k| j0[i][k] * map.a[k][j]).sum();
            }
        }
        (g, jac)
    }

    /// `det(DG^T DG)` at a point of `target`.
    pub fn metric_det(&self, target: &SplineSpace, orbit: usize, x: &Point) -> f64 {
        let (_, jac) = self.eval_on(target, orbit, x);
        gram_det(&jac, target.dim())
    }

    /// Minimum and maximum of `det(DG^T DG)` over the quadrature points of
    /// `target`.
    pub fn regularity(&self, target: &SplineSpace) -> Result<(f64, f64), AnalysisError> {
        let dim = target.dim();
        let rule = QuadratureRule::tensor(dim, norm_points(target.degree));
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (o, metric) in target.metric.iter().enumerate() {
            for (r, _) in rule.iter() {
                let d = self.metric_det(target, o, &metric.frame.to_frame(r));
                lo = lo.min(d);
                hi = hi.max(d);
            }
        }
        if !(lo > REGULARITY_TOL) {
            return Err(AnalysisError::NonRegularGeometry { min_det: lo });
        }
        Ok((lo, hi))
    }
}

fn gram_det(jac: &Mat, dim: usize) -> f64 {
    let mut g = [[0.0; MAX_DIM]; MAX_DIM];
    for a in 0..dim {
        for b in 0..dim {
            g[a][b] = (0..MAX_DIM).map(|i| jac[i][a] * jac[i][b]).sum();
        }
    }
    match dim {
        1 => g[0][0],
        2 => g[0][0] * g[1][1] - g[0][1] * g[1][0],
        _ => {
            g[0][0] * (g[1][1] * g[2][2] - g[1][2] * g[2][1]) - g[0][1] * (g[1][0] * g[2][2] - g[1][2] * g[2][0])
                + g[0][2] * (g[1][0] * g[2][1] - g[1][1] * g[2][0])
        }
    }
}

/// `f ∘ G` for a field on the physical surface.
pub struct OnSurface<'a> {
    pub geometry: &'a GeometryMap,
    pub target: &'a SplineSpace,
    pub field: &'a Field,
}

impl ManifoldField for OnSurface<'_> {
    fn eval(&self, orbit: usize, x: &Point) -> (f64, Point) {
        let (p, jac) = self.geometry.eval_on(self.target, orbit, x);
        let (v, g) = self.field.eval(&p);
        (v, pull_gradient(&jac, &g, self.target.dim()))
    }
}

/// `‖f - g‖` on the surface, with the area element `det(DG^T DG)^{1/2}`.
pub fn surface_l2_error(
    geometry: &GeometryMap,
    target: &SplineSpace,
    f: &dyn ManifoldField,
    g: &dyn ManifoldField,
) -> f64 {
    integrate(target, norm_points(target.degree), |o, x| {
        let d = geometry.metric_det(target, o, x).max(0.0).sqrt();
        (f.eval(o, x).0 - g.eval(o, x).0).powi(2) * d
    })
    .sqrt()
}

pub fn surface_l2(geometry: &GeometryMap, target: &SplineSpace, f: &dyn ManifoldField) -> f64 {
    let zero = |_: usize, _: &Point| (0.0, [0.0; MAX_DIM]);
    surface_l2_error(geometry, target, f, &zero)
}

/// `Π_{V_h} f` as the coefficients of `Π_{S_h}(f ∘ G)`.
pub fn project_iso(geometry: &GeometryMap, target: &SplineSpace, duals: &DualSet, field: &Field) -> Vec<f64> {
    project(duals, &OnSurface { geometry, target, field })
}

/// Planar embedding lifted to the saddle `z = amplitude (x^2 - y^2)`,
/// projected into the space.
pub fn saddle_geometry(
    space: SplineSpace,
    duals: &DualSet,
    locator: &PatchLocator,
    amplitude: f64,
) -> GeometryMap {
    GeometryMap::project(space, duals, |o, x| {
        let (p, _) = locator.physical(o, x);
        [p[0], p[1], amplitude * (p[0] * p[0] - p[1] * p[1])]
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub level: usize,
    pub h: f64,
    pub err_l2: f64,
    pub err_h1: f64,
    pub rate_l2: Option<f64>,
    pub rate_h1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

/// Least-squares slope of `log e` against `log h`.
fn ls_rate(hs: &[f64], es: &[f64]) -> f64 {
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = es.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

impl ConvergenceTable {
    fn from_errors(rows: Vec<(usize, f64, f64, f64)>) -> Self {
        let mut out = Vec::with_capacity(rows.len());
        for (i, &(level, h, l2, h1)) in rows.iter().enumerate() {
            let rate = |cur: f64, prev: Option<(f64, f64)>| prev.map(|(ph, pe)| (pe / cur).ln() / (ph / h).ln());
            let prev = i.checked_sub(1).map(|j| rows[j]);
            out.push(ConvergenceRow {
                level,
                h,
                err_l2: l2,
                err_h1: h1,
                rate_l2: rate(l2, prev.map(|p| (p.1, p.2))),
                rate_h1: rate(h1, prev.map(|p| (p.1, p.3))),
            });
        }
        Self { rows: out }
    }

    /// Observed orders: least-squares slopes over the last `n` levels.
    pub fn ls_rates(&self, n: usize) -> (f64, f64) {
        let tail = &self.rows[self.rows.len().saturating_sub(n)..];
        let hs: Vec<f64> = tail.iter().map(|r| r.h).collect();
        let l2: Vec<f64> = tail.iter().map(|r| r.err_l2).collect();
        let h1: Vec<f64> = tail.iter().map(|r| r.err_h1).collect();
        (ls_rate(&hs, &l2), ls_rate(&hs, &h1))
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|r| format!("{r:.6}")).unwrap_or_default();
        let mut s = String::from("level,h,err_l2,err_h1,rate_l2,rate_h1\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.6e},{:.6e},{:.6e},{},{}\n",
                r.level,
                r.h,
                r.err_l2,
                r.err_h1,
                opt(r.rate_l2),
                opt(r.rate_h1)
            ));
        }
        s
    }
}

/// Largest element side of the coarsest mesh.
fn mesh_size(space: &SplineSpace) -> f64 {
    let dim = space.dim();
    space
        .metric
        .iter()
        .flat_map(|m| m.frame.len[..dim].to_vec())
        .map(f64::abs)
        .fold(0.0, f64::max)
}

/// Projection errors of a manufactured field over `levels` uniform
/// refinements of `proto`.
pub fn convergence_study(
    proto: &ProtoManifold,
    degree: usize,
    levels: usize,
    field: &Field,
) -> Result<ConvergenceTable, AnalysisError> {
    let mut rows = Vec::new();
    let mut h0 = None;
    for level in 0..levels {
        let space = SplineSpace::assemble(ParameterManifold::build(refine_levels(proto, level)?)?, degree)?;
        let h = *h0.get_or_insert_with(|| mesh_size(&space)) / (1u64 << level) as f64;
        let duals = default_duals(&space)?;
        let locator = PatchLocator::new(&space)?;
        let exact = Pullback { locator: &locator, field };
        let coeffs = project(&duals, &exact);
        let (l2, h1) = error_norms(&space, &exact, &SplineField { space: &space, coeffs: &coeffs });
        rows.push((level, h, l2, h1));
    }
    Ok(ConvergenceTable::from_errors(rows))
}

/// Same on the surface `G(Ω)` for a geometry map built on the coarsest
/// level by `geometry`. `err_h1` is the parametric H¹ seminorm of the
/// pulled-back error.
pub fn surface_convergence_study(
    proto: &ProtoManifold,
    degree: usize,
    levels: usize,
    field: &Field,
    geometry: impl FnOnce(SplineSpace, &DualSet, &PatchLocator) -> GeometryMap,
) -> Result<ConvergenceTable, AnalysisError> {
    let coarse = SplineSpace::assemble(ParameterManifold::build(proto.clone())?, degree)?;
    let duals = default_duals(&coarse)?;
    let locator = PatchLocator::new(&coarse)?;
    let h0 = mesh_size(&coarse);
    let g = geometry(coarse, &duals, &locator);
    let mut rows = Vec::new();
    for level in 0..levels {
        let space = SplineSpace::assemble(ParameterManifold::build(refine_levels(proto, level)?)?, degree)?;
        g.regularity(&space)?;
        let duals = default_duals(&space)?;
        let exact = OnSurface { geometry: &g, target: &space, field };
        let coeffs = project(&duals, &exact);
        let approx = SplineField { space: &space, coeffs: &coeffs };
        let l2 = surface_l2_error(&g, &space, &exact, &approx);
        let (_, h1) = error_norms(&space, &exact, &approx);
        rows.push((level, h0 / (1u64 << level) as f64, l2, h1));
    }
    Ok(ConvergenceTable::from_errors(rows))
}
