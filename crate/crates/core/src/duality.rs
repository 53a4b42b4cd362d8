//! Dual functionals, the dual-compatibility check and the independence
//! certificate.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::atlas::{ChartId, ChartKind, ElementRef};
use crate::basis::{transfer_point, ElementFrame, FunctionClass, ProtoRepr, SplineSpace};
use crate::error::DualityError;
use crate::geom::{Point, MAX_DIM};
use crate::knots::overlap_and_differ;
use crate::quadrature::{functional_points, unit_rule};

pub use crate::knots::{overlap, OverlapWitness};

/// Default tolerance of the duality residual.
pub const DUALITY_TOL: f64 = 1e-10;

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Bernstein polynomial `B_{k,p}` on `[0, 1]`.
pub fn bernstein(p: usize, k: usize, t: f64) -> f64 {
    binomial(p, k) * t.powi(k as i32) * (1.0 - t).powi((p - k) as i32)
}

/// Blossoms of the degree-`p` Bernstein basis at `args` (normalized to the
/// unit interval): entry `k` is the sum over `k`-subsets `S` of
/// `prod_{S} t * prod_{not S} (1 - t)`.
fn bernstein_blossoms(args: &[f64]) -> Vec<f64> {
    let p = args.len();
    let mut dp = vec![0.0; p + 1];
    dp[0] = 1.0;
    for (i, &t) in args.iter().enumerate() {
        for j in (0..=i + 1).rev() {
            let keep = dp[j] * (1.0 - t);
            let take = if j > 0 { dp[j - 1] * t } else { 0.0 };
            dp[j] = keep + take;
        }
    }
    dp
}

/// `λ[Ξ]`: integration against a degree-`p` polynomial `g` on one knot
/// interval of `Ξ`. For every degree-`p` polynomial `f` on that interval,
/// `∫ g f` is the blossom of `f` at the interior knots of `Ξ`, i.e. the
/// coefficient of `b[Ξ]` in any B-spline expansion of `f`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnivariateDual {
    pub knots: Vec<f64>,
    pub interval: (f64, f64),
    /// Coefficients of `g` in the Bernstein basis of `interval`.
    pub coeffs: Vec<f64>,
}

/// Index of the central nonempty interval of `knots`, ties toward the lower
/// index.
pub fn central_interval(knots: &[f64]) -> Option<usize> {
    let nonempty: Vec<usize> = (0..knots.len() - 1).filter(|&i| knots[i] < knots[i + 1]).collect();
    if nonempty.is_empty() {
        return None;
    }
    Some(nonempty[(nonempty.len() - 1) / 2])
}

/// Gram matrix of the degree-`p` Bernstein basis on `[0, 1]`.
fn bernstein_gram(p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(p + 1, p + 1, |j, k| {
        binomial(p, j) * binomial(p, k) / ((2 * p + 1) as f64 * binomial(2 * p, j + k))
    })
}

pub fn univariate_dual(knots: &[f64]) -> Result<UnivariateDual, DualityError> {
    if knots.len() < 2 || knots.windows(2).any(|w| w[1] < w[0]) {
        return Err(DualityError::Singular(format!("invalid knot vector {knots:?}")));
    }
    let p = knots.len() - 2;
    let i = central_interval(knots)
        .ok_or_else(|| DualityError::Singular(format!("knot vector {knots:?} has no nonempty interval")))?;
    let (a, b) = (knots[i], knots[i + 1]);
    let args: Vec<f64> = knots[1..=p].iter().map(|&y| (y - a) / (b - a)).collect();
    let beta = DVector::from_vec(bernstein_blossoms(&args));
    let m = bernstein_gram(p) * (b - a);
    let coeffs = m
        .lu()
        .solve(&beta)
        .ok_or_else(|| DualityError::Singular(format!("Bernstein Gram of degree {p}")))?;
    Ok(UnivariateDual {
        knots: knots.to_vec(),
        interval: (a, b),
        coeffs: coeffs.iter().copied().collect(),
    })
}

impl UnivariateDual {
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn len(&self) -> f64 {
        self.interval.1 - self.interval.0
    }

    /// Dual density `g` at `y`.
    pub fn density(&self, y: f64) -> f64 {
        let t = (y - self.interval.0) / self.len();
        let p = self.degree();
        self.coeffs.iter().enumerate().map(|(k, c)| c * bernstein(p, k, t)).sum()
    }

    /// Quadrature nodes on the interval with weights `w * |I| * g`.
    pub fn points(&self, n: usize) -> Vec<(f64, f64)> {
        unit_rule(n)
            .into_iter()
            .map(|(t, w)| {
                let y = self.interval.0 + t * self.len();
                (y, w * self.len() * self.density(y))
            })
            .collect()
    }

    pub fn apply(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points(functional_points(self.degree()))
            .into_iter()
            .map(|(y, w)| w * f(y))
            .sum()
    }

    /// `‖g‖_{L²(I)} |I|^{1/2}`, so that `|λ(f)| ≤ C |I|^{-1/2} ‖f‖_{L²(I)}`.
    pub fn norm_constant(&self) -> f64 {
        let n = self.degree() + 1;
        let g2: f64 = unit_rule(n)
            .into_iter()
            .map(|(t, w)| {
                let y = self.interval.0 + t * self.len();
                w * self.len() * self.density(y).powi(2)
            })
            .sum();
        g2.sqrt() * self.len().sqrt()
    }
}

/// One weighted evaluation `w * φ(x)` at metric coordinates `x` of an
/// element orbit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FunctionalPoint {
    pub orbit: usize,
    pub x: Point,
    pub w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DualKind {
    Tensor { chart: ChartId },
    Vertex { chart: ChartId, segments: usize },
    Edge { chart: ChartId, segments: usize },
    ProtoVertex { chart: ChartId },
    ProtoEdge { chart: ChartId },
    Corrected { base: Box<DualKind>, corrections: Vec<(usize, f64)> },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualFunctional {
    pub kind: DualKind,
    /// Sorted by orbit.
    pub points: Vec<FunctionalPoint>,
}

impl DualFunctional {
    fn new(kind: DualKind, mut points: Vec<FunctionalPoint>) -> Self {
        points.retain(|q| q.w != 0.0);
        points.sort_by_key(|q| q.orbit);
        Self { kind, points }
    }

    /// Element orbits where the functional samples.
    pub fn orbits(&self) -> BTreeSet<usize> {
        self.points.iter().map(|q| q.orbit).collect()
    }

    /// `Λ(φ)` for `φ` given by its value at metric coordinates of an orbit.
    pub fn apply(&self, f: impl Fn(usize, &Point) -> f64) -> f64 {
        self.points.iter().map(|q| q.w * f(q.orbit, &q.x)).sum()
    }

    pub fn apply_basis(&self, space: &SplineSpace, a: usize) -> f64 {
        let f = &space.functions[a];
        self.points
            .iter()
            .filter_map(|q| f.piece(q.orbit).map(|k| q.w * space.eval_piece(k, q.orbit, &q.x, 0).0))
            .sum()
    }

    /// Row of the Gram matrix: `Λ(B_A)` for every function alive on a
    /// sampled orbit.
    pub fn gram_row(&self, space: &SplineSpace) -> BTreeMap<usize, f64> {
        let mut row = BTreeMap::new();
        for q in &self.points {
            for &a in &space.alive[q.orbit] {
                let piece = space.functions[a].piece(q.orbit).expect("alive function has a piece");
                *row.entry(a).or_insert(0.0) += q.w * space.eval_piece(piece, q.orbit, &q.x, 0).0;
            }
        }
        row
    }

    /// `self - c * other`.
    fn subtract(&mut self, c: f64, other: &DualFunctional) {
        self.points.extend(other.points.iter().map(|q| FunctionalPoint { w: -c * q.w, ..*q }));
        self.points.sort_by_key(|q| q.orbit);
    }
}

/// Maps chart reference points of one element to functional points.
fn element_points(
    space: &SplineSpace,
    element: ElementRef,
    samples: impl IntoIterator<Item = (Point, f64)>,
) -> Vec<FunctionalPoint> {
    let dim = space.dim();
    let m = &space.manifold;
    let orbit = m.orbit_of(element);
    let inst = m.instance(element);
    let frame = ElementFrame::of(m.proto.chart(element.chart), element.element, dim);
    let metric = &space.metric[orbit];
    samples
        .into_iter()
        .map(|(r, w)| {
            let u = frame.to_frame(&r);
            let x = transfer_point(&u, (inst, &frame), (&metric.instance, &metric.frame), m);
            FunctionalPoint { orbit, x, w }
        })
        .collect()
}

fn tensor_samples(axes: &[Vec<(f64, f64)>]) -> Vec<(Point, f64)> {
    let n: usize = axes.iter().map(Vec::len).product();
    (0..n)
        .map(|lin| {
            let mut r = [0.0; MAX_DIM];
            let mut w = 1.0;
            let mut rem = lin;
            for (a, line) in axes.iter().enumerate() {
                let (x, wx) = line[rem % line.len()];
                r[a] = x;
                w *= wx;
                rem /= line.len();
            }
            (r, w)
        })
        .collect()
}

fn ref_knots(p: usize) -> Vec<f64> {
    let mut k = vec![0.0; p + 1];
    k.push(1.0);
    k
}

/// Tensor product of univariate duals of a structured proto-basis function.
fn tensor_dual(space: &SplineSpace, chart: ChartId, local: usize) -> Result<DualFunctional, DualityError> {
    let dim = space.dim();
    let c = space.manifold.proto.chart(chart);
    let knots = space.protos[chart.0][local].frame_knots(dim);
    let n = functional_points(space.degree);
    let duals = knots.iter().map(|k| univariate_dual(k)).collect::<Result<Vec<_>, _>>()?;
    let mut centre = [0.0; MAX_DIM];
    for a in 0..dim {
        centre[a] = 0.5 * (duals[a].interval.0 + duals[a].interval.1);
    }
    let (element, _) = c
        .mesh
        .locate(&centre)
        .ok_or_else(|| DualityError::Configuration(format!("dual interval outside chart {chart}")))?;
    let frame = ElementFrame::of(c, element, dim);
    // per axis: reference coordinate in the element, weight
    let axes: Vec<Vec<(f64, f64)>> = (0..dim)
        .map(|a| {
            duals[a]
                .points(n)
                .into_iter()
                .map(|(y, w)| ((y - frame.lo[a]) / frame.len[a], w))
                .collect()
        })
        .collect();
    if axes.iter().flatten().any(|&(r, _)| !(0.0..=1.0).contains(&r)) {
        return Err(DualityError::Configuration(format!(
            "dual interval of function {local} on chart {chart} is not a chart element"
        )));
    }
    let er = ElementRef { chart, element };
    Ok(DualFunctional::new(DualKind::Tensor { chart }, element_points(space, er, tensor_samples(&axes))))
}

/// Ring segments of a vertex or edge chart; for edge charts only the
/// segments in axis element `layer`.
fn ring_elements(space: &SplineSpace, chart: ChartId, layer: usize) -> Vec<usize> {
    let c = space.manifold.proto.chart(chart);
    match &c.kind {
        ChartKind::UnstructuredEdge3D { section, .. } => {
            let k = section.len();
            (0..k).map(|l| l + k * layer).collect()
        }
        _ => (0..c.element_count()).collect(),
    }
}

/// Edge-chart axis element containing the central dual interval.
fn axis_layer(space: &SplineSpace, chart: ChartId, dual: &UnivariateDual) -> Result<usize, DualityError> {
    let c = space.manifold.proto.chart(chart);
    let ChartKind::UnstructuredEdge3D { axis_knots, .. } = &c.kind else {
        unreachable!("edge dual on an edge chart")
    };
    let bps = crate::atlas::breakpoints(axis_knots);
    let mid = 0.5 * (dual.interval.0 + dual.interval.1);
    bps.windows(2)
        .position(|w| w[0] <= mid && mid <= w[1])
        .ok_or_else(|| DualityError::Configuration(format!("axis dual outside edge chart {chart}")))
}

fn vertex_dual(space: &SplineSpace, chart: ChartId) -> Result<DualFunctional, DualityError> {
    let p = space.degree;
    let dim = space.dim();
    let n = functional_points(p);
    let d0 = univariate_dual(&ref_knots(p))?;
    let line = d0.points(n);
    let elements = ring_elements(space, chart, 0);
    let k = elements.len();
    let samples: Vec<(Point, f64)> = tensor_samples(&vec![line; dim])
        .into_iter()
        .map(|(r, w)| (r, w / k as f64))
        .collect();
    let mut points = Vec::new();
    for e in elements {
        points.extend(element_points(space, ElementRef { chart, element: e }, samples.iter().copied()));
    }
    Ok(DualFunctional::new(DualKind::Vertex { chart, segments: k }, points))
}

fn edge_axis_dual(space: &SplineSpace, chart: ChartId, local: usize) -> Result<UnivariateDual, DualityError> {
    match &space.protos[chart.0][local].repr {
        ProtoRepr::Edge { axis } => univariate_dual(axis.knots()),
        _ => unreachable!("edge chart proto-basis is of edge type"),
    }
}

fn edge_dual(space: &SplineSpace, chart: ChartId, local: usize) -> Result<DualFunctional, DualityError> {
    let p = space.degree;
    let n = functional_points(p);
    let d0 = univariate_dual(&ref_knots(p))?;
    let d3 = edge_axis_dual(space, chart, local)?;
    let layer = axis_layer(space, chart, &d3)?;
    let elements = ring_elements(space, chart, layer);
    let k = elements.len();
    let c = space.manifold.proto.chart(chart);
    let mut points = Vec::new();
    for e in elements {
        let frame = ElementFrame::of(c, e, 3);
        let axis: Vec<(f64, f64)> = d3.points(n).into_iter().map(|(y, w)| ((y - frame.lo[2]) / frame.len[2], w)).collect();
        let line = d0.points(n);
        let samples: Vec<(Point, f64)> = tensor_samples(&[line.clone(), line, axis])
            .into_iter()
            .map(|(r, w)| (r, w / k as f64))
            .collect();
        points.extend(element_points(space, ElementRef { chart, element: e }, samples));
    }
    Ok(DualFunctional::new(DualKind::Edge { chart, segments: k }, points))
}

fn profile(p: usize, r: &Point, dim: usize) -> f64 {
    (0..dim).map(|a| (1.0 - r[a]).powi(p as i32)).product()
}

/// `φ ↦ ∫ φ b / ∫ b²` over the ring segments, in chart coordinates. For edge
/// charts the integral runs over the cross-section of one axis layer and is
/// tensorized with the axis dual.
fn proto_ring_dual(space: &SplineSpace, chart: ChartId, local: usize) -> Result<DualFunctional, DualityError> {
    let p = space.degree;
    let dim = space.dim();
    let c = space.manifold.proto.chart(chart);
    let n = functional_points(p);
    let line = unit_rule(n);
    let is_edge = matches!(c.kind, ChartKind::UnstructuredEdge3D { .. });
    let ring_dim = if is_edge { 2 } else { dim };
    let (layer, axis) = if is_edge {
        let d3 = edge_axis_dual(space, chart, local)?;
        (axis_layer(space, chart, &d3)?, Some(d3))
    } else {
        (0, None)
    };
    let elements = ring_elements(space, chart, layer);
    let section = tensor_samples(&vec![line; ring_dim]);
    // section Jacobian: full cell Jacobian over the axis length
    let det = |e: usize, r: &Point| -> f64 {
        let cell = &c.mesh.cells[e];
        let j = cell.det_jacobian(r).abs();
        if is_edge {
            j / ElementFrame::of(c, e, 3).len[2]
        } else {
            j
        }
    };
    let mut norm = 0.0;
    for &e in &elements {
        for (r, w) in &section {
            norm += w * det(e, r) * profile(p, r, ring_dim).powi(2);
        }
    }
    if norm <= 0.0 {
        return Err(DualityError::LinearDependence(format!("vertex profile on chart {chart} has zero norm")));
    }
    let mut points = Vec::new();
    for &e in &elements {
        let mut samples = Vec::new();
        for (r, w) in &section {
            let base = w * det(e, r) * profile(p, r, ring_dim) / norm;
            match &axis {
                None => samples.push((*r, base)),
                Some(d3) => {
                    let frame = ElementFrame::of(c, e, 3);
                    for (y, wy) in d3.points(n) {
                        let mut rr = *r;
                        rr[2] = (y - frame.lo[2]) / frame.len[2];
                        samples.push((rr, base * wy));
                    }
                }
            }
        }
        points.extend(element_points(space, ElementRef { chart, element: e }, samples));
    }
    let kind = if is_edge {
        DualKind::ProtoEdge { chart }
    } else {
        DualKind::ProtoVertex { chart }
    };
    Ok(DualFunctional::new(kind, points))
}

/// Chart whose proto-basis defines the dual of `a`: a structured instance
/// for structured functions, otherwise the edge or vertex chart.
pub fn owning_instance(space: &SplineSpace, a: usize) -> (ChartId, usize) {
    let f = &space.functions[a];
    let charts = &space.manifold.proto.charts;
    let rank = |c: ChartId| match (&charts[c.0].kind, f.class) {
        (ChartKind::Structured { .. }, _) => 0,
        (ChartKind::UnstructuredEdge3D { .. }, FunctionClass::Edge) => 0,
        (_, FunctionClass::Vertex) => 0,
        _ => 1,
    };
    *f.instances
        .iter()
        .min_by_key(|(c, _)| rank(*c))
        .expect("function has an instance")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualSet {
    pub functionals: Vec<DualFunctional>,
}

impl DualSet {
    pub fn len(&self) -> usize {
        self.functionals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functionals.is_empty()
    }

    /// Sparse Gram rows `G[A][A'] = Λ_A(B_{A'})`.
    pub fn gram(&self, space: &SplineSpace) -> Vec<BTreeMap<usize, f64>> {
        self.functionals.iter().map(|f| f.gram_row(space)).collect()
    }
}

/// Explicit construction: tensor duals, averaged vertex duals and averaged
/// edge duals. Requires each unstructured function to live on one chart.
pub fn build_explicit_dual(space: &SplineSpace) -> Result<DualSet, DualityError> {
    let mut functionals = Vec::with_capacity(space.len());
    for (a, f) in space.functions.iter().enumerate() {
        let (chart, local) = owning_instance(space, a);
        let kind = &space.manifold.proto.chart(chart).kind;
        let dual = match f.class {
            FunctionClass::Structured => tensor_dual(space, chart, local)?,
            FunctionClass::Edge | FunctionClass::Vertex => {
                let owners = f
                    .instances
                    .iter()
                    .filter(|(c, _)| !space.manifold.proto.chart(*c).kind.is_structured())
                    .count();
                if owners != 1 {
                    return Err(DualityError::Configuration(format!(
                        "function {a} lives on {owners} unstructured charts"
                    )));
                }
                match kind {
                    ChartKind::UnstructuredEdge3D { .. } => edge_dual(space, chart, local)?,
                    _ => vertex_dual(space, chart)?,
                }
            }
        };
        functionals.push(dual);
    }
    Ok(DualSet { functionals })
}

/// Proto-duals `Λ̂_A` before corrections.
pub fn build_proto_duals(space: &SplineSpace) -> Result<DualSet, DualityError> {
    let mut functionals = Vec::with_capacity(space.len());
    for (a, f) in space.functions.iter().enumerate() {
        let (chart, local) = owning_instance(space, a);
        functionals.push(match f.class {
            FunctionClass::Structured => tensor_dual(space, chart, local)?,
            _ => proto_ring_dual(space, chart, local)?,
        });
    }
    Ok(DualSet { functionals })
}

/// Corrected construction: structured proto-duals unchanged; edge and
/// vertex proto-duals minus their cross terms with functions owned by
/// other charts.
pub fn build_corrected_dual(space: &SplineSpace, proto: &DualSet) -> Result<DualSet, DualityError> {
    let mut done: Vec<Option<DualFunctional>> = vec![None; space.len()];
    for (a, f) in space.functions.iter().enumerate() {
        if f.class == FunctionClass::Structured {
            done[a] = Some(proto.functionals[a].clone());
        }
    }
    for class in [FunctionClass::Edge, FunctionClass::Vertex] {
        for a in (0..space.len()).filter(|&a| space.functions[a].class == class) {
            let (chart, _) = owning_instance(space, a);
            let own: BTreeSet<usize> = space.chart_sets[chart.0].iter().copied().collect();
            let base = &proto.functionals[a];
            let mut out = base.clone();
            let mut corrections = Vec::new();
            for &b in &space.extended_sets[chart.0] {
                if own.contains(&b) {
                    continue;
                }
                let cls = space.functions[b].class;
                if class == FunctionClass::Edge && cls != FunctionClass::Structured {
                    continue;
                }
                let c = base.apply_basis(space, b);
                if c == 0.0 {
                    continue;
                }
                let target = done[b].as_ref().ok_or_else(|| {
                    DualityError::Configuration(format!(
                        "correction of function {a} needs the not yet corrected function {b}"
                    ))
                })?;
                out.subtract(c, target);
                corrections.push((b, c));
            }
            out.kind = DualKind::Corrected {
                base: Box::new(base.kind.clone()),
                corrections,
            };
            done[a] = Some(out);
        }
    }
    Ok(DualSet {
        functionals: done.into_iter().map(|d| d.expect("every function handled")).collect(),
    })
}

/// Largest entry of `|G - I|`.
pub fn gram_residual(gram: &[BTreeMap<usize, f64>]) -> f64 {
    gram.iter()
        .enumerate()
        .map(|(a, row)| {
            let diag = (row.get(&a).copied().unwrap_or(0.0) - 1.0).abs();
            row.iter()
                .filter(|(&b, _)| b != a)
                .map(|(_, v)| v.abs())
                .fold(diag, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Largest entry of the difference of two sparse Gram matrices.
pub fn gram_distance(g: &[BTreeMap<usize, f64>], h: &[BTreeMap<usize, f64>]) -> f64 {
    g.iter()
        .zip(h)
        .map(|(r, s)| {
            let keys: BTreeSet<usize> = r.keys().chain(s.keys()).copied().collect();
            keys.into_iter()
                .map(|k| (r.get(&k).unwrap_or(&0.0) - s.get(&k).unwrap_or(&0.0)).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndependenceCertificate {
    pub certified: bool,
    pub residual: f64,
    pub tol: f64,
    pub functions: usize,
}

pub fn certify_linear_independence(space: &SplineSpace, duals: &DualSet, tol: f64) -> IndependenceCertificate {
    let residual = if duals.len() == space.len() {
        gram_residual(&duals.gram(space))
    } else {
        f64::INFINITY
    };
    IndependenceCertificate {
        certified: residual <= tol,
        residual,
        tol,
        functions: space.len(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum DcCondition {
    StructuredOverlap,
    EdgeSameChart,
    EdgeOtherChart,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DcFailure {
    pub condition: DcCondition,
    pub chart: usize,
    pub first: usize,
    pub second: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DcReport {
    pub pairs_checked: usize,
    pub failures: Vec<DcFailure>,
    pub verdict: bool,
}

/// Snaps values within a relative `1e-9` of the chart's knot values onto
/// them, removing round-off of transition-mapped knots.
fn snap(values: &mut [f64], line: &[f64]) {
    for v in values.iter_mut() {
        if let Some(&s) = line.iter().find(|&&s| (s - *v).abs() <= 1e-9 * (1.0 + s.abs())) {
            *v = s;
        }
    }
}

/// Per-element knot vectors of `b` on chart `chart` in chart coordinates.
fn chart_restrictions(space: &SplineSpace, b: usize, chart: ChartId, lines: &[Vec<f64>]) -> Vec<Vec<Vec<f64>>> {
    let f = &space.functions[b];
    if let Some(&(_, local)) = f.instances.iter().find(|(c, _)| *c == chart) {
        return vec![space.protos[chart.0][local].frame_knots(space.dim())];
    }
    let mut out = Vec::new();
    for &o in &f.support {
        let Some(inst) = space.manifold.orbits[o].instance_on(chart) else {
            continue;
        };
        let mut k = space.restriction_on(b, inst.element).expect("support orbit");
        for (a, axis) in k.iter_mut().enumerate() {
            snap(axis, &lines[a]);
        }
        if !out.contains(&k) {
            out.push(k);
        }
    }
    out
}

pub fn check_dual_compatibility(space: &SplineSpace) -> DcReport {
    let dim = space.dim();
    let mut failures = Vec::new();
    let mut pairs = 0;
    for (i, chart) in space.manifold.proto.charts.iter().enumerate() {
        let id = ChartId(i);
        match &chart.kind {
            ChartKind::Structured { knots } => {
                for &a in &space.chart_sets[i] {
                    let &(_, local) = space.functions[a].instances.iter().find(|(c, _)| *c == id).unwrap();
                    let ka = space.protos[i][local].frame_knots(dim);
                    for &b in &space.extended_sets[i] {
                        if b == a {
                            continue;
                        }
                        pairs += 1;
                        let rs = chart_restrictions(space, b, id, knots);
                        let ok = (0..dim).any(|l| rs.iter().all(|kb| overlap_and_differ(&ka[l], &kb[l])));
                        if !ok {
                            failures.push(DcFailure {
                                condition: DcCondition::StructuredOverlap,
                                chart: i,
                                first: a,
                                second: b,
                            });
                        }
                    }
                }
            }
            ChartKind::UnstructuredEdge3D { axis_knots, .. } => {
                let line = |_: usize| axis_knots.clone();
                let lines: Vec<Vec<f64>> = (0..3).map(|a| if a == 2 { line(a) } else { vec![0.0, 1.0] }).collect();
                let own: BTreeSet<usize> = space.chart_sets[i].iter().copied().collect();
                for &a in &space.chart_sets[i] {
                    if space.functions[a].class != FunctionClass::Edge {
                        continue;
                    }
                    let &(_, local) = space.functions[a].instances.iter().find(|(c, _)| *c == id).unwrap();
                    let ka = &space.protos[i][local].frame_knots(3)[2];
                    for &b in &space.extended_sets[i] {
                        if b == a {
                            continue;
                        }
                        let condition = if own.contains(&b) {
                            DcCondition::EdgeSameChart
                        } else if space.functions[b].class != FunctionClass::Structured {
                            DcCondition::EdgeOtherChart
                        } else {
                            continue;
                        };
                        pairs += 1;
                        let rs = chart_restrictions(space, b, id, &lines);
                        if !rs.iter().all(|kb| overlap_and_differ(ka, &kb[2])) {
                            failures.push(DcFailure {
                                condition,
                                chart: i,
                                first: a,
                                second: b,
                            });
                        }
                    }
                }
            }
            _ => {}
        }
    }
    DcReport {
        pairs_checked: pairs,
        verdict: failures.is_empty(),
        failures,
    }
}
