//! Proto-basis functions on charts and the global spline manifold space.
//!
//! Every function restricted to one element is a tensor product of
//! univariate B-spline pieces, so a global function is stored as one set of
//! per-axis local knot vectors per support element orbit, expressed in that
//! orbit's metric frame (the axis box of its first structured instance).

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::atlas::{breakpoints, Chart, ChartId, ChartKind, ElementRef};
use crate::error::BasisError;
use crate::geom::{corner_count, Orientation, Point, MAX_DIM};
use crate::knots::{eval_piece1, reparametrize, LocalKnotVector};
use crate::manifold::{Instance, ParameterManifold};

/// Tolerance for matching transition-mapped knot vectors.
pub const KNOT_TOL: f64 = 1e-12;
/// Tolerance for the numerical confirmation of an identification.
pub const IDENTIFY_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProtoRepr {
    /// Tensor-product B-spline; knots in chart coordinates.
    Tensor { knots: Vec<LocalKnotVector> },
    /// `(1 - r_1)^p ... (1 - r_d)^p` in the reference coordinates of every
    /// segment.
    Vertex,
    /// Two-dimensional vertex profile times a B-spline along the edge axis.
    Edge { axis: LocalKnotVector },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProtoBasisFunction {
    pub chart: ChartId,
    pub local: usize,
    pub degree: usize,
    pub repr: ProtoRepr,
}

/// Replacement knot vectors for one tensor proto-basis function.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtoOverride {
    pub chart: ChartId,
    pub local: usize,
    pub knots: Vec<Vec<f64>>,
}

/// Per-axis affine frame `u = lo + len * r` of a chart element in which the
/// proto-basis functions of the chart are written.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementFrame {
    pub lo: Point,
    pub len: Point,
}

impl ElementFrame {
    pub fn of(chart: &Chart, element: usize, dim: usize) -> Self {
        let cell = &chart.mesh.cells[element];
        let mut lo = [0.0; MAX_DIM];
        let mut len = [1.0; MAX_DIM];
        match &chart.kind {
            ChartKind::Structured { .. } => {
                let hi = cell.corners[corner_count(dim) - 1];
                for a in 0..dim {
                    lo[a] = cell.corners[0][a];
                    len[a] = hi[a] - lo[a];
                }
            }
            ChartKind::UnstructuredEdge3D { .. } => {
                lo[2] = cell.corners[0][2];
                len[2] = cell.corners[4][2] - lo[2];
            }
            _ => {}
        }
        Self { lo, len }
    }

    pub fn to_frame(&self, r: &Point) -> Point {
        let mut u = [0.0; MAX_DIM];
        for a in 0..MAX_DIM {
            u[a] = self.lo[a] + self.len[a] * r[a];
        }
        u
    }

    pub fn to_ref(&self, u: &Point) -> Point {
        let mut r = [0.0; MAX_DIM];
        for a in 0..MAX_DIM {
            r[a] = (u[a] - self.lo[a]) / self.len[a];
        }
        r
    }

    pub fn midpoint(&self) -> Point {
        self.to_frame(&[0.5; MAX_DIM])
    }
}

fn ref_knots(p: usize) -> Vec<f64> {
    let mut k = vec![0.0; p + 1];
    k.push(1.0);
    k
}

/// Windows of `line` of length `p + 2` as `(first index, knots)`.
fn windows(line: &[f64], p: usize) -> Vec<Vec<f64>> {
    if line.len() < p + 2 {
        return Vec::new();
    }
    line.windows(p + 2)
        .filter(|w| w[0] < w[p + 1])
        .map(|w| w.to_vec())
        .collect()
}

/// Whether the trace of `knots` at the `side` end of `[lo, hi]` is nonzero.
fn touches(knots: &[f64], side: usize, lo: f64, hi: f64) -> bool {
    let p = knots.len() - 2;
    if side == 0 {
        knots[..=p].iter().all(|&k| k == lo)
    } else {
        knots[1..].iter().all(|&k| k == hi)
    }
}

impl ProtoBasisFunction {
    /// Per-axis knot vectors on `element` in its [`ElementFrame`].
    pub fn frame_knots(&self, dim: usize) -> Vec<Vec<f64>> {
        let p = self.degree;
        match &self.repr {
            ProtoRepr::Tensor { knots } => knots.iter().map(|k| k.knots().to_vec()).collect(),
            ProtoRepr::Vertex => vec![ref_knots(p); dim],
            ProtoRepr::Edge { axis } => vec![ref_knots(p), ref_knots(p), axis.knots().to_vec()],
        }
    }

    /// Chart elements where the function does not vanish identically.
    pub fn support(&self, chart: &Chart, dim: usize) -> Vec<usize> {
        // element index range [first, last) of `knots` on a breakpoint line
        let range = |line: &[f64], knots: &[f64]| {
            let first = line.partition_point(|&b| b < knots[0]);
            let last = line.partition_point(|&b| b < knots[knots.len() - 1]);
            (first, last)
        };
        match (&self.repr, &chart.kind) {
            (ProtoRepr::Vertex, _) => (0..chart.element_count()).collect(),
            (ProtoRepr::Tensor { knots }, ChartKind::Structured { knots: lines }) => {
                let ranges: Vec<(usize, usize)> =
                    (0..dim).map(|a| range(&breakpoints(&lines[a]), knots[a].knots())).collect();
                let grid: Vec<usize> = lines.iter().map(|l| breakpoints(l).len() - 1).collect();
                let count: usize = ranges.iter().map(|(f, l)| l - f).product();
                (0..count)
                    .map(|lin| {
                        let (mut rem, mut e, mut stride) = (lin, 0, 1);
                        for a in 0..dim {
                            let n = ranges[a].1 - ranges[a].0;
                            e += (ranges[a].0 + rem % n) * stride;
                            rem /= n;
                            stride *= grid[a];
                        }
                        e
                    })
                    .collect()
            }
            (ProtoRepr::Edge { axis }, ChartKind::UnstructuredEdge3D { axis_knots, section }) => {
                let k = section.len();
                let (first, last) = range(&breakpoints(axis_knots), axis.knots());
                (first..last).flat_map(|m| (0..k).map(move |l| l + k * m)).collect()
            }
            _ => Vec::new(),
        }
    }

    /// Value and reference-coordinate gradient on `element` at reference
    /// point `r`. Zero outside the support.
    pub fn eval_element(&self, chart: &Chart, element: usize, r: &Point, dim: usize) -> (f64, Point) {
        let frame = ElementFrame::of(chart, element, dim);
        let knots = self.frame_knots(dim);
        let mid = frame.midpoint();
        let u = frame.to_frame(r);
        let mut vals = [[0.0; 2]; MAX_DIM];
        for a in 0..dim {
            let k = &knots[a];
            if mid[a] < k[0] || mid[a] >= k[k.len() - 1] {
                return (0.0, [0.0; MAX_DIM]);
            }
            let v = eval_piece1(k, mid[a], u[a]);
            vals[a] = [v[0], v[1] * frame.len[a]];
        }
        product_with_gradient(&vals, dim)
    }
}

fn product_with_gradient(vals: &[[f64; 2]; MAX_DIM], dim: usize) -> (f64, Point) {
    let mut value = 1.0;
    for v in vals.iter().take(dim) {
        value *= v[0];
    }
    let mut grad = [0.0; MAX_DIM];
    for (a, g) in grad.iter_mut().enumerate().take(dim) {
        let mut d = vals[a][1];
        for (b, v) in vals.iter().enumerate().take(dim) {
            if b != a {
                d *= v[0];
            }
        }
        *g = d;
    }
    (value, grad)
}

/// Value of a proto-basis function at chart coordinates `zeta`; zero
/// outside the chart.
pub fn eval_proto(f: &ProtoBasisFunction, chart: &Chart, zeta: &Point, dim: usize) -> f64 {
    match chart.mesh.locate(zeta) {
        Some((e, r)) => f.eval_element(chart, e, &r, dim).0,
        None => 0.0,
    }
}

/// Default proto-basis of a chart: for structured charts every window of
/// the knot lines whose nonzero boundary traces lie in the retained
/// boundary; one vertex function per ring chart; profile times windows
/// vanishing at the axis ends (unless retained) for edge charts.
pub fn proto_basis(chart: &Chart, p: usize, dim: usize) -> Result<Vec<ProtoBasisFunction>, BasisError> {
    let gamma: BTreeSet<(usize, usize)> = chart.gamma.iter().copied().collect();
    let mut out = Vec::new();
    let push = |repr: ProtoRepr, out: &mut Vec<ProtoBasisFunction>| {
        let local = out.len();
        out.push(ProtoBasisFunction {
            chart: chart.id,
            local,
            degree: p,
            repr,
        });
    };
    match &chart.kind {
        ChartKind::Structured { knots } => {
            let per_axis: Vec<Vec<Vec<f64>>> = knots.iter().map(|k| windows(k, p)).collect();
            let bounds: Vec<(f64, f64)> = knots.iter().map(|k| (k[0], k[k.len() - 1])).collect();
            let grid = chart.mesh.grid.clone().expect("structured chart has a grid");
            let bps: Vec<Vec<f64>> = knots.iter().map(|k| breakpoints(k)).collect();
            let counts: Vec<usize> = per_axis.iter().map(Vec::len).collect();
            let total: usize = counts.iter().product();
            for lin in 0..total {
                let mut rem = lin;
                let mut ks = Vec::with_capacity(dim);
                for a in 0..dim {
                    ks.push(per_axis[a][rem % counts[a]].clone());
                    rem /= counts[a];
                }
                if trace_retained(&ks, &bounds, &bps, &grid, &gamma, dim) {
                    let knots = ks
                        .into_iter()
                        .map(LocalKnotVector::new)
                        .collect::<Result<Vec<_>, _>>()?;
                    push(ProtoRepr::Tensor { knots }, &mut out);
                }
            }
        }
        ChartKind::UnstructuredVertex2D { .. }
        | ChartKind::UnstructuredVertex3D { .. }
        | ChartKind::Boundary2D { .. } => push(ProtoRepr::Vertex, &mut out),
        ChartKind::UnstructuredEdge3D { axis_knots, section } => {
            let (lo, hi) = (axis_knots[0], axis_knots[axis_knots.len() - 1]);
            let k = section.len();
            let nz = breakpoints(axis_knots).len() - 1;
            for w in windows(axis_knots, p) {
                let ok = (0..2).all(|side| {
                    !touches(&w, side, lo, hi)
                        || (0..k).all(|l| {
                            let m = if side == 0 { 0 } else { nz - 1 };
                            gamma.contains(&(l + k * m, 4 + side))
                        })
                });
                if ok {
                    push(
                        ProtoRepr::Edge {
                            axis: LocalKnotVector::new(w)?,
                        },
                        &mut out,
                    );
                }
            }
        }
    }
    Ok(out)
}

fn trace_retained(
    ks: &[Vec<f64>],
    bounds: &[(f64, f64)],
    bps: &[Vec<f64>],
    grid: &[usize],
    gamma: &BTreeSet<(usize, usize)>,
    dim: usize,
) -> bool {
    // element index ranges of the support per axis
    let ranges: Vec<(usize, usize)> = (0..dim)
        .map(|a| {
            let k = &ks[a];
            let first = bps[a].iter().position(|&b| b == k[0]).unwrap();
            let last = bps[a].iter().position(|&b| b == k[k.len() - 1]).unwrap();
            (first, last)
        })
        .collect();
    for a in 0..dim {
        for side in 0..2 {
            if !touches(&ks[a], side, bounds[a].0, bounds[a].1) {
                continue;
            }
            // every element face of the support on this side must be retained
            let mut idx = vec![0usize; dim];
            let mut stack = vec![];
            let layer = if side == 0 { 0 } else { grid[a] - 1 };
            let count: usize = (0..dim)
                .filter(|&b| b != a)
                .map(|b| ranges[b].1 - ranges[b].0)
                .product();
            for lin in 0..count {
                let mut rem = lin;
                for b in 0..dim {
                    if b == a {
                        idx[b] = layer;
                    } else {
                        let n = ranges[b].1 - ranges[b].0;
                        idx[b] = ranges[b].0 + rem % n;
                        rem /= n;
                    }
                }
                let mut e = 0;
                let mut stride = 1;
                for b in 0..dim {
                    e += idx[b] * stride;
                    stride *= grid[b];
                }
                stack.push(e);
            }
            if !stack.iter().all(|&e| gamma.contains(&(e, 2 * a + side))) {
                return false;
            }
        }
    }
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionClass {
    Structured,
    Edge,
    Vertex,
}

impl FunctionClass {
    pub fn name(&self) -> &'static str {
        match self {
            FunctionClass::Structured => "A_s",
            FunctionClass::Edge => "A_e",
            FunctionClass::Vertex => "A_v",
        }
    }
}

/// Metric frame of an element orbit: its first structured instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricFrame {
    pub instance: Instance,
    pub frame: ElementFrame,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalFunction {
    /// Proto-basis instances `(chart, local index)`, sorted.
    pub instances: Vec<(ChartId, usize)>,
    pub class: FunctionClass,
    /// Support element orbits, sorted.
    pub support: Vec<usize>,
    /// Per support orbit, per metric axis knots.
    pub pieces: Vec<Vec<Vec<f64>>>,
}

impl GlobalFunction {
    pub fn piece(&self, orbit: usize) -> Option<&[Vec<f64>]> {
        self.support.binary_search(&orbit).ok().map(|i| self.pieces[i].as_slice())
    }
}

#[derive(Clone, Debug)]
pub struct SplineSpace {
    pub manifold: ParameterManifold,
    pub degree: usize,
    pub protos: Vec<Vec<ProtoBasisFunction>>,
    pub functions: Vec<GlobalFunction>,
    /// `A_i`: global functions with an instance on chart `i`.
    pub chart_sets: Vec<Vec<usize>>,
    /// `Ã_i`: global functions whose support meets the support of some
    /// function in `A_i`.
    pub extended_sets: Vec<Vec<usize>>,
    /// Functions alive on each element orbit.
    pub alive: Vec<Vec<usize>>,
    pub metric: Vec<MetricFrame>,
}

/// Maps per-axis knots written in the frame of instance `from` to the frame
/// of instance `to` of the same element orbit.
pub fn transfer_knots(
    knots: &[Vec<f64>],
    from: (&Instance, &ElementFrame),
    to: (&Instance, &ElementFrame),
    manifold: &ParameterManifold,
) -> Vec<Vec<f64>> {
    let dim = manifold.dim();
    let o = manifold.relative_orientation(from.0, to.0);
    let (fs, ts) = (from.1, to.1);
    let mut out = vec![Vec::new(); dim];
    for a in 0..dim {
        let b = o.perm[a] as usize;
        // u_from = alpha * u_to + beta
        let ratio = fs.len[a] / ts.len[b];
        let (alpha, beta) = if o.flip[a] {
            (-ratio, fs.lo[a] + fs.len[a] + ratio * ts.lo[b])
        } else {
            (ratio, fs.lo[a] - ratio * ts.lo[b])
        };
        out[b] = reparametrize(&knots[a], alpha, beta);
    }
    out
}

/// Maps a point from the frame of one instance to the frame of another.
pub fn transfer_point(
    u: &Point,
    from: (&Instance, &ElementFrame),
    to: (&Instance, &ElementFrame),
    manifold: &ParameterManifold,
) -> Point {
    let o = manifold.relative_orientation(from.0, to.0);
    let r = from.1.to_ref(u);
    let mut r = o.apply(&r);
    for v in r.iter_mut().skip(manifold.dim()) {
        *v = 0.0;
    }
    to.1.to_frame(&r)
}

fn knots_close(a: &[Vec<f64>], b: &[Vec<f64>]) -> bool {
    a.iter()
        .zip(b)
        .all(|(x, y)| x.len() == y.len() && x.iter().zip(y).all(|(u, v)| (u - v).abs() <= KNOT_TOL))
}

/// Reference sample points used to confirm identifications.
fn sample_refs(dim: usize) -> Vec<Point> {
    let ts = [0.1, 0.5, 0.85];
    let n = ts.len().pow(dim as u32);
    (0..n)
        .map(|lin| {
            let mut r = [0.0; MAX_DIM];
            let mut rem = lin;
            for v in r.iter_mut().take(dim) {
                *v = ts[rem % ts.len()];
                rem /= ts.len();
            }
            r
        })
        .collect()
}

impl SplineSpace {
    /// Assembles the space from the default proto-bases.
    pub fn assemble(manifold: ParameterManifold, degree: usize) -> Result<Self, BasisError> {
        Self::assemble_with(manifold, degree, &[])
    }

    /// Assembles the space after replacing selected tensor proto-basis
    /// functions.
    pub fn assemble_with(
        manifold: ParameterManifold,
        degree: usize,
        overrides: &[ProtoOverride],
    ) -> Result<Self, BasisError> {
        let dim = manifold.dim();
        let mut protos = Vec::with_capacity(manifold.proto.charts.len());
        for chart in &manifold.proto.charts {
            protos.push(proto_basis(chart, degree, dim)?);
        }
        for ov in overrides {
            let f = protos
                .get_mut(ov.chart.0)
                .and_then(|v| v.get_mut(ov.local))
                .ok_or_else(|| BasisError::Assembly(format!("override targets missing function {} on chart {}", ov.local, ov.chart)))?;
            if !matches!(f.repr, ProtoRepr::Tensor { .. }) || ov.knots.len() != dim {
                return Err(BasisError::Assembly(format!(
                    "override of function {} on chart {} needs {dim} tensor knot vectors",
                    ov.local, ov.chart
                )));
            }
            let knots = ov
                .knots
                .iter()
                .map(|k| LocalKnotVector::new(k.clone()))
                .collect::<Result<Vec<_>, _>>()?;
            if knots.iter().any(|k| k.degree() != degree) {
                return Err(BasisError::Assembly("override knot vectors have the wrong degree".into()));
            }
            f.repr = ProtoRepr::Tensor { knots };
        }
        Self::assemble_protos(manifold, degree, protos)
    }

    pub fn assemble_protos(
        manifold: ParameterManifold,
        degree: usize,
        protos: Vec<Vec<ProtoBasisFunction>>,
    ) -> Result<Self, BasisError> {
        let dim = manifold.dim();
        let charts = &manifold.proto.charts;
        let metric = (0..manifold.orbits.len())
            .map(|o| {
                let inst = manifold.orbits[o]
                    .members
                    .iter()
                    .find(|m| charts[m.element.chart.0].kind.is_structured())
                    .ok_or_else(|| {
                        BasisError::Assembly(format!("element orbit {o} lies in no structured chart"))
                    })?;
                Ok(MetricFrame {
                    instance: *inst,
                    frame: ElementFrame::of(&charts[inst.element.chart.0], inst.element.element, dim),
                })
            })
            .collect::<Result<Vec<_>, BasisError>>()?;

        // restrictions of every proto function in metric frames
        struct Candidate {
            id: (ChartId, usize),
            support: Vec<usize>,
            pieces: Vec<Vec<Vec<f64>>>,
        }
        let mut candidates = Vec::new();
        for (c, list) in protos.iter().enumerate() {
            let chart = &charts[c];
            for f in list {
                let own = f.frame_knots(dim);
                let mut by_orbit: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
                for e in f.support(chart, dim) {
                    let er = ElementRef {
                        chart: ChartId(c),
                        element: e,
                    };
                    let o = manifold.orbit_of(er);
                    let inst = manifold.instance(er);
                    let frame = ElementFrame::of(chart, e, dim);
                    let m = &metric[o];
                    let k = transfer_knots(&own, (inst, &frame), (&m.instance, &m.frame), &manifold);
                    by_orbit.insert(o, k);
                }
                candidates.push(Candidate {
                    id: (ChartId(c), f.local),
                    support: by_orbit.keys().copied().collect(),
                    pieces: by_orbit.into_values().collect(),
                });
            }
        }

        // identification: same support orbits and matching pieces
        let mut groups: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
        for (n, cand) in candidates.iter().enumerate() {
            groups.entry(cand.support.clone()).or_default().push(n);
        }
        let mut owner: Vec<usize> = (0..candidates.len()).collect();
        for members in groups.values() {
            for (i, &a) in members.iter().enumerate() {
                if owner[a] != a {
                    continue;
                }
                for &b in &members[i + 1..] {
                    if owner[b] == b && candidates[a].pieces.iter().zip(&candidates[b].pieces).all(|(x, y)| knots_close(x, y)) {
                        owner[b] = a;
                    }
                }
            }
        }
        let refs = sample_refs(dim);
        let mut functions: Vec<GlobalFunction> = Vec::new();
        let mut index_of: BTreeMap<usize, usize> = BTreeMap::new();
        for n in 0..candidates.len() {
            let root = owner[n];
            match index_of.get(&root) {
                Some(&g) => {
                    functions[g].instances.push(candidates[n].id);
                }
                None => {
                    index_of.insert(root, functions.len());
                    functions.push(GlobalFunction {
                        instances: vec![candidates[n].id],
                        class: FunctionClass::Vertex,
                        support: candidates[n].support.clone(),
                        pieces: candidates[n].pieces.clone(),
                    });
                }
            }
        }
        for g in &mut functions {
            g.instances.sort();
            let kinds: Vec<&ChartKind> = g.instances.iter().map(|(c, _)| &charts[c.0].kind).collect();
            g.class = if kinds.iter().any(|k| k.is_structured()) {
                FunctionClass::Structured
            } else if kinds.iter().any(|k| matches!(k, ChartKind::UnstructuredEdge3D { .. })) {
                FunctionClass::Edge
            } else {
                FunctionClass::Vertex
            };
        }

        let mut space = Self {
            manifold,
            degree,
            protos,
            functions,
            chart_sets: Vec::new(),
            extended_sets: Vec::new(),
            alive: Vec::new(),
            metric,
        };
        space.confirm_identifications(&refs)?;
        space.rebuild_index();
        Ok(space)
    }

    /// Recomputes `A_i`, `Ã_i` and the alive lists from `functions`.
    pub fn rebuild_index(&mut self) {
        let nc = self.manifold.proto.charts.len();
        let mut alive = vec![Vec::new(); self.manifold.orbits.len()];
        for (g, f) in self.functions.iter().enumerate() {
            for &o in &f.support {
                alive[o].push(g);
            }
        }
        let mut chart_sets = vec![Vec::new(); nc];
        for (g, f) in self.functions.iter().enumerate() {
            for (c, _) in &f.instances {
                if chart_sets[c.0].last() != Some(&g) {
                    chart_sets[c.0].push(g);
                }
            }
        }
        let extended_sets = chart_sets
            .iter()
            .map(|set: &Vec<usize>| {
                let mut ext = BTreeSet::new();
                for &g in set {
                    for &o in &self.functions[g].support {
                        ext.extend(alive[o].iter().copied());
                    }
                }
                ext.into_iter().collect()
            })
            .collect();
        self.alive = alive;
        self.chart_sets = chart_sets;
        self.extended_sets = extended_sets;
    }

    /// Evaluates every instance of every identified function at shared
    /// samples; disagreement means inconsistent proto-bases.
    fn confirm_identifications(&self, refs: &[Point]) -> Result<(), BasisError> {
        let dim = self.dim();
        let charts = &self.manifold.proto.charts;
        for (g, f) in self.functions.iter().enumerate() {
            if f.instances.len() < 2 {
                continue;
            }
            for &(c, local) in &f.instances {
                let chart = &charts[c.0];
                let proto = &self.protos[c.0][local];
                let knots = proto.frame_knots(dim);
                for (k, &o) in f.support.iter().enumerate() {
                    let Some(inst) = self.manifold.orbits[o].instance_on(c) else {
                        return Err(BasisError::Assembly(format!(
                            "function {g} instance on chart {c} misses support orbit {o}"
                        )));
                    };
                    let m = &self.metric[o];
                    let frame = ElementFrame::of(chart, inst.element.element, dim);
                    let mid = frame.midpoint();
                    for r in refs {
                        let x = m.frame.to_frame(r);
                        let expect = self.eval_piece(&f.pieces[k], o, &x, 0).0;
                        let u = transfer_point(&x, (&m.instance, &m.frame), (inst, &frame), &self.manifold);
                        let v: f64 = (0..dim).map(|a| eval_piece1(&knots[a], mid[a], u[a])[0]).product();
                        if (v - expect).abs() > IDENTIFY_TOL {
                            return Err(BasisError::Assembly(format!(
                                "function {g}: instance on chart {c} differs by {:e} on element orbit {o}",
                                (v - expect).abs()
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.manifold.dim()
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn class_counts(&self) -> BTreeMap<FunctionClass, usize> {
        let mut out = BTreeMap::new();
        for f in &self.functions {
            *out.entry(f.class).or_insert(0) += 1;
        }
        out
    }

    /// Value and metric gradient of one piece at metric coordinates `x`.
    pub fn eval_piece(&self, knots: &[Vec<f64>], orbit: usize, x: &Point, order: usize) -> (f64, Point) {
        let dim = self.dim();
        let mid = self.metric[orbit].frame.midpoint();
        let mut vals = [[0.0; 2]; MAX_DIM];
        for a in 0..dim {
            let v = eval_piece1(&knots[a], mid[a], x[a]);
            vals[a] = [v[0], if order > 0 { v[1] } else { 0.0 }];
        }
        product_with_gradient(&vals, dim)
    }

    /// Value and metric gradient of `B_A` at metric coordinates `x` of
    /// element orbit `orbit`.
    pub fn eval(&self, a: usize, orbit: usize, x: &Point) -> (f64, Point) {
        match self.functions[a].piece(orbit) {
            Some(k) => self.eval_piece(k, orbit, x, 1),
            None => (0.0, [0.0; MAX_DIM]),
        }
    }

    /// `Σ c_A B_A` and its metric gradient.
    pub fn eval_combination(&self, coeffs: &[f64], orbit: usize, x: &Point) -> (f64, Point) {
        let mut v = 0.0;
        let mut g = [0.0; MAX_DIM];
        for &a in &self.alive[orbit] {
            if coeffs[a] == 0.0 {
                continue;
            }
            let (fv, fg) = self.eval(a, orbit, x);
            v += coeffs[a] * fv;
            for k in 0..MAX_DIM {
                g[k] += coeffs[a] * fg[k];
            }
        }
        (v, g)
    }

    /// Per-axis knot vectors of `B_A` on `element` of a chart, in that
    /// element's frame. `None` when the element is outside the support.
    pub fn restriction_on(&self, a: usize, element: ElementRef) -> Option<Vec<Vec<f64>>> {
        let o = self.manifold.orbit_of(element);
        let piece = self.functions[a].piece(o)?;
        let inst = self.manifold.instance(element);
        let chart = self.manifold.proto.chart(element.chart);
        let frame = ElementFrame::of(chart, element.element, self.dim());
        let m = &self.metric[o];
        Some(transfer_knots(piece, (&m.instance, &m.frame), (inst, &frame), &self.manifold))
    }

    /// Per-axis local knot vectors reproducing an unstructured vertex
    /// function on an element of a structured chart.
    pub fn extraordinary_restriction_knots(
        &self,
        a: usize,
        chart: ChartId,
        element: usize,
    ) -> Result<Vec<LocalKnotVector>, BasisError> {
        if self.functions[a].class != FunctionClass::Vertex {
            return Err(BasisError::Domain(format!("function {a} is not an unstructured vertex function")));
        }
        if !self.manifold.proto.chart(chart).kind.is_structured() {
            return Err(BasisError::Domain(format!("chart {chart} is not structured")));
        }
        let er = ElementRef { chart, element };
        if element >= self.manifold.proto.chart(chart).element_count() {
            return Err(BasisError::Domain(format!("chart {chart} has no element {element}")));
        }
        let knots = self
            .restriction_on(a, er)
            .ok_or_else(|| BasisError::Domain(format!("element {element} of chart {chart} is outside the support")))?;
        knots.into_iter().map(LocalKnotVector::new).collect()
    }

    /// The global function owning proto-basis function `local` of `chart`.
    pub fn global_of(&self, chart: ChartId, local: usize) -> Option<usize> {
        self.chart_sets
            .get(chart.0)?
            .iter()
            .copied()
            .find(|&g| self.functions[g].instances.contains(&(chart, local)))
    }

    /// Appends a copy of function `a` as an independent index.
    pub fn with_duplicate(mut self, a: usize) -> Self {
        let copy = self.functions[a].clone();
        self.functions.push(copy);
        self.rebuild_index();
        self
    }

    /// Relative orientation helper re-exported for downstream modules.
    pub fn orientation(&self, from: &Instance, to: &Instance) -> Orientation {
        self.manifold.relative_orientation(from, to)
    }
}
