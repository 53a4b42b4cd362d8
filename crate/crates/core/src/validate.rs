//! Sampled validation of proto-manifolds.

use std::collections::{BTreeSet, HashMap, HashSet};

use petgraph::unionfind::UnionFind;
use rand::{RngExt, SeedableRng};
use serde::Serialize;

use crate::atlas::{face_corners, ChartId, ChartKind, ProtoManifold, TransitionMap};
use crate::error::AtlasError;
use crate::geom::{corner_count, max_abs_diff, CellMap, Point, GEOM_TOL, MAX_DIM};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Inverse,
    Cocycle,
    ElementCompatibility,
    ChartKind,
    NoBifurcation,
}

impl CheckKind {
    pub const ALL: [CheckKind; 5] = [
        CheckKind::Inverse,
        CheckKind::Cocycle,
        CheckKind::ElementCompatibility,
        CheckKind::ChartKind,
        CheckKind::NoBifurcation,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CheckKind::Inverse => "inverse",
            CheckKind::Cocycle => "cocycle",
            CheckKind::ElementCompatibility => "element-compatibility",
            CheckKind::ChartKind => "chart-kind",
            CheckKind::NoBifurcation => "no-bifurcation",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Failure {
    /// Chart indices involved: `(i, j)` or `(i, j, k)`.
    pub charts: Vec<usize>,
    /// Offending sample point in the coordinates of the first chart.
    pub point: Option<[f64; MAX_DIM]>,
    pub residual: Option<f64>,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub kind: CheckKind,
    pub passed: bool,
    pub samples: usize,
    pub failures: Vec<Failure>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, kind: CheckKind) -> &CheckResult {
        self.checks
            .iter()
            .find(|c| c.kind == kind)
            .expect("every check kind is reported")
    }

    pub fn failed(&self, kind: CheckKind) -> bool {
        !self.check(kind).passed
    }
}

#[derive(Clone, Debug)]
pub struct ValidationOptions {
    pub samples_per_axis: usize,
    /// Extra uniformly random reference points per element.
    pub random_samples: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            samples_per_axis: 3,
            random_samples: 0,
            seed: 0,
            tol: GEOM_TOL,
        }
    }
}

struct Recorder {
    kind: CheckKind,
    samples: usize,
    failures: Vec<Failure>,
}

impl Recorder {
    fn new(kind: CheckKind) -> Self {
        Self {
            kind,
            samples: 0,
            failures: Vec::new(),
        }
    }

    fn fail(&mut self, charts: Vec<usize>, point: Option<Point>, residual: Option<f64>, message: String) {
        self.failures.push(Failure {
            charts,
            point,
            residual,
            message,
        });
    }

    fn finish(self) -> CheckResult {
        CheckResult {
            kind: self.kind,
            passed: self.failures.is_empty(),
            samples: self.samples,
            failures: self.failures,
        }
    }
}

/// Runs all checks. Structural problems abort with an error; check failures
/// are collected in the report.
pub fn validate_proto_manifold(
    proto: &ProtoManifold,
    opts: &ValidationOptions,
) -> Result<ValidationReport, AtlasError> {
    proto.check_structure()?;
    let mut refs = proto.sample_grid(opts.samples_per_axis);
    if opts.random_samples > 0 {
        let mut rng = rand::rngs::StdRng::seed_from_u64(opts.seed);
        for _ in 0..opts.random_samples {
            let mut r = [0.0; MAX_DIM];
            for v in r.iter_mut().take(proto.dim) {
                *v = rng.random::<f64>();
            }
            refs.push(r);
        }
    }
    let lookup: HashMap<(ChartId, ChartId), &TransitionMap> = proto
        .transitions
        .iter()
        .map(|t| ((t.source, t.target), t))
        .collect();
    let pair_index: HashMap<(ChartId, ChartId), HashMap<usize, usize>> = proto
        .transitions
        .iter()
        .map(|t| {
            let m = t.pairs.iter().enumerate().map(|(n, p)| (p.source, n)).collect();
            ((t.source, t.target), m)
        })
        .collect();
    let ctx = Ctx {
        proto,
        refs,
        lookup,
        pair_index,
        tol: opts.tol,
    };
    let topo = Topology::new(proto);
    Ok(ValidationReport {
        checks: vec![
            ctx.inverse(),
            ctx.cocycle(),
            ctx.element_compatibility(),
            ctx.chart_kind(&topo),
            topo.no_bifurcation(proto),
        ],
    })
}

struct Ctx<'a> {
    proto: &'a ProtoManifold,
    refs: Vec<Point>,
    lookup: HashMap<(ChartId, ChartId), &'a TransitionMap>,
    pair_index: HashMap<(ChartId, ChartId), HashMap<usize, usize>>,
    tol: f64,
}

impl Ctx<'_> {
    fn pair(&self, s: ChartId, t: ChartId, element: usize) -> Option<(&TransitionMap, usize)> {
        let tm = self.lookup.get(&(s, t))?;
        let n = *self.pair_index[&(s, t)].get(&element)?;
        Some((tm, n))
    }

    /// Image of reference point `r` of `element` in chart `s`, as a
    /// target element and reference point. Transitions act on reference
    /// coordinates through the stored orientations, so no cell map has to
    /// be inverted.
    fn map_ref(&self, s: ChartId, t: ChartId, element: usize, r: &Point) -> Option<(usize, Point)> {
        let (tm, n) = self.pair(s, t, element)?;
        let p = &tm.pairs[n];
        Some((p.target, p.orient.apply(r)))
    }

    fn at(&self, c: ChartId, element: usize, r: &Point) -> Point {
        self.proto.chart(c).mesh.cells[element].eval(r)
    }

    fn inverse(&self) -> CheckResult {
        let mut rec = Recorder::new(CheckKind::Inverse);
        for t in &self.proto.transitions {
            let (i, j) = (t.source, t.target);
            if !self.lookup.contains_key(&(j, i)) {
                rec.fail(
                    vec![i.0, j.0],
                    None,
                    None,
                    format!("transition {i} -> {j} has no stored inverse"),
                );
                continue;
            }
            let src = &self.proto.chart(i).mesh.cells;
            for p in &t.pairs {
                for r in &self.refs {
                    rec.samples += 1;
                    let x = src[p.source].eval(r);
                    let ry = p.orient.apply(r);
                    match self.map_ref(j, i, p.target, &ry) {
                        None => rec.fail(
                            vec![i.0, j.0],
                            Some(x),
                            None,
                            format!("image of element {} is outside the domain of psi_{j},{i}", p.source),
                        ),
                        Some((e, rz)) => {
                            let z = self.at(i, e, &rz);
                            let res = max_abs_diff(&z, &x);
                            if res > self.tol {
                                rec.fail(
                                    vec![i.0, j.0],
                                    Some(x),
                                    Some(res),
                                    format!("round trip through chart {j} misses by {res:e}"),
                                );
                            }
                        }
                    }
                }
            }
        }
        rec.finish()
    }

    fn cocycle(&self) -> CheckResult {
        let mut rec = Recorder::new(CheckKind::Cocycle);
        let mut by_source: HashMap<ChartId, Vec<&TransitionMap>> = HashMap::new();
        for t in &self.proto.transitions {
            by_source.entry(t.source).or_default().push(t);
        }
        for tij in &self.proto.transitions {
            let (i, j) = (tij.source, tij.target);
            let Some(from_i) = by_source.get(&i) else { continue };
            for tik in from_i {
                let k = tik.target;
                if k == j {
                    continue;
                }
                let cells = &self.proto.chart(i).mesh.cells;
                for p in &tij.pairs {
                    let via = self.pair(j, k, p.target).is_some();
                    let direct = self.pair(i, k, p.source).is_some();
                    match (via, direct) {
                        (false, false) => continue,
                        (true, false) | (false, true) => {
                            let x = cells[p.source].centroid();
                            rec.samples += 1;
                            rec.fail(
                                vec![i.0, j.0, k.0],
                                Some(x),
                                None,
                                format!(
                                    "element {} of chart {i}: {}",
                                    p.source,
                                    if via {
                                        format!("reaches chart {k} through {j} but not directly")
                                    } else {
                                        format!("lies in the domain of psi_{i},{k} but its image is outside psi_{j},{k}")
                                    }
                                ),
                            );
                        }
                        (true, true) => {
                            for r in &self.refs {
                                rec.samples += 1;
                                let x = cells[p.source].eval(r);
                                let (ea, ra) = self.map_ref(j, k, p.target, &p.orient.apply(r)).expect("pair exists");
                                let (eb, rb) = self.map_ref(i, k, p.source, r).expect("pair exists");
                                let (a, b) = (self.at(k, ea, &ra), self.at(k, eb, &rb));
                                let res = max_abs_diff(&a, &b);
                                if res > self.tol {
                                    rec.fail(
                                        vec![i.0, j.0, k.0],
                                        Some(x),
                                        Some(res),
                                        format!("psi_{j},{k} o psi_{i},{j} differs from psi_{i},{k} by {res:e}"),
                                    );
                                }
                            }
                        }
                    }
                }
            }
        }
        rec.finish()
    }

    /// Pieces of a transition must agree on shared source vertices and map
    /// distinct elements to distinct elements.
    fn element_compatibility(&self) -> CheckResult {
        let mut rec = Recorder::new(CheckKind::ElementCompatibility);
        for t in &self.proto.transitions {
            let sc = self.proto.chart(t.source);
            let tc = self.proto.chart(t.target);
            let mut images: HashMap<usize, (usize, Point)> = HashMap::new();
            let mut targets = HashSet::new();
            for p in &t.pairs {
                if !targets.insert(p.target) {
                    rec.fail(
                        vec![t.source.0, t.target.0],
                        None,
                        None,
                        format!("target element {} is hit twice", p.target),
                    );
                }
                for (c, &v) in sc.mesh.elements[p.source].iter().enumerate() {
                    rec.samples += 1;
                    let tv = tc.mesh.elements[p.target][p.orient.apply_corner(c)];
                    let img = tc.mesh.vertices[tv];
                    match images.get(&v) {
                        None => {
                            images.insert(v, (p.source, img));
                        }
                        Some(&(other, prev)) => {
                            let res = max_abs_diff(&prev, &img);
                            if res > self.tol {
                                rec.fail(
                                    vec![t.source.0, t.target.0],
                                    Some(sc.mesh.vertices[v]),
                                    Some(res),
                                    format!(
                                        "elements {other} and {} share a vertex whose images differ",
                                        p.source
                                    ),
                                );
                            }
                        }
                    }
                }
            }
        }
        rec.finish()
    }

    fn chart_kind(&self, topo: &Topology) -> CheckResult {
        let mut rec = Recorder::new(CheckKind::ChartKind);
        let proto = self.proto;
        let dim = proto.dim;

        for c in &proto.charts {
            for (e, cell) in c.mesh.cells.iter().enumerate() {
                for corner in 0..corner_count(dim) {
                    rec.samples += 1;
                    let r = crate::geom::corner_position(corner, dim);
                    if cell.det_jacobian(&r) <= 0.0 {
                        rec.fail(
                            vec![c.id.0],
                            Some(cell.corners[corner]),
                            None,
                            format!("element {e} is not positively oriented at corner {corner}"),
                        );
                    }
                }
            }
            if let Some(center) = c.center() {
                let ring = match &c.kind {
                    ChartKind::UnstructuredEdge3D { section, .. } => section,
                    ChartKind::UnstructuredVertex2D { segments }
                    | ChartKind::UnstructuredVertex3D { segments }
                    | ChartKind::Boundary2D { segments } => segments,
                    ChartKind::Structured { .. } => unreachable!(),
                };
                for (l, seg) in ring.iter().enumerate() {
                    if max_abs_diff(&seg[0], &center) > self.tol {
                        rec.fail(
                            vec![c.id.0],
                            Some(seg[0]),
                            None,
                            format!("segment {l} does not start at the chart's special vertex"),
                        );
                    }
                }
            }
        }

        // structured-structured transitions are affine per component
        for t in &proto.transitions {
            let sc = proto.chart(t.source);
            let tc = proto.chart(t.target);
            if !(sc.kind.is_structured() && tc.kind.is_structured()) {
                continue;
            }
            let comps = components(sc, t);
            for comp in &comps {
                rec.samples += 1;
                if let Some(msg) = check_affine_component(proto, t, comp, self.tol) {
                    rec.fail(vec![t.source.0, t.target.0], None, None, msg);
                }
            }
            let boxes: Vec<Option<(Point, Point)>> = comps
                .iter()
                .map(|comp| {
                    let elems: Vec<usize> = comp.iter().map(|&k| t.pairs[k].source).collect();
                    component_box(sc, &elems, dim)
                })
                .collect();
            for (n, b) in boxes.iter().enumerate() {
                if b.is_none() {
                    rec.fail(
                        vec![t.source.0, t.target.0],
                        None,
                        None,
                        format!("transition domain component {n} is not a box"),
                    );
                }
            }
            for a in 0..boxes.len() {
                for b in a + 1..boxes.len() {
                    if let (Some(x), Some(y)) = (&boxes[a], &boxes[b]) {
                        if (0..dim).all(|l| x.0[l] <= y.1[l] + self.tol && y.0[l] <= x.1[l] + self.tol) {
                            rec.fail(
                                vec![t.source.0, t.target.0],
                                None,
                                None,
                                format!("transition domain components {a} and {b} touch"),
                            );
                        }
                    }
                }
            }
        }

        // unstructured charts covered by structured transition domains
        for c in proto.charts.iter().filter(|c| !c.kind.is_structured()) {
            let mut per_structured: Vec<HashSet<usize>> = Vec::new();
            let mut covered = HashSet::new();
            for t in proto.transitions.iter().filter(|t| t.source == c.id) {
                if !proto.chart(t.target).kind.is_structured() {
                    continue;
                }
                let set: HashSet<usize> = t.pairs.iter().map(|p| p.source).collect();
                covered.extend(set.iter().copied());
                per_structured.push(set);
            }
            for e in 0..c.element_count() {
                rec.samples += 1;
                if !covered.contains(&e) {
                    rec.fail(
                        vec![c.id.0],
                        Some(c.mesh.cells[e].centroid()),
                        None,
                        format!("element {e} of unstructured chart is in no structured transition domain"),
                    );
                }
            }
            for (e1, e2) in interior_faces(c, dim) {
                rec.samples += 1;
                if !per_structured.iter().any(|s| s.contains(&e1) && s.contains(&e2)) {
                    rec.fail(
                        vec![c.id.0],
                        None,
                        None,
                        format!("face between segments {e1} and {e2} lies in no single structured transition domain"),
                    );
                }
            }
        }

        // vertex charts pairwise disjoint, edge overlaps structured
        let vertex_like: Vec<ChartId> = proto
            .charts
            .iter()
            .filter(|c| c.kind.is_vertex_like())
            .map(|c| c.id)
            .collect();
        let edge_charts: Vec<ChartId> = proto
            .charts
            .iter()
            .filter(|c| matches!(c.kind, ChartKind::UnstructuredEdge3D { .. }))
            .map(|c| c.id)
            .collect();
        for (orbit, members) in topo.element_orbits.iter().enumerate() {
            let vcharts: BTreeSet<usize> = members
                .iter()
                .filter(|(c, _)| vertex_like.contains(c))
                .map(|(c, _)| c.0)
                .collect();
            if vcharts.len() > 1 {
                rec.fail(
                    vcharts.iter().copied().collect(),
                    None,
                    None,
                    format!("unstructured vertex charts overlap in element orbit {orbit}"),
                );
            }
            let echarts: BTreeSet<usize> = members
                .iter()
                .filter(|(c, _)| edge_charts.contains(c))
                .map(|(c, _)| c.0)
                .collect();
            let structured = members.iter().any(|(c, _)| proto.chart(*c).kind.is_structured());
            if echarts.len() > 1 && !structured {
                rec.fail(
                    echarts.iter().copied().collect(),
                    None,
                    None,
                    format!("edge charts overlap outside structured domains in element orbit {orbit}"),
                );
            }
        }

        // no element closure holds two unstructured vertices
        let special: HashSet<usize> = proto
            .charts
            .iter()
            .filter(|c| c.kind.is_vertex_like())
            .map(|c| {
                let e = &c.mesh.elements[0];
                topo.vertex_orbit(c.id, e[0])
            })
            .collect();
        for members in &topo.element_orbits {
            let (c, e) = members[0];
            let corners: BTreeSet<usize> = proto.chart(c).mesh.elements[e]
                .iter()
                .map(|&v| topo.vertex_orbit(c, v))
                .filter(|v| special.contains(v))
                .collect();
            rec.samples += 1;
            if corners.len() > 1 {
                rec.fail(
                    vec![c.0],
                    Some(proto.chart(c).mesh.cells[e].centroid()),
                    None,
                    format!("element {e} is adjacent to two unstructured vertices"),
                );
            }
        }
        rec.finish()
    }
}

/// Pairs of elements of one chart sharing a face.
fn interior_faces(c: &crate::atlas::Chart, dim: usize) -> Vec<(usize, usize)> {
    let mut seen: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut out = Vec::new();
    for (e, corners) in c.mesh.elements.iter().enumerate() {
        for f in 0..2 * dim {
            let mut key: Vec<usize> = face_corners(dim, f).iter().map(|&k| corners[k]).collect();
            key.sort_unstable();
            if let Some(&other) = seen.get(&key) {
                out.push((other, e));
            } else {
                seen.insert(key, e);
            }
        }
    }
    out
}

/// Connected components (through shared vertices) of a transition domain.
fn components(sc: &crate::atlas::Chart, t: &TransitionMap) -> Vec<Vec<usize>> {
    let n = t.pairs.len();
    let mut uf = UnionFind::<usize>::new(n);
    let mut by_vertex: HashMap<usize, usize> = HashMap::new();
    for (k, p) in t.pairs.iter().enumerate() {
        for &v in &sc.mesh.elements[p.source] {
            if let Some(&other) = by_vertex.get(&v) {
                uf.union(k, other);
            } else {
                by_vertex.insert(v, k);
            }
        }
    }
    let labels = uf.into_labeling();
    let (_, groups) = crate::manifold::group_labels(&labels);
    groups
}

fn check_affine_component(
    proto: &ProtoManifold,
    t: &TransitionMap,
    comp: &[usize],
    tol: f64,
) -> Option<String> {
    let dim = proto.dim;
    let first = &t.pairs[comp[0]];
    let src = &proto.chart(t.source).mesh.cells;
    // affine map fitted on the first element's corners
    let x0 = src[first.source].corners[0];
    let y0 = proto.map_point(t, first, &x0)?;
    let mut lin = [[0.0; MAX_DIM]; MAX_DIM];
    for a in 0..dim {
        let xa = src[first.source].corners[1 << a];
        let ya = proto.map_point(t, first, &xa)?;
        let dx = xa[a] - x0[a];
        for b in 0..dim {
            lin[b][a] = (ya[b] - y0[b]) / dx;
        }
    }
    for &k in comp {
        let p = &t.pairs[k];
        let cell: &CellMap = &src[p.source];
        for x in &cell.corners {
            let img = proto.map_point(t, p, x)?;
            let mut pred = y0;
            for b in 0..dim {
                for a in 0..dim {
                    pred[b] += lin[b][a] * (x[a] - x0[a]);
                }
            }
            let res = max_abs_diff(&img, &pred);
            if res > tol.max(1e-10) {
                return Some(format!(
                    "transition {} -> {} is not affine on the component containing element {}",
                    t.source, t.target, p.source
                ));
            }
        }
    }
    None
}

/// Bounding box of a component when the component fills it.
fn component_box(sc: &crate::atlas::Chart, comp: &[usize], dim: usize) -> Option<(Point, Point)> {
    let mut lo = [f64::INFINITY; MAX_DIM];
    let mut hi = [f64::NEG_INFINITY; MAX_DIM];
    let mut volume = 0.0;
    for &k in comp {
        let cell = &sc.mesh.cells[k];
        let (a, b) = (&cell.corners[0], &cell.corners[corner_count(dim) - 1]);
        let mut v = 1.0;
        for l in 0..dim {
            lo[l] = lo[l].min(a[l]);
            hi[l] = hi[l].max(b[l]);
            v *= b[l] - a[l];
        }
        volume += v;
    }
    let full: f64 = (0..dim).map(|l| hi[l] - lo[l]).product();
    ((full - volume).abs() <= 1e-9 * full).then_some((lo, hi))
}

/// Combinatorial identification used by the topological checks.
struct Topology {
    vertex_offsets: Vec<usize>,
    vertex_labels: Vec<usize>,
    /// Members `(chart, element)` per element orbit.
    element_orbits: Vec<Vec<(ChartId, usize)>>,
}

impl Topology {
    fn new(proto: &ProtoManifold) -> Self {
        let mut element_offsets = vec![0];
        let mut vertex_offsets = vec![0];
        for c in &proto.charts {
            element_offsets.push(element_offsets.last().unwrap() + c.element_count());
            vertex_offsets.push(vertex_offsets.last().unwrap() + c.mesh.vertices.len());
        }
        let ne = *element_offsets.last().unwrap();
        let nv = *vertex_offsets.last().unwrap();
        let mut euf = UnionFind::<usize>::new(ne);
        let mut vuf = UnionFind::<usize>::new(nv);
        for t in &proto.transitions {
            let sc = proto.chart(t.source);
            let tc = proto.chart(t.target);
            for p in &t.pairs {
                euf.union(element_offsets[t.source.0] + p.source, element_offsets[t.target.0] + p.target);
                for (c, &v) in sc.mesh.elements[p.source].iter().enumerate() {
                    let w = tc.mesh.elements[p.target][p.orient.apply_corner(c)];
                    vuf.union(vertex_offsets[t.source.0] + v, vertex_offsets[t.target.0] + w);
                }
            }
        }
        let (_, groups) = crate::manifold::group_labels(&euf.into_labeling());
        let element_orbits = groups
            .into_iter()
            .map(|g| {
                g.into_iter()
                    .map(|x| {
                        let c = element_offsets.partition_point(|&o| o <= x) - 1;
                        (ChartId(c), x - element_offsets[c])
                    })
                    .collect()
            })
            .collect();
        let (vertex_labels, _) = crate::manifold::group_labels(&vuf.into_labeling());
        Self {
            vertex_offsets,
            vertex_labels,
            element_orbits,
        }
    }

    fn vertex_orbit(&self, c: ChartId, v: usize) -> usize {
        self.vertex_labels[self.vertex_offsets[c.0] + v]
    }

    fn no_bifurcation(&self, proto: &ProtoManifold) -> CheckResult {
        let mut rec = Recorder::new(CheckKind::NoBifurcation);
        let dim = proto.dim;
        let mut incident: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
        for (orbit, members) in self.element_orbits.iter().enumerate() {
            let (c, e) = members[0];
            let corners = &proto.chart(c).mesh.elements[e];
            for f in 0..2 * dim {
                let mut key: Vec<usize> = face_corners(dim, f)
                    .iter()
                    .map(|&k| self.vertex_orbit(c, corners[k]))
                    .collect();
                key.sort_unstable();
                key.dedup();
                incident.entry(key).or_default().push(orbit);
            }
        }
        let mut keys: Vec<_> = incident.into_iter().collect();
        keys.sort();
        for (face, orbits) in keys {
            rec.samples += 1;
            if orbits.len() > 2 {
                let (c, e) = self.element_orbits[orbits[0]][0];
                rec.fail(
                    vec![c.0],
                    Some(proto.chart(c).mesh.cells[e].centroid()),
                    None,
                    format!(
                        "face with vertex orbits {face:?} is shared by {} element orbits",
                        orbits.len()
                    ),
                );
            }
        }
        rec.finish()
    }
}
