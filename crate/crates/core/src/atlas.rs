//! Proto-manifolds: charts, their element meshes and the element-wise
//! transition maps gluing them.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::AtlasError;
use crate::geom::{corner_count, CellMap, Orientation, Point, GEOM_TOL, MAX_DIM};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChartId(pub usize);

impl fmt::Display for ChartId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An element instance: one element of one chart.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ElementRef {
    pub chart: ChartId,
    pub element: usize,
}

/// Open box `prod (lo_l, hi_l)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamBox {
    pub dim: usize,
    pub lo: Point,
    pub hi: Point,
}

impl ParamBox {
    pub fn new(dim: usize, lo: Point, hi: Point) -> Result<Self, AtlasError> {
        for a in 0..dim {
            if !(lo[a] < hi[a]) {
                return Err(AtlasError::Invalid(format!(
                    "box axis {a}: lower bound {} is not below upper bound {}",
                    lo[a], hi[a]
                )));
            }
        }
        Ok(Self { dim, lo, hi })
    }

    pub fn contains_closed(&self, x: &Point, tol: f64) -> bool {
        (0..self.dim).all(|a| x[a] >= self.lo[a] - tol && x[a] <= self.hi[a] + tol)
    }
}

/// Geometry and kind of a chart.
#[derive(Clone, Debug, PartialEq)]
pub enum ChartKind {
    /// A box meshed by the distinct values of a full knot vector per axis.
    Structured { knots: Vec<Vec<f64>> },
    /// Closed ring of quadrilateral segments around an extraordinary vertex;
    /// each segment lists its corners in tensor order with the vertex first.
    UnstructuredVertex2D { segments: Vec<Vec<Point>> },
    /// Cross-section ring times an interval meshed by `axis_knots`.
    UnstructuredEdge3D {
        section: Vec<Vec<Point>>,
        axis_knots: Vec<f64>,
    },
    /// Closed ring of hexahedral segments around a fully unstructured vertex.
    UnstructuredVertex3D { segments: Vec<Vec<Point>> },
    /// Open ring of segments around a non-convex boundary vertex.
    Boundary2D { segments: Vec<Vec<Point>> },
}

impl ChartKind {
    pub fn name(&self) -> &'static str {
        match self {
            ChartKind::Structured { .. } => "structured",
            ChartKind::UnstructuredVertex2D { .. } => "vertex2d",
            ChartKind::UnstructuredEdge3D { .. } => "edge3d",
            ChartKind::UnstructuredVertex3D { .. } => "vertex3d",
            ChartKind::Boundary2D { .. } => "boundary2d",
        }
    }

    pub fn is_structured(&self) -> bool {
        matches!(self, ChartKind::Structured { .. })
    }

    /// Charts carrying a single corner function on a segment ring.
    pub fn is_vertex_like(&self) -> bool {
        matches!(
            self,
            ChartKind::UnstructuredVertex2D { .. }
                | ChartKind::UnstructuredVertex3D { .. }
                | ChartKind::Boundary2D { .. }
        )
    }

    pub fn valence(&self) -> Option<usize> {
        match self {
            ChartKind::Structured { .. } => None,
            ChartKind::UnstructuredVertex2D { segments }
            | ChartKind::UnstructuredVertex3D { segments }
            | ChartKind::Boundary2D { segments } => Some(segments.len()),
            ChartKind::UnstructuredEdge3D { section, .. } => Some(section.len()),
        }
    }
}

/// Distinct values of a knot vector.
pub fn breakpoints(knots: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(knots.len());
    for &k in knots {
        if out.last().map_or(true, |&l| k > l) {
            out.push(k);
        }
    }
    out
}

/// Vertices and elements of a chart, derived from its kind.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartMesh {
    pub vertices: Vec<Point>,
    /// Corner vertex ids in tensor order.
    pub elements: Vec<Vec<usize>>,
    pub cells: Vec<CellMap>,
    /// Elements per axis for structured charts, `x` fastest.
    pub grid: Option<Vec<usize>>,
}

/// Corner ids (tensor order) of local face `face = 2 * axis + side`.
pub fn face_corners(dim: usize, face: usize) -> Vec<usize> {
    let axis = face / 2;
    let side = face % 2;
    (0..corner_count(dim))
        .filter(|c| (c >> axis) & 1 == side)
        .collect()
}

struct VertexPool {
    points: Vec<Point>,
    index: HashMap<[i64; MAX_DIM], Vec<usize>>,
}

impl VertexPool {
    fn new() -> Self {
        Self {
            points: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn key(p: &Point) -> [i64; MAX_DIM] {
        let mut k = [0; MAX_DIM];
        for a in 0..MAX_DIM {
            k[a] = (p[a] * 1e9).round() as i64;
        }
        k
    }

    fn insert(&mut self, p: Point) -> usize {
        let key = Self::key(&p);
        let mut probe = Vec::new();
        for dx in -1..=1i64 {
            for dy in -1..=1i64 {
                for dz in -1..=1i64 {
                    probe.push([key[0] + dx, key[1] + dy, key[2] + dz]);
                }
            }
        }
        for k in &probe {
            if let Some(ids) = self.index.get(k) {
                for &id in ids {
                    if crate::geom::max_abs_diff(&self.points[id], &p) <= 1e-10 {
                        return id;
                    }
                }
            }
        }
        let id = self.points.len();
        self.points.push(p);
        self.index.entry(key).or_default().push(id);
        id
    }
}

impl ChartMesh {
    pub fn build(dim: usize, kind: &ChartKind) -> Result<Self, AtlasError> {
        match kind {
            ChartKind::Structured { knots } => Self::structured(dim, knots),
            ChartKind::UnstructuredVertex2D { segments } | ChartKind::Boundary2D { segments } => {
                if dim != 2 {
                    return Err(AtlasError::Invalid(format!(
                        "{} chart in dimension {dim}",
                        kind.name()
                    )));
                }
                Self::segments(2, segments)
            }
            ChartKind::UnstructuredVertex3D { segments } => {
                if dim != 3 {
                    return Err(AtlasError::Invalid("vertex3d chart needs dimension 3".into()));
                }
                Self::segments(3, segments)
            }
            ChartKind::UnstructuredEdge3D {
                section,
                axis_knots,
            } => {
                if dim != 3 {
                    return Err(AtlasError::Invalid("edge3d chart needs dimension 3".into()));
                }
                let zs = breakpoints(axis_knots);
                if zs.len() < 2 {
                    return Err(AtlasError::Invalid("edge3d chart needs a nonempty interval".into()));
                }
                let mut pool = VertexPool::new();
                let mut elements = Vec::new();
                let mut cells = Vec::new();
                for m in 0..zs.len() - 1 {
                    for seg in section {
                        if seg.len() != 4 {
                            return Err(AtlasError::Invalid("edge3d section segments need 4 corners".into()));
                        }
                        let mut corners = Vec::with_capacity(8);
                        for c in 0..8 {
                            let s = seg[c & 3];
                            let z = if c & 4 == 4 { zs[m + 1] } else { zs[m] };
                            corners.push([s[0], s[1], z]);
                        }
                        elements.push(corners.iter().map(|p| pool.insert(*p)).collect());
                        cells.push(CellMap::new(3, corners));
                    }
                }
                Ok(Self {
                    vertices: pool.points,
                    elements,
                    cells,
                    grid: None,
                })
            }
        }
    }

    fn structured(dim: usize, knots: &[Vec<f64>]) -> Result<Self, AtlasError> {
        if knots.len() != dim {
            return Err(AtlasError::Invalid(format!(
                "structured chart has {} knot lines for dimension {dim}",
                knots.len()
            )));
        }
        let bps: Vec<Vec<f64>> = knots.iter().map(|k| breakpoints(k)).collect();
        for (a, k) in knots.iter().enumerate() {
            if k.windows(2).any(|w| w[1] < w[0]) {
                return Err(AtlasError::Invalid(format!("knot line {a} is not nondecreasing")));
            }
            if bps[a].len() < 2 {
                return Err(AtlasError::Invalid(format!("knot line {a} spans an empty interval")));
            }
        }
        let grid: Vec<usize> = bps.iter().map(|b| b.len() - 1).collect();
        let vgrid: Vec<usize> = bps.iter().map(|b| b.len()).collect();
        let nv: usize = vgrid.iter().product();
        let mut vertices = Vec::with_capacity(nv);
        for lin in 0..nv {
            let mut p = [0.0; MAX_DIM];
            let mut rem = lin;
            for a in 0..dim {
                p[a] = bps[a][rem % vgrid[a]];
                rem /= vgrid[a];
            }
            vertices.push(p);
        }
        let ne: usize = grid.iter().product();
        let mut elements = Vec::with_capacity(ne);
        let mut cells = Vec::with_capacity(ne);
        for lin in 0..ne {
            let mut idx = [0usize; MAX_DIM];
            let mut rem = lin;
            for a in 0..dim {
                idx[a] = rem % grid[a];
                rem /= grid[a];
            }
            let corners: Vec<usize> = (0..corner_count(dim))
                .map(|c| {
                    let mut v = 0;
                    let mut stride = 1;
                    for a in 0..dim {
                        v += (idx[a] + ((c >> a) & 1)) * stride;
                        stride *= vgrid[a];
                    }
                    v
                })
                .collect();
            let mut lo = [0.0; MAX_DIM];
            let mut hi = [0.0; MAX_DIM];
            for a in 0..dim {
                lo[a] = bps[a][idx[a]];
                hi[a] = bps[a][idx[a] + 1];
            }
            cells.push(CellMap::axis_box(dim, &lo, &hi));
            elements.push(corners);
        }
        Ok(Self {
            vertices,
            elements,
            cells,
            grid: Some(grid),
        })
    }

    fn segments(dim: usize, segments: &[Vec<Point>]) -> Result<Self, AtlasError> {
        if segments.is_empty() {
            return Err(AtlasError::Invalid("segment ring is empty".into()));
        }
        let mut pool = VertexPool::new();
        let mut elements = Vec::new();
        let mut cells = Vec::new();
        for (l, seg) in segments.iter().enumerate() {
            if seg.len() != corner_count(dim) {
                return Err(AtlasError::Invalid(format!(
                    "segment {l} has {} corners, expected {}",
                    seg.len(),
                    corner_count(dim)
                )));
            }
            elements.push(seg.iter().map(|p| pool.insert(*p)).collect());
            cells.push(CellMap::new(dim, seg.clone()));
        }
        Ok(Self {
            vertices: pool.points,
            elements,
            cells,
            grid: None,
        })
    }

    /// Faces `(element, local face)` not shared with another element.
    pub fn boundary_faces(&self, dim: usize) -> Vec<(usize, usize)> {
        let mut count: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut keys = Vec::new();
        for (e, corners) in self.elements.iter().enumerate() {
            for f in 0..2 * dim {
                let mut key: Vec<usize> = face_corners(dim, f).iter().map(|&c| corners[c]).collect();
                key.sort_unstable();
                *count.entry(key.clone()).or_default() += 1;
                keys.push((e, f, key));
            }
        }
        keys.into_iter()
            .filter(|(_, _, k)| count[k] == 1)
            .map(|(e, f, _)| (e, f))
            .collect()
    }

    /// Element whose closure contains `x`, preferring the smallest index.
    pub fn locate(&self, x: &Point) -> Option<(usize, Point)> {
        if let Some(grid) = &self.grid {
            return self.locate_grid(grid, x);
        }
        self.cells
            .iter()
            .enumerate()
            .find_map(|(e, cell)| cell.locate(x, 1e-9).map(|r| (e, r)))
    }

    /// Axis-box lookup by bisection on the element grid.
    fn locate_grid(&self, grid: &[usize], x: &Point) -> Option<(usize, Point)> {
        let dim = grid.len();
        let hi_corner = corner_count(dim) - 1;
        let mut element = 0;
        let mut stride = 1;
        for (a, &n) in grid.iter().enumerate() {
            let lo = |i: usize| self.cells[i * stride].corners[0][a];
            let hi = self.cells[(n - 1) * stride].corners[hi_corner][a];
            let tol = 1e-9 * (1.0 + hi.abs());
            if x[a] < lo(0) - tol || x[a] > hi + tol {
                return None;
            }
            // last element whose lower bound is <= x
            let (mut l, mut h) = (0, n);
            while h - l > 1 {
                let mid = (l + h) / 2;
                if lo(mid) <= x[a] {
                    l = mid;
                } else {
                    h = mid;
                }
            }
            let i = l;
            element += i * stride;
            stride *= n;
        }
        let cell = &self.cells[element];
        let (lo, hi) = (cell.corners[0], cell.corners[hi_corner]);
        let mut r = [0.0; MAX_DIM];
        for a in 0..dim {
            r[a] = (x[a] - lo[a]) / (hi[a] - lo[a]);
        }
        Some((element, r))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Chart {
    pub id: ChartId,
    pub kind: ChartKind,
    /// Retained boundary part as element faces `(element, 2 * axis + side)`.
    pub gamma: Vec<(usize, usize)>,
    pub mesh: ChartMesh,
}

impl Chart {
    pub fn new(
        id: ChartId,
        dim: usize,
        kind: ChartKind,
        gamma: Vec<(usize, usize)>,
    ) -> Result<Self, AtlasError> {
        let mesh = ChartMesh::build(dim, &kind)?;
        for &(e, f) in &gamma {
            if e >= mesh.elements.len() || f >= 2 * dim {
                return Err(AtlasError::Structural(format!(
                    "chart {id}: retained boundary face ({e}, {f}) out of range"
                )));
            }
        }
        Ok(Self {
            id,
            kind,
            gamma,
            mesh,
        })
    }

    pub fn element_count(&self) -> usize {
        self.mesh.elements.len()
    }

    /// Position of the special vertex (extraordinary or boundary corner) for
    /// ring charts.
    pub fn center(&self) -> Option<Point> {
        match &self.kind {
            ChartKind::UnstructuredVertex2D { segments }
            | ChartKind::UnstructuredVertex3D { segments }
            | ChartKind::Boundary2D { segments } => Some(segments[0][0]),
            ChartKind::UnstructuredEdge3D { section, .. } => Some(section[0][0]),
            ChartKind::Structured { .. } => None,
        }
    }

    pub fn knots(&self) -> Option<&[Vec<f64>]> {
        match &self.kind {
            ChartKind::Structured { knots } => Some(knots),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ElementPair {
    pub source: usize,
    pub target: usize,
    /// Maps source reference coordinates to target reference coordinates.
    pub orient: Orientation,
}

/// Transition function `psi_{source,target}`, stored element by element.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMap {
    pub source: ChartId,
    pub target: ChartId,
    pub pairs: Vec<ElementPair>,
}

impl TransitionMap {
    pub fn inverse(&self) -> TransitionMap {
        TransitionMap {
            source: self.target,
            target: self.source,
            pairs: self
                .pairs
                .iter()
                .map(|p| ElementPair {
                    source: p.target,
                    target: p.source,
                    orient: p.orient.inverse(),
                })
                .collect(),
        }
    }

    pub fn pair_for(&self, source_element: usize) -> Option<&ElementPair> {
        self.pairs.iter().find(|p| p.source == source_element)
    }
}

/// Affine frame `zeta = origin + matrix * u` placing a unit patch
/// `u in [0,1]^d` in a chart, together with the physical corners of the
/// patch (tensor order). Manufactured fields are evaluated at the
/// multilinear image of `u`.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchFrame {
    pub chart: ChartId,
    pub origin: Point,
    pub matrix: [[f64; MAX_DIM]; MAX_DIM],
    pub corners: Vec<Point>,
}

impl PatchFrame {
    pub fn to_chart(&self, u: &Point, dim: usize) -> Point {
        let mut z = self.origin;
        for i in 0..dim {
            for j in 0..dim {
                z[i] += self.matrix[i][j] * u[j];
            }
        }
        z
    }

    /// Physical point at patch coordinates `u` and `jac[i][j] = dX_i / du_j`.
    pub fn embed(&self, u: &Point, dim: usize) -> (Point, [[f64; MAX_DIM]; MAX_DIM]) {
        let mut x = [0.0; MAX_DIM];
        let mut jac = [[0.0; MAX_DIM]; MAX_DIM];
        for (c, corner) in self.corners.iter().enumerate() {
            let factor = |a: usize| if (c >> a) & 1 == 1 { u[a] } else { 1.0 - u[a] };
            let w: f64 = (0..dim).map(factor).product();
            for i in 0..MAX_DIM {
                x[i] += w * corner[i];
            }
            for j in 0..dim {
                let mut dw = if (c >> j) & 1 == 1 { 1.0 } else { -1.0 };
                for a in (0..dim).filter(|&a| a != j) {
                    dw *= factor(a);
                }
                for i in 0..MAX_DIM {
                    jac[i][j] += dw * corner[i];
                }
            }
        }
        (x, jac)
    }

    pub fn to_patch(&self, z: &Point, dim: usize) -> Option<Point> {
        let mut rhs = [0.0; MAX_DIM];
        for a in 0..dim {
            rhs[a] = z[a] - self.origin[a];
        }
        crate::geom::solve_small(&self.matrix, &rhs, dim)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtoManifold {
    pub dim: usize,
    pub charts: Vec<Chart>,
    pub transitions: Vec<TransitionMap>,
    pub frames: Vec<PatchFrame>,
}

impl ProtoManifold {
    pub fn chart(&self, id: ChartId) -> &Chart {
        &self.charts[id.0]
    }

    pub fn transition(&self, source: ChartId, target: ChartId) -> Option<&TransitionMap> {
        self.transitions
            .iter()
            .find(|t| t.source == source && t.target == target)
    }

    pub fn cell(&self, e: ElementRef) -> &CellMap {
        &self.charts[e.chart.0].mesh.cells[e.element]
    }

    /// Maps a point of `source_element` (chart coordinates) through a pair.
    pub fn map_point(&self, t: &TransitionMap, pair: &ElementPair, x: &Point) -> Option<Point> {
        let src = &self.charts[t.source.0].mesh.cells[pair.source];
        let dst = &self.charts[t.target.0].mesh.cells[pair.target];
        let r = src.inverse(x)?;
        Some(dst.eval(&pair.orient.apply(&r)))
    }

    /// Checks index ranges and dimensions; these errors abort validation.
    pub fn check_structure(&self) -> Result<(), AtlasError> {
        if !(1..=3).contains(&self.dim) {
            return Err(AtlasError::Structural(format!("unsupported dimension {}", self.dim)));
        }
        for (i, c) in self.charts.iter().enumerate() {
            if c.id.0 != i {
                return Err(AtlasError::Structural(format!(
                    "chart at position {i} carries id {}",
                    c.id
                )));
            }
        }
        let n = self.charts.len();
        let mut seen = std::collections::HashSet::new();
        for t in &self.transitions {
            if t.source.0 >= n || t.target.0 >= n {
                return Err(AtlasError::Structural(format!(
                    "transition {} -> {} references a missing chart",
                    t.source, t.target
                )));
            }
            if t.source == t.target {
                return Err(AtlasError::Structural(format!(
                    "explicit self transition on chart {}",
                    t.source
                )));
            }
            if !seen.insert((t.source, t.target)) {
                return Err(AtlasError::Structural(format!(
                    "duplicate transition {} -> {}",
                    t.source, t.target
                )));
            }
            let ns = self.charts[t.source.0].element_count();
            let nt = self.charts[t.target.0].element_count();
            let mut src_seen = std::collections::HashSet::new();
            for p in &t.pairs {
                if p.source >= ns || p.target >= nt {
                    return Err(AtlasError::Structural(format!(
                        "transition {} -> {}: element pair ({}, {}) out of range",
                        t.source, t.target, p.source, p.target
                    )));
                }
                if p.orient.dim as usize != self.dim {
                    return Err(AtlasError::Structural(format!(
                        "transition {} -> {}: orientation of wrong dimension",
                        t.source, t.target
                    )));
                }
                if !src_seen.insert(p.source) {
                    return Err(AtlasError::Structural(format!(
                        "transition {} -> {}: element {} paired twice",
                        t.source, t.target, p.source
                    )));
                }
            }
        }
        for f in &self.frames {
            if f.chart.0 >= n {
                return Err(AtlasError::Structural(format!(
                    "patch frame references missing chart {}",
                    f.chart
                )));
            }
            if f.corners.len() != crate::geom::corner_count(self.dim) {
                return Err(AtlasError::Structural(format!(
                    "patch frame on chart {} has {} corners",
                    f.chart,
                    f.corners.len()
                )));
            }
        }
        Ok(())
    }

    /// Sample points `(k + 1/2) / s` per axis in reference coordinates.
    pub fn sample_grid(&self, samples_per_axis: usize) -> Vec<Point> {
        let s = samples_per_axis.max(1);
        let total = s.pow(self.dim as u32);
        (0..total)
            .map(|lin| {
                let mut r = [0.0; MAX_DIM];
                let mut rem = lin;
                for a in 0..self.dim {
                    r[a] = ((rem % s) as f64 + 0.5) / s as f64;
                    rem /= s;
                }
                r
            })
            .collect()
    }
}

/// Whether two points agree within the atlas tolerance.
pub fn same_point(a: &Point, b: &Point) -> bool {
    crate::geom::max_abs_diff(a, b) <= GEOM_TOL
}
