//! Atlases generated from raw conforming quad or hex meshes.
//!
//! Every raw cell is split into `n^d` elements (`n = 2` for the plain
//! bisection). Structured charts are boxes of raw cells: pairs across each
//! interior raw face, plus blocks around regular interior edges and
//! vertices. Extraordinary vertices get vertex charts, non-convex boundary
//! vertices boundary charts, and chains of extraordinary edges edge charts.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use crate::atlas::{Chart, ChartId, ChartKind, ElementPair, PatchFrame, ProtoManifold, TransitionMap};
use crate::error::AtlasError;
use crate::geom::{corner_count, Orientation, Point, MAX_DIM};

/// A conforming quad (`d = 2`) or hex (`d = 3`) mesh. Cells list their
/// vertices in tensor order (`x` fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct RawMesh {
    pub dim: usize,
    pub vertices: Vec<Point>,
    pub cells: Vec<Vec<usize>>,
}

/// Tensor-order position of each cyclic-order vertex: quads are listed
/// counter-clockwise, hexes as bottom cycle then top cycle.
pub fn cyclic_to_tensor(dim: usize) -> &'static [usize] {
    match dim {
        2 => &[0, 1, 3, 2],
        3 => &[0, 1, 3, 2, 4, 5, 7, 6],
        _ => &[0, 1],
    }
}

impl RawMesh {
    pub fn new(dim: usize, vertices: Vec<Point>, cells: Vec<Vec<usize>>) -> Result<Self, AtlasError> {
        if !(2..=3).contains(&dim) {
            return Err(AtlasError::RawMesh(format!("unsupported dimension {dim}")));
        }
        let nc = corner_count(dim);
        for (c, cell) in cells.iter().enumerate() {
            if cell.len() != nc {
                return Err(AtlasError::RawMesh(format!(
                    "cell {c} has {} vertices, expected {nc}",
                    cell.len()
                )));
            }
            if let Some(&v) = cell.iter().find(|&&v| v >= vertices.len()) {
                return Err(AtlasError::RawMesh(format!("cell {c} references missing vertex {v}")));
            }
            let distinct: BTreeSet<usize> = cell.iter().copied().collect();
            if distinct.len() != nc {
                return Err(AtlasError::RawMesh(format!("cell {c} is degenerate")));
            }
        }
        Ok(Self {
            dim,
            vertices,
            cells,
        })
    }

    /// Builds from cells given in cyclic order.
    pub fn from_cyclic(dim: usize, vertices: Vec<Point>, cells: Vec<Vec<usize>>) -> Result<Self, AtlasError> {
        let map = cyclic_to_tensor(dim);
        let cells = cells
            .into_iter()
            .map(|c| {
                if c.len() != map.len() {
                    return c;
                }
                let mut t = vec![0; c.len()];
                for (i, &v) in c.iter().enumerate() {
                    t[map[i]] = v;
                }
                t
            })
            .collect();
        Self::new(dim, vertices, cells)
    }

    pub fn cyclic_cells(&self) -> Vec<Vec<usize>> {
        let map = cyclic_to_tensor(self.dim);
        self.cells
            .iter()
            .map(|c| map.iter().map(|&t| c[t]).collect())
            .collect()
    }
}

/// Bisects every raw cell once and covers the result with charts.
pub fn cover_mesh(raw: &RawMesh, degree: usize) -> Result<ProtoManifold, AtlasError> {
    atlas_from_patches(raw, degree, 2)
}

type FaceKey = Vec<usize>;

struct Topo<'a> {
    raw: &'a RawMesh,
    /// Raw faces: sorted vertex ids to incident `(cell, local face)`.
    faces: BTreeMap<FaceKey, Vec<(usize, usize)>>,
    vertex_cells: Vec<Vec<usize>>,
    boundary_vertices: BTreeSet<usize>,
}

impl<'a> Topo<'a> {
    fn new(raw: &'a RawMesh) -> Result<Self, AtlasError> {
        let dim = raw.dim;
        let mut faces: BTreeMap<FaceKey, Vec<(usize, usize)>> = BTreeMap::new();
        for (c, cell) in raw.cells.iter().enumerate() {
            for f in 0..2 * dim {
                let mut key: Vec<usize> = crate::atlas::face_corners(dim, f).iter().map(|&k| cell[k]).collect();
                key.sort_unstable();
                faces.entry(key).or_default().push((c, f));
            }
        }
        for (key, inc) in &faces {
            if inc.len() > 2 {
                return Err(AtlasError::Unsupported {
                    vertex: key[0],
                    reason: format!("non-manifold face shared by {} cells", inc.len()),
                });
            }
        }
        let mut vertex_cells = vec![Vec::new(); raw.vertices.len()];
        for (c, cell) in raw.cells.iter().enumerate() {
            for &v in cell {
                vertex_cells[v].push(c);
            }
        }
        let boundary_vertices = faces
            .iter()
            .filter(|(_, inc)| inc.len() == 1)
            .flat_map(|(k, _)| k.iter().copied())
            .collect();
        let topo = Self {
            raw,
            faces,
            vertex_cells,
            boundary_vertices,
        };
        if dim == 2 {
            topo.check_orientation()?;
        }
        Ok(topo)
    }

    fn is_boundary_face(&self, cell: usize, f: usize) -> bool {
        let key = self.face_key(cell, f);
        self.faces[&key].len() == 1
    }

    fn face_key(&self, cell: usize, f: usize) -> FaceKey {
        let mut key: Vec<usize> = crate::atlas::face_corners(self.raw.dim, f)
            .iter()
            .map(|&k| self.raw.cells[cell][k])
            .collect();
        key.sort_unstable();
        key
    }

    /// Neighbouring cells of `cell` across faces.
    fn neighbors(&self, cell: usize) -> Vec<usize> {
        (0..2 * self.raw.dim)
            .filter_map(|f| {
                self.faces[&self.face_key(cell, f)]
                    .iter()
                    .map(|&(c, _)| c)
                    .find(|&c| c != cell)
            })
            .collect()
    }

    /// Shared edges of two quads must run in opposite cyclic directions.
    fn check_orientation(&self) -> Result<(), AtlasError> {
        let succ = [1usize, 3, 0, 2];
        let dir = |cell: &[usize], a: usize, b: usize| -> bool {
            let ia = cell.iter().position(|&v| v == a).unwrap();
            let ib = cell.iter().position(|&v| v == b).unwrap();
            succ[ia] == ib
        };
        for (key, inc) in &self.faces {
            if let [(c1, _), (c2, _)] = inc[..] {
                let d1 = dir(&self.raw.cells[c1], key[0], key[1]);
                let d2 = dir(&self.raw.cells[c2], key[0], key[1]);
                if d1 == d2 {
                    return Err(AtlasError::Unsupported {
                        vertex: key[0],
                        reason: format!("cells {c1} and {c2} are inconsistently oriented"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Cells around an edge or vertex (`center` lists the shared raw
    /// vertices), ordered along face adjacency. Returns the order and
    /// whether it closes into a ring.
    fn ring(&self, center: &[usize]) -> Result<(Vec<usize>, bool), AtlasError> {
        let cells: Vec<usize> = self.vertex_cells[center[0]]
            .iter()
            .copied()
            .filter(|&c| center.iter().all(|v| self.raw.cells[c].contains(v)))
            .collect();
        let adjacent = |a: usize, b: usize| -> bool {
            self.faces.iter().any(|(k, inc)| {
                inc.len() == 2
                    && center.iter().all(|v| k.contains(v))
                    && inc.iter().any(|&(c, _)| c == a)
                    && inc.iter().any(|&(c, _)| c == b)
            })
        };
        let mut adj: BTreeMap<usize, Vec<usize>> = cells.iter().map(|&c| (c, Vec::new())).collect();
        for (i, &a) in cells.iter().enumerate() {
            for &b in &cells[i + 1..] {
                if adjacent(a, b) {
                    adj.get_mut(&a).unwrap().push(b);
                    adj.get_mut(&b).unwrap().push(a);
                }
            }
        }
        let bad = |reason: &str| AtlasError::Unsupported {
            vertex: center[0],
            reason: reason.to_string(),
        };
        if adj.values().any(|n| n.len() > 2) {
            return Err(bad("cells around the vertex do not form a fan"));
        }
        let ends: Vec<usize> = adj.iter().filter(|(_, n)| n.len() < 2).map(|(&c, _)| c).collect();
        let closed = ends.is_empty();
        let start = if closed { cells[0] } else { ends[0] };
        let mut order = vec![start];
        let mut prev = usize::MAX;
        let mut cur = start;
        loop {
            let next = adj[&cur].iter().copied().filter(|&n| n != prev && n != start).min();
            match next {
                Some(n) if !order.contains(&n) => {
                    order.push(n);
                    prev = cur;
                    cur = n;
                }
                _ => break,
            }
        }
        if order.len() != cells.len() {
            return Err(bad("cells around the vertex form several fans"));
        }
        Ok((order, closed))
    }
}

#[derive(Clone, Copy, Debug)]
struct Placement {
    cell: usize,
    offset: [i64; MAX_DIM],
    orient: Orientation,
}

impl Placement {
    fn corner_point(&self, raw_corner: usize, dim: usize) -> [i64; MAX_DIM] {
        let c = self.orient.apply_corner(raw_corner);
        let mut p = self.offset;
        for (a, v) in p.iter_mut().enumerate().take(dim) {
            *v += ((c >> a) & 1) as i64;
        }
        p
    }
}

/// Places a face-connected set of raw cells into an integer box, starting
/// from `cells[0]` in its own frame. `None` when the set is not a box.
fn place_box(topo: &Topo, cells: &[usize]) -> Option<(Vec<Placement>, [usize; MAX_DIM])> {
    let dim = topo.raw.dim;
    let set: BTreeSet<usize> = cells.iter().copied().collect();
    let mut placed: BTreeMap<usize, Placement> = BTreeMap::new();
    let mut queue = VecDeque::new();
    placed.insert(
        cells[0],
        Placement {
            cell: cells[0],
            offset: [0; MAX_DIM],
            orient: Orientation::identity(dim),
        },
    );
    queue.push_back(cells[0]);
    while let Some(c) = queue.pop_front() {
        let pc = placed[&c];
        for n in topo.neighbors(c) {
            if !set.contains(&n) || placed.contains_key(&n) {
                continue;
            }
            let shared: Vec<(usize, usize)> = topo.raw.cells[c]
                .iter()
                .enumerate()
                .filter_map(|(i, v)| topo.raw.cells[n].iter().position(|w| w == v).map(|j| (i, j)))
                .collect();
            let mut found = None;
            'search: for o in Orientation::all(dim) {
                for axis in 0..dim {
                    for step in [-1i64, 1] {
                        let mut offset = pc.offset;
                        offset[axis] += step;
                        let cand = Placement { cell: n, offset, orient: o };
                        if shared
                            .iter()
                            .all(|&(i, j)| pc.corner_point(i, dim) == cand.corner_point(j, dim))
                        {
                            found = Some(cand);
                            break 'search;
                        }
                    }
                }
            }
            placed.insert(n, found?);
            queue.push_back(n);
        }
    }
    if placed.len() != set.len() {
        return None;
    }
    let mut lo = [i64::MAX; MAX_DIM];
    let mut hi = [i64::MIN; MAX_DIM];
    for p in placed.values() {
        for a in 0..dim {
            lo[a] = lo[a].min(p.offset[a]);
            hi[a] = hi[a].max(p.offset[a] + 1);
        }
    }
    let mut extent = [1usize; MAX_DIM];
    for a in 0..dim {
        extent[a] = (hi[a] - lo[a]) as usize;
    }
    if extent.iter().take(dim).product::<usize>() != set.len() {
        return None;
    }
    // every raw vertex at one lattice point, distinct vertices apart
    let mut at: HashMap<[i64; MAX_DIM], usize> = HashMap::new();
    let mut out: Vec<Placement> = Vec::new();
    for &c in cells {
        let mut p = placed[&c];
        for a in 0..dim {
            p.offset[a] -= lo[a];
        }
        for (i, &v) in topo.raw.cells[c].iter().enumerate() {
            let q = p.corner_point(i, dim);
            if *at.entry(q).or_insert(v) != v {
                return None;
            }
        }
        out.push(p);
    }
    let mut by_vertex: HashMap<usize, [i64; MAX_DIM]> = HashMap::new();
    for (q, v) in &at {
        if by_vertex.insert(*v, *q).is_some() {
            return None;
        }
    }
    Some((out, extent))
}

/// One element of a generated chart: the raw cell and sub-cell index it
/// comes from, and the orientation from sub-cell to chart-element reference
/// coordinates.
#[derive(Clone, Copy, Debug)]
struct GenElement {
    cell: usize,
    sub: [usize; MAX_DIM],
    orient: Orientation,
}

struct GenChart {
    kind: ChartKind,
    elements: Vec<GenElement>,
    /// Raw cell placements of structured charts.
    placements: Vec<Placement>,
}

/// Builds an atlas with `n` elements per raw cell side.
pub fn atlas_from_patches(raw: &RawMesh, degree: usize, n: usize) -> Result<ProtoManifold, AtlasError> {
    if n == 0 {
        return Err(AtlasError::RawMesh("subdivision count must be positive".into()));
    }
    let topo = Topo::new(raw)?;
    let dim = raw.dim;
    let mut charts: Vec<GenChart> = Vec::new();
    let mut covered = vec![false; raw.cells.len()];
    let mut seen_sets: BTreeSet<Vec<usize>> = BTreeSet::new();

    let mut add_box = |cells: Vec<usize>, charts: &mut Vec<GenChart>, covered: &mut Vec<bool>| -> bool {
        let mut key = cells.clone();
        key.sort_unstable();
        if !seen_sets.insert(key) {
            return true;
        }
        let Some((placements, extent)) = place_box(&topo, &cells) else {
            return false;
        };
        for p in &placements {
            covered[p.cell] = true;
        }
        charts.push(structured_chart(&placements, &extent, dim, degree, n));
        true
    };

    // pairs across interior faces
    let interior: Vec<(usize, usize)> = topo
        .faces
        .values()
        .filter(|inc| inc.len() == 2)
        .map(|inc| (inc[0].0, inc[1].0))
        .collect();
    for &(a, b) in &interior {
        if !add_box(vec![a, b], &mut charts, &mut covered) {
            return Err(AtlasError::Unsupported {
                vertex: raw.cells[a][0],
                reason: format!("cells {a} and {b} cannot be placed side by side"),
            });
        }
    }
    // blocks around regular interior edges (3D) and vertices
    if dim == 3 {
        for e in raw_edges(raw) {
            let cells = topo.vertex_cells[e.0]
                .iter()
                .copied()
                .filter(|&c| raw.cells[c].contains(&e.1))
                .collect::<Vec<_>>();
            if cells.len() == 4 && !is_boundary_edge(&topo, e) {
                add_box(cells, &mut charts, &mut covered);
            }
        }
    }
    let regular_valence = 1usize << dim;
    for v in 0..raw.vertices.len() {
        let cells = topo.vertex_cells[v].clone();
        if cells.len() == regular_valence && !topo.boundary_vertices.contains(&v) {
            add_box(cells, &mut charts, &mut covered);
        }
    }
    for c in 0..raw.cells.len() {
        if !covered[c] {
            add_box(vec![c], &mut charts, &mut covered);
        }
    }

    // unstructured charts
    if dim == 2 {
        for v in 0..raw.vertices.len() {
            let k = topo.vertex_cells[v].len();
            let boundary = topo.boundary_vertices.contains(&v);
            if k == 0 {
                continue;
            }
            if !boundary && k == 2 {
                return Err(AtlasError::Unsupported {
                    vertex: v,
                    reason: "interior vertex of valence 2".into(),
                });
            }
            let needs_chart = if boundary { k >= 3 } else { k != 4 };
            let (ring, closed) = topo.ring(&[v])?;
            if closed == boundary {
                return Err(AtlasError::Unsupported {
                    vertex: v,
                    reason: "cells around the vertex do not match its boundary status".into(),
                });
            }
            if needs_chart {
                charts.push(vertex_chart_2d(&topo, v, &ring, closed, n));
            }
        }
    } else {
        charts.extend(edge_charts(&topo, degree, n)?);
    }

    // transitions from shared sub-cells
    let mut by_sub: BTreeMap<(usize, [usize; MAX_DIM]), Vec<(usize, usize, Orientation)>> = BTreeMap::new();
    for (ci, ch) in charts.iter().enumerate() {
        for (e, g) in ch.elements.iter().enumerate() {
            by_sub.entry((g.cell, g.sub)).or_default().push((ci, e, g.orient));
        }
    }
    let mut pairs: BTreeMap<(usize, usize), Vec<ElementPair>> = BTreeMap::new();
    for insts in by_sub.values() {
        for &(ci, ei, oi) in insts {
            for &(cj, ej, oj) in insts {
                if ci == cj {
                    continue;
                }
                pairs.entry((ci, cj)).or_default().push(ElementPair {
                    source: ei,
                    target: ej,
                    orient: oj.after(&oi.inverse()),
                });
            }
        }
    }
    let transitions = pairs
        .into_iter()
        .map(|((s, t), mut ps)| {
            ps.sort_by_key(|p| p.source);
            TransitionMap {
                source: ChartId(s),
                target: ChartId(t),
                pairs: ps,
            }
        })
        .collect();

    // frames: each raw cell in the first structured chart holding it
    let mut frames = Vec::new();
    for c in 0..raw.cells.len() {
        let (ci, pl) = charts
            .iter()
            .enumerate()
            .find_map(|(ci, ch)| ch.placements.iter().find(|p| p.cell == c).map(|p| (ci, *p)))
            .expect("every raw cell lies in a structured chart");
        let o = pl.orient;
        let zero = o.apply(&[0.0; MAX_DIM]);
        let mut origin = [0.0; MAX_DIM];
        let mut matrix = [[0.0; MAX_DIM]; MAX_DIM];
        for j in 0..dim {
            origin[j] = pl.offset[j] as f64 + zero[j];
        }
        for a in 0..dim {
            let mut e = [0.0; MAX_DIM];
            e[a] = 1.0;
            let img = o.apply(&e);
            for j in 0..dim {
                matrix[j][a] = img[j] - zero[j];
            }
        }
        frames.push(PatchFrame {
            chart: ChartId(ci),
            origin,
            matrix,
            corners: raw.cells[c].iter().map(|&v| raw.vertices[v]).collect(),
        });
    }

    let mut out_charts = Vec::with_capacity(charts.len());
    for (ci, ch) in charts.into_iter().enumerate() {
        let gamma = chart_gamma(&topo, &ch, n);
        out_charts.push(Chart::new(ChartId(ci), dim, ch.kind, gamma)?);
    }
    Ok(ProtoManifold {
        dim,
        charts: out_charts,
        transitions,
        frames,
    })
}

fn raw_edges(raw: &RawMesh) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for cell in &raw.cells {
        for c in 0..cell.len() {
            for a in 0..raw.dim {
                let d = c | (1 << a);
                if d != c {
                    let (u, v) = (cell[c], cell[d]);
                    out.insert((u.min(v), u.max(v)));
                }
            }
        }
    }
    out
}

fn is_boundary_edge(topo: &Topo, e: (usize, usize)) -> bool {
    topo.faces
        .iter()
        .any(|(k, inc)| inc.len() == 1 && k.contains(&e.0) && k.contains(&e.1))
}

/// Knot line over `cells` raw cells with `n` elements each: open ends and
/// multiplicity `p` at raw interfaces.
fn raw_knot_line(cells: usize, n: usize, p: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let total = cells * n;
    for j in 0..=total {
        let x = j as f64 / n as f64;
        let mult = if j == 0 || j == total {
            p + 1
        } else if j % n == 0 {
            p
        } else {
            1
        };
        out.extend(std::iter::repeat_n(x, mult));
    }
    out
}

fn structured_chart(placements: &[Placement], extent: &[usize; MAX_DIM], dim: usize, p: usize, n: usize) -> GenChart {
    let knots: Vec<Vec<f64>> = (0..dim).map(|a| raw_knot_line(extent[a], n, p)).collect();
    let grid: Vec<usize> = (0..dim).map(|a| extent[a] * n).collect();
    let total: usize = grid.iter().product();
    let mut elements: Vec<Option<GenElement>> = vec![None; total];
    let subs = n.pow(dim as u32);
    for pl in placements {
        for lin in 0..subs {
            let mut sub = [0usize; MAX_DIM];
            let mut rem = lin;
            for s in sub.iter_mut().take(dim) {
                *s = rem % n;
                rem /= n;
            }
            let mut idx = 0;
            let mut stride = 1;
            let mut pos = [0usize; MAX_DIM];
            for a in 0..dim {
                let j = pl.orient.perm[a] as usize;
                let s = if pl.orient.flip[a] { n - 1 - sub[a] } else { sub[a] };
                pos[j] = pl.offset[j] as usize * n + s;
            }
            for j in 0..dim {
                idx += pos[j] * stride;
                stride *= grid[j];
            }
            elements[idx] = Some(GenElement {
                cell: pl.cell,
                sub,
                orient: pl.orient,
            });
        }
    }
    GenChart {
        kind: ChartKind::Structured { knots },
        elements: elements.into_iter().map(|e| e.expect("box fully placed")).collect(),
        placements: placements.to_vec(),
    }
}

fn star_direction(l: usize, step: f64) -> [f64; 2] {
    let t = l as f64 * step;
    [t.cos(), t.sin()]
}

/// Parallelogram segments of a ring around the origin; segment `l` spans
/// directions `l` and `l + 1`.
pub fn star_segments(k: usize, closed: bool, scale: f64) -> Vec<Vec<Point>> {
    let step = if closed {
        2.0 * std::f64::consts::PI / k as f64
    } else {
        (1.5 * std::f64::consts::PI / k as f64).min(0.5 * std::f64::consts::PI)
    };
    (0..k)
        .map(|l| {
            let a = star_direction(l, step);
            let b = star_direction(l + 1, step);
            vec![
                [0.0; MAX_DIM],
                [scale * a[0], scale * a[1], 0.0],
                [scale * b[0], scale * b[1], 0.0],
                [scale * (a[0] + b[0]), scale * (a[1] + b[1]), 0.0],
            ]
        })
        .collect()
}

/// Orientation from raw sub-cell reference coordinates to a ring element
/// whose chart axis `j` runs along raw axis `axes[j]`, starting from raw
/// corner `base`.
fn ring_orientation(dim: usize, axes: &[usize], base: usize) -> Orientation {
    let mut o = Orientation::identity(dim);
    for (j, &a) in axes.iter().enumerate() {
        o.perm[a] = j as u8;
        o.flip[a] = (base >> a) & 1 == 1;
    }
    o
}

fn sub_at_corner(corner: usize, dim: usize, n: usize) -> [usize; MAX_DIM] {
    let mut sub = [0; MAX_DIM];
    for (a, s) in sub.iter_mut().enumerate().take(dim) {
        *s = if (corner >> a) & 1 == 1 { n - 1 } else { 0 };
    }
    sub
}

fn vertex_chart_2d(topo: &Topo, v: usize, ring: &[usize], closed: bool, n: usize) -> GenChart {
    let raw = topo.raw;
    let k = ring.len();
    let elements = ring
        .iter()
        .enumerate()
        .map(|(l, &cell)| {
            let cv = raw.cells[cell].iter().position(|&w| w == v).unwrap();
            // axis whose edge from v is shared with the previous cell
            let prev = if l > 0 {
                Some(ring[l - 1])
            } else if closed {
                Some(ring[k - 1])
            } else {
                None
            };
            let next = if l + 1 < k {
                Some(ring[l + 1])
            } else if closed {
                Some(ring[0])
            } else {
                None
            };
            let shares = |other: Option<usize>, a: usize| -> bool {
                let w = raw.cells[cell][cv ^ (1 << a)];
                other.is_some_and(|o| raw.cells[o].contains(&w))
            };
            let first = if shares(prev, 0) || shares(next, 1) { 0 } else { 1 };
            let axes = [first, 1 - first];
            GenElement {
                cell,
                sub: sub_at_corner(cv, 2, n),
                orient: ring_orientation(2, &axes, cv),
            }
        })
        .collect();
    let segments = star_segments(k, closed, 1.0 / n as f64);
    GenChart {
        kind: if closed {
            ChartKind::UnstructuredVertex2D { segments }
        } else {
            ChartKind::Boundary2D { segments }
        },
        elements,
        placements: Vec::new(),
    }
}

/// Edge charts along chains of extraordinary raw edges (`d = 3`).
fn edge_charts(topo: &Topo, degree: usize, n: usize) -> Result<Vec<GenChart>, AtlasError> {
    let raw = topo.raw;
    let mut extra: Vec<((usize, usize), usize)> = Vec::new();
    for e in raw_edges(raw) {
        let k = topo.vertex_cells[e.0].iter().filter(|&&c| raw.cells[c].contains(&e.1)).count();
        let boundary = is_boundary_edge(topo, e);
        if boundary {
            if k > 2 {
                return Err(AtlasError::Unsupported {
                    vertex: e.0,
                    reason: format!("boundary edge ({}, {}) of valence {k} needs a 3D boundary chart", e.0, e.1),
                });
            }
        } else if k != 4 {
            if k < 3 {
                return Err(AtlasError::Unsupported {
                    vertex: e.0,
                    reason: format!("interior edge ({}, {}) of valence {k}", e.0, e.1),
                });
            }
            extra.push((e, k));
        }
    }
    let mut at_vertex: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, (e, _)) in extra.iter().enumerate() {
        at_vertex.entry(e.0).or_default().push(i);
        at_vertex.entry(e.1).or_default().push(i);
    }
    for (&v, es) in &at_vertex {
        let boundary = topo.boundary_vertices.contains(&v);
        let ok = match es.len() {
            1 => boundary,
            2 => !boundary && extra[es[0]].1 == extra[es[1]].1,
            _ => false,
        };
        if !ok {
            return Err(AtlasError::Unsupported {
                vertex: v,
                reason: "fully unstructured vertex".into(),
            });
        }
    }
    let mut used = vec![false; extra.len()];
    let mut out = Vec::new();
    for (&start, es) in &at_vertex {
        if es.len() != 1 || used[es[0]] {
            continue;
        }
        // walk the chain from a boundary end
        let mut chain = vec![start];
        let mut cur = start;
        let mut edge = es[0];
        loop {
            used[edge] = true;
            let (a, b) = extra[edge].0;
            let next = if a == cur { b } else { a };
            chain.push(next);
            cur = next;
            match at_vertex[&cur].iter().find(|&&i| !used[i]) {
                Some(&i) => edge = i,
                None => break,
            }
        }
        out.push(edge_chart(topo, &chain, degree, n)?);
    }
    if let Some(i) = used.iter().position(|u| !u) {
        return Err(AtlasError::Unsupported {
            vertex: extra[i].0 .0,
            reason: "closed loop of extraordinary edges".into(),
        });
    }
    Ok(out)
}

fn edge_chart(topo: &Topo, chain: &[usize], p: usize, n: usize) -> Result<GenChart, AtlasError> {
    let raw = topo.raw;
    let m = chain.len() - 1;
    // consistent ring order along the chain
    let mut rings: Vec<Vec<usize>> = Vec::with_capacity(m);
    let (first, closed) = topo.ring(&[chain[0], chain[1]])?;
    if !closed {
        return Err(AtlasError::Unsupported {
            vertex: chain[0],
            reason: "extraordinary edge without a closed ring of cells".into(),
        });
    }
    rings.push(first);
    for t in 1..m {
        let (cells, _) = topo.ring(&[chain[t], chain[t + 1]])?;
        let prev = &rings[t - 1];
        let mut next = Vec::with_capacity(prev.len());
        for &pc in prev {
            let nb = topo.neighbors(pc);
            let hit = cells.iter().copied().find(|c| nb.contains(c)).ok_or(AtlasError::Unsupported {
                vertex: chain[t],
                reason: "cells along the extraordinary edge chain do not stack".into(),
            })?;
            next.push(hit);
        }
        rings.push(next);
    }
    let k = rings[0].len();
    let mut elements = Vec::with_capacity(k * m * n);
    for mm in 0..m * n {
        let t = mm / n;
        let along = mm % n;
        for l in 0..k {
            let cell = rings[t][l];
            let cells = &raw.cells[cell];
            let ca = cells.iter().position(|&w| w == chain[t]).unwrap();
            let cb = cells.iter().position(|&w| w == chain[t + 1]).unwrap();
            let az = (ca ^ cb).trailing_zeros() as usize;
            let prev = rings[t][(l + k - 1) % k];
            let others: Vec<usize> = (0..3).filter(|&a| a != az).collect();
            // the axis whose face through the edge is shared with `prev`
            let in_prev = |a: usize| raw.cells[prev].contains(&cells[ca ^ (1 << a)]);
            let first = if in_prev(others[0]) { others[0] } else { others[1] };
            let second = if first == others[0] { others[1] } else { others[0] };
            let mut sub = sub_at_corner(ca, 3, n);
            sub[az] = if (ca >> az) & 1 == 1 { n - 1 - along } else { along };
            elements.push(GenElement {
                cell,
                sub,
                orient: ring_orientation(3, &[first, second, az], ca),
            });
        }
    }
    let section = star_segments(k, true, 1.0 / n as f64);
    Ok(GenChart {
        kind: ChartKind::UnstructuredEdge3D {
            section,
            axis_knots: raw_knot_line(m, n, p),
        },
        elements,
        placements: Vec::new(),
    })
}

/// Element faces lying on the raw boundary.
fn chart_gamma(topo: &Topo, ch: &GenChart, n: usize) -> Vec<(usize, usize)> {
    let dim = topo.raw.dim;
    let mut out = Vec::new();
    for (e, g) in ch.elements.iter().enumerate() {
        for a in 0..dim {
            for side in 0..2 {
                let at_side = if side == 1 { g.sub[a] == n - 1 } else { g.sub[a] == 0 };
                if at_side && topo.is_boundary_face(g.cell, 2 * a + side) {
                    let j = g.orient.perm[a] as usize;
                    let s = side ^ (g.orient.flip[a] as usize);
                    out.push((e, 2 * j + s));
                }
            }
        }
    }
    out.sort_unstable();
    out
}
