//! Uniform dyadic refinement of proto-manifolds.
//!
//! Structured charts and edge-chart axes are bisected everywhere. Ring
//! charts keep only the children touching their special vertex (edge), so
//! they shrink by half per level while the overlap structure is preserved.

use crate::atlas::{breakpoints, Chart, ChartKind, ElementPair, ProtoManifold, TransitionMap};
use crate::error::AtlasError;
use crate::geom::{corner_count, corner_position, CellMap, Point};

/// Knot vector with the midpoint of every nonempty interval inserted once.
pub fn bisect_knots(knots: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * knots.len());
    for (i, &k) in knots.iter().enumerate() {
        if i > 0 && k > knots[i - 1] {
            out.push(0.5 * (knots[i - 1] + k));
        }
        out.push(k);
    }
    out
}

fn halve_ring(segments: &[Vec<Point>], dim: usize) -> Vec<Vec<Point>> {
    segments
        .iter()
        .map(|seg| {
            let cell = CellMap::new(dim, seg.clone());
            (0..corner_count(dim))
                .map(|c| {
                    let mut r = corner_position(c, dim);
                    for v in r.iter_mut() {
                        *v *= 0.5;
                    }
                    cell.eval(&r)
                })
                .collect()
        })
        .collect()
}

/// Maps `(element, child corner)` of the coarse chart to the fine element,
/// if that child is kept.
struct ChildIndex {
    dim: usize,
    kind: Kind,
}

enum Kind {
    Grid(Vec<usize>),
    Ring,
    Edge { k: usize },
}

impl ChildIndex {
    fn new(chart: &Chart, dim: usize) -> Self {
        let kind = match &chart.kind {
            ChartKind::Structured { knots } => {
                Kind::Grid(knots.iter().map(|k| breakpoints(k).len() - 1).collect())
            }
            ChartKind::UnstructuredEdge3D { section, .. } => Kind::Edge { k: section.len() },
            _ => Kind::Ring,
        };
        Self { dim, kind }
    }

    fn child(&self, e: usize, b: usize) -> Option<usize> {
        match &self.kind {
            Kind::Grid(grid) => {
                let mut rem = e;
                let mut idx = 0;
                let mut stride = 1;
                for (a, &n) in grid.iter().enumerate() {
                    let i = rem % n;
                    rem /= n;
                    idx += (2 * i + ((b >> a) & 1)) * stride;
                    stride *= 2 * n;
                }
                Some(idx)
            }
            Kind::Ring => (b == 0).then_some(e),
            Kind::Edge { k } => {
                if b & 3 != 0 {
                    return None;
                }
                let (l, m) = (e % k, e / k);
                Some(l + k * (2 * m + (b >> 2)))
            }
        }
    }

    fn children(&self) -> usize {
        corner_count(self.dim)
    }
}

/// One level of uniform refinement.
pub fn refine(proto: &ProtoManifold) -> Result<ProtoManifold, AtlasError> {
    let dim = proto.dim;
    let index: Vec<ChildIndex> = proto.charts.iter().map(|c| ChildIndex::new(c, dim)).collect();
    let mut charts = Vec::with_capacity(proto.charts.len());
    for (c, idx) in proto.charts.iter().zip(&index) {
        let kind = match &c.kind {
            ChartKind::Structured { knots } => ChartKind::Structured {
                knots: knots.iter().map(|k| bisect_knots(k)).collect(),
            },
            ChartKind::UnstructuredVertex2D { segments } => ChartKind::UnstructuredVertex2D {
                segments: halve_ring(segments, dim),
            },
            ChartKind::UnstructuredVertex3D { segments } => ChartKind::UnstructuredVertex3D {
                segments: halve_ring(segments, dim),
            },
            ChartKind::Boundary2D { segments } => ChartKind::Boundary2D {
                segments: halve_ring(segments, dim),
            },
            ChartKind::UnstructuredEdge3D { section, axis_knots } => ChartKind::UnstructuredEdge3D {
                section: halve_ring(section, 2),
                axis_knots: bisect_knots(axis_knots),
            },
        };
        let mut gamma = Vec::new();
        for &(e, f) in &c.gamma {
            let (axis, side) = (f / 2, f % 2);
            for b in 0..idx.children() {
                if (b >> axis) & 1 == side {
                    if let Some(child) = idx.child(e, b) {
                        gamma.push((child, f));
                    }
                }
            }
        }
        gamma.sort_unstable();
        charts.push(Chart::new(c.id, dim, kind, gamma)?);
    }
    let transitions = proto
        .transitions
        .iter()
        .map(|t| {
            let (si, ti) = (&index[t.source.0], &index[t.target.0]);
            let mut pairs = Vec::new();
            for p in &t.pairs {
                for b in 0..si.children() {
                    let tb = p.orient.apply_corner(b);
                    if let (Some(s), Some(d)) = (si.child(p.source, b), ti.child(p.target, tb)) {
                        pairs.push(ElementPair {
                            source: s,
                            target: d,
                            orient: p.orient,
                        });
                    }
                }
            }
            pairs.sort_by_key(|p| p.source);
            TransitionMap {
                source: t.source,
                target: t.target,
                pairs,
            }
        })
        .filter(|t| !t.pairs.is_empty())
        .collect();
    Ok(ProtoManifold {
        dim,
        charts,
        transitions,
        frames: proto.frames.clone(),
    })
}

/// `levels` successive refinements.
pub fn refine_levels(proto: &ProtoManifold, levels: usize) -> Result<ProtoManifold, AtlasError> {
    let mut out = proto.clone();
    for _ in 0..levels {
        out = refine(&out)?;
    }
    Ok(out)
}

