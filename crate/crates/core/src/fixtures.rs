//! Ready-made raw meshes and atlases used by tests, benches and the CLI.

use std::f64::consts::PI;

use crate::basis::{proto_basis, ProtoOverride, ProtoRepr};
use crate::atlas::{Chart, ChartId, ChartKind, ElementPair, PatchFrame, ProtoManifold, TransitionMap};
use crate::cover::{atlas_from_patches, RawMesh};
use crate::error::AtlasError;
use crate::geom::{Orientation, Point};

fn p2(x: f64, y: f64) -> Point {
    [x, y, 0.0]
}

/// `k` quads around a vertex at the origin: quad `l` is
/// `(0, P_l, P_l + P_{l+1}, P_{l+1})` with `P_l` the unit vector at angle
/// `2 pi l / k`.
pub fn star_raw(k: usize) -> RawMesh {
    let dir = |l: usize| {
        let t = 2.0 * PI * (l % k) as f64 / k as f64;
        p2(t.cos(), t.sin())
    };
    let mut vertices = vec![p2(0.0, 0.0)];
    vertices.extend((0..k).map(dir));
    for l in 0..k {
        let (a, b) = (dir(l), dir(l + 1));
        vertices.push(p2(a[0] + b[0], a[1] + b[1]));
    }
    let cells = (0..k)
        .map(|l| vec![0, 1 + l, 1 + k + l, 1 + (l + 1) % k])
        .collect();
    RawMesh::from_cyclic(2, vertices, cells).expect("valid star")
}

/// Three quads around a boundary vertex with a reflex corner.
pub fn lshape_raw() -> RawMesh {
    let dir = |l: usize| {
        let t = 0.5 * PI * l as f64;
        p2(t.cos().round(), t.sin().round())
    };
    let mut vertices = vec![p2(0.0, 0.0)];
    vertices.extend((0..4).map(dir));
    for l in 0..3 {
        let (a, b) = (dir(l), dir(l + 1));
        vertices.push(p2(a[0] + b[0], a[1] + b[1]));
    }
    let cells = (0..3).map(|l| vec![0, 1 + l, 5 + l, 2 + l]).collect();
    RawMesh::from_cyclic(2, vertices, cells).expect("valid L-shape")
}

/// `m x m` grid of unit quads.
pub fn grid_raw(m: usize) -> RawMesh {
    let id = |i: usize, j: usize| i + (m + 1) * j;
    let vertices = (0..=m)
        .flat_map(|j| (0..=m).map(move |i| p2(i as f64, j as f64)))
        .collect();
    let cells = (0..m)
        .flat_map(|j| (0..m).map(move |i| vec![id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]))
        .collect();
    RawMesh::from_cyclic(2, vertices, cells).expect("valid grid")
}

/// Surface of the unit cube: six quads, eight valence-3 vertices, oriented
/// outward.
pub fn cube_raw() -> RawMesh {
    let vertices: Vec<Point> = (0..8)
        .map(|v| [(v & 1) as f64, ((v >> 1) & 1) as f64, ((v >> 2) & 1) as f64])
        .collect();
    let mut cells = Vec::new();
    for axis in 0..3 {
        for side in 0..2 {
            let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
            let at = |i: usize, j: usize| (side << axis) | (i << a) | (j << b);
            // (a, b, axis) is a right-handed frame
            let mut quad = vec![at(0, 0), at(1, 0), at(1, 1), at(0, 1)];
            if side == 0 {
                quad.reverse();
            }
            cells.push(quad);
        }
    }
    RawMesh::from_cyclic(2, vertices, cells).expect("valid cube")
}

/// The `k`-star extruded into `layers` hex layers.
pub fn extruded_star_raw(k: usize, layers: usize) -> RawMesh {
    let base = star_raw(k);
    let nv = base.vertices.len();
    let mut vertices = Vec::new();
    for t in 0..=layers {
        vertices.extend(base.vertices.iter().map(|v| [v[0], v[1], t as f64]));
    }
    let mut cells = Vec::new();
    for t in 0..layers {
        for q in base.cyclic_cells() {
            let mut hex: Vec<usize> = q.iter().map(|&v| v + t * nv).collect();
            hex.extend(q.iter().map(|&v| v + (t + 1) * nv));
            cells.push(hex);
        }
    }
    RawMesh::from_cyclic(3, vertices, cells).expect("valid extrusion")
}

/// Open knot vector on `[0, len]` with uniform elements of width `h`.
pub fn uniform_knots(p: usize, len: f64, h: f64) -> Vec<f64> {
    let n = (len / h).round() as usize;
    let mut k = vec![0.0; p + 1];
    for j in 1..n {
        k.push(j as f64 * h);
    }
    k.extend(std::iter::repeat_n(len, p + 1));
    k
}

/// Extraordinary-vertex fixture: `k` patches around one vertex, each split
/// into `(p + 1)^2` elements so that every C0 line is `p + 1` element edges
/// long.
pub fn star_atlas(k: usize, p: usize) -> Result<ProtoManifold, AtlasError> {
    atlas_from_patches(&star_raw(k), p, p + 1)
}

pub fn lshape_atlas(p: usize) -> Result<ProtoManifold, AtlasError> {
    atlas_from_patches(&lshape_raw(), p, p + 1)
}

/// One structured chart on `[0, 1]^2` with `n` uniform elements per axis,
/// its whole boundary retained.
pub fn square_atlas(p: usize, n: usize) -> Result<ProtoManifold, AtlasError> {
    let knots = uniform_knots(p, 1.0, 1.0 / n as f64);
    let mut chart = Chart::new(
        ChartId(0),
        2,
        ChartKind::Structured {
            knots: vec![knots.clone(), knots],
        },
        Vec::new(),
    )?;
    chart.gamma = chart.mesh.boundary_faces(2);
    Ok(ProtoManifold {
        dim: 2,
        charts: vec![chart],
        transitions: Vec::new(),
        frames: vec![unit_frame(0, [0.0, 0.0])],
    })
}

/// Flat torus of period 2 covered by four overlapping square charts of side
/// 1.75, offsets `(a, b)` in `{0, 1}^2`, element width 1/8 and simple knots.
pub fn torus_atlas() -> Result<ProtoManifold, AtlasError> {
    const PERIOD: usize = 16;
    const SIDE: usize = 14;
    let knots: Vec<f64> = (0..=SIDE).map(|j| j as f64 / 8.0).collect();
    let offsets = [(0, 0), (1, 0), (0, 1), (1, 1)];
    let mut charts = Vec::new();
    for c in 0..offsets.len() {
        charts.push(Chart::new(
            ChartId(c),
            2,
            ChartKind::Structured {
                knots: vec![knots.clone(); 2],
            },
            Vec::new(),
        )?);
    }
    // local element index along one axis of chart offset `a`, if covered
    let local = |global: usize, a: usize| -> Option<usize> {
        let l = (global + PERIOD - 8 * a) % PERIOD;
        (l < SIDE).then_some(l)
    };
    let mut transitions = Vec::new();
    for (i, &(ai, bi)) in offsets.iter().enumerate() {
        for (j, &(aj, bj)) in offsets.iter().enumerate() {
            if i == j {
                continue;
            }
            let mut pairs = Vec::new();
            for gy in 0..PERIOD {
                for gx in 0..PERIOD {
                    if let (Some(xi), Some(yi), Some(xj), Some(yj)) =
                        (local(gx, ai), local(gy, bi), local(gx, aj), local(gy, bj))
                    {
                        pairs.push(ElementPair {
                            source: xi + SIDE * yi,
                            target: xj + SIDE * yj,
                            orient: Orientation::identity(2),
                        });
                    }
                }
            }
            pairs.sort_by_key(|p| p.source);
            transitions.push(TransitionMap {
                source: ChartId(i),
                target: ChartId(j),
                pairs,
            });
        }
    }
    // global unit square (a, b) lies in chart (a, b) at the chart origin
    let frames = offsets
        .iter()
        .enumerate()
        .map(|(c, &(a, b))| unit_frame(c, [a as f64, b as f64]))
        .collect();
    Ok(ProtoManifold {
        dim: 2,
        charts,
        transitions,
        frames,
    })
}

/// Identity frame of the unit square at the chart origin whose physical
/// corners start at `at`.
fn unit_frame(chart: usize, at: [f64; 2]) -> PatchFrame {
    let mut matrix = [[0.0; 3]; 3];
    matrix[0][0] = 1.0;
    matrix[1][1] = 1.0;
    PatchFrame {
        chart: ChartId(chart),
        origin: [0.0; 3],
        matrix,
        corners: (0..4)
            .map(|c| p2(at[0] + (c & 1) as f64, at[1] + (c >> 1) as f64))
            .collect(),
    }
}

fn strip_chart(id: usize, p: usize) -> Result<Chart, AtlasError> {
    Chart::new(
        ChartId(id),
        2,
        ChartKind::Structured {
            knots: vec![uniform_knots(p, 1.0, 0.1), uniform_knots(p, 0.1, 0.1)],
        },
        Vec::new(),
    )
}

fn translation(source: usize, target: usize, map: &[(usize, usize)]) -> TransitionMap {
    TransitionMap {
        source: ChartId(source),
        target: ChartId(target),
        pairs: map
            .iter()
            .map(|&(s, t)| ElementPair {
                source: s,
                target: t,
                orient: Orientation::identity(2),
            })
            .collect(),
    }
}

/// Three one-element charts glued pairwise; the gluing of the first and
/// third is a quarter turn while the other two are identities. Every
/// transition has its exact inverse stored.
pub fn broken_cocycle_atlas(p: usize) -> Result<ProtoManifold, AtlasError> {
    let knots = uniform_knots(p, 1.0, 1.0);
    let charts = (0..3)
        .map(|c| {
            Chart::new(
                ChartId(c),
                2,
                ChartKind::Structured {
                    knots: vec![knots.clone(), knots.clone()],
                },
                Vec::new(),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let turn = Orientation {
        dim: 2,
        perm: [1, 0, 2],
        flip: [true, false, false],
    };
    let glue = |s: usize, t: usize, o: Orientation| TransitionMap {
        source: ChartId(s),
        target: ChartId(t),
        pairs: vec![ElementPair {
            source: 0,
            target: 0,
            orient: o,
        }],
    };
    let id = Orientation::identity(2);
    Ok(ProtoManifold {
        dim: 2,
        charts,
        transitions: vec![
            glue(0, 1, id),
            glue(1, 0, id),
            glue(1, 2, id),
            glue(2, 1, id),
            glue(0, 2, turn),
            glue(2, 0, turn.inverse()),
        ],
        frames: Vec::new(),
    })
}

/// Two strips of ten elements of width 0.1 overlapping in half their
/// length; the stored reverse map is shifted by one element.
pub fn broken_inverse_atlas(p: usize) -> Result<ProtoManifold, AtlasError> {
    let forward: Vec<(usize, usize)> = (0..5).map(|e| (5 + e, e)).collect();
    let backward: Vec<(usize, usize)> = (0..4).map(|e| (e, 6 + e)).collect();
    Ok(ProtoManifold {
        dim: 2,
        charts: vec![strip_chart(0, p)?, strip_chart(1, p)?],
        transitions: vec![translation(0, 1, &forward), translation(1, 0, &backward)],
        frames: Vec::new(),
    })
}

/// Two strips whose gluing sends two adjacent elements to swapped targets.
pub fn element_mismatch_atlas(p: usize) -> Result<ProtoManifold, AtlasError> {
    let forward = [(5, 1), (6, 0), (7, 2), (8, 3), (9, 4)];
    let backward: Vec<(usize, usize)> = forward.iter().map(|&(s, t)| (t, s)).collect();
    Ok(ProtoManifold {
        dim: 2,
        charts: vec![strip_chart(0, p)?, strip_chart(1, p)?],
        transitions: vec![translation(0, 1, &forward), translation(1, 0, &backward)],
        frames: Vec::new(),
    })
}

/// The valence-3 atlas with its vertex chart duplicated.
pub fn overlapping_vertex_charts_atlas(p: usize) -> Result<ProtoManifold, AtlasError> {
    let mut proto = star_atlas(3, p)?;
    let v = proto
        .charts
        .iter()
        .position(|c| c.kind.is_vertex_like())
        .expect("star atlas has a vertex chart");
    let copy = proto.charts.len();
    let mut chart = proto.charts[v].clone();
    chart.id = ChartId(copy);
    let n = chart.element_count();
    proto.charts.push(chart);
    let extra: Vec<TransitionMap> = proto
        .transitions
        .iter()
        .filter(|t| t.source.0 == v || t.target.0 == v)
        .map(|t| {
            let swap = |c: ChartId| if c.0 == v { ChartId(copy) } else { c };
            TransitionMap {
                source: swap(t.source),
                target: swap(t.target),
                pairs: t.pairs.clone(),
            }
        })
        .collect();
    proto.transitions.extend(extra);
    let all: Vec<(usize, usize)> = (0..n).map(|e| (e, e)).collect();
    proto.transitions.push(translation(v, copy, &all));
    proto.transitions.push(translation(copy, v, &all));
    Ok(proto)
}

/// The cube surface covered without subdividing its faces, so every
/// element touches four extraordinary vertices.
pub fn two_extraordinary_atlas(p: usize) -> Result<ProtoManifold, AtlasError> {
    atlas_from_patches(&cube_raw(), p, 1)
}

/// `square_atlas(2, 4)` plus an override that gives one interior function the
/// x-knots `[0.25, 0.5, 0.5, 0.75]`. The window is aligned with the mesh but
/// overlaps none of its neighbours, so dual compatibility fails.
pub fn incompatible_square() -> Result<(ProtoManifold, Vec<ProtoOverride>), AtlasError> {
    let proto = square_atlas(2, 4)?;
    let target = [0.25, 0.5, 0.75, 1.0];
    let local = proto_basis(&proto.charts[0], 2, 2)
        .expect("square basis")
        .iter()
        .position(|f| matches!(&f.repr, ProtoRepr::Tensor { knots } if knots.iter().all(|k| k.knots() == target)))
        .expect("square has an interior function");
    let over = ProtoOverride {
        chart: ChartId(0),
        local,
        knots: vec![vec![0.25, 0.5, 0.5, 0.75], target.to_vec()],
    };
    Ok((proto, vec![over]))
}
