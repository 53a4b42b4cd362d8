//! The parameter manifold: equivalence classes of chart elements and
//! vertices under the transition maps.

use std::collections::{BTreeMap, HashMap, VecDeque};

use petgraph::unionfind::UnionFind;

use crate::atlas::{ChartId, ElementRef, ProtoManifold};
use crate::error::AtlasError;
use crate::geom::{Orientation, Point};

/// A point given in the coordinates of one chart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointOnChart {
    pub chart: ChartId,
    pub coords: Point,
}

/// One chart instance of an element orbit. `orient` maps the canonical
/// instance's reference coordinates to this instance's.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Instance {
    pub element: ElementRef,
    pub orient: Orientation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElementOrbit {
    /// Sorted by `(chart, element)`; the first entry is canonical.
    pub members: Vec<Instance>,
}

impl ElementOrbit {
    pub fn canonical(&self) -> ElementRef {
        self.members[0].element
    }

    pub fn instance_on(&self, chart: ChartId) -> Option<&Instance> {
        self.members.iter().find(|m| m.element.chart == chart)
    }
}

/// Groups `0..n` by label, ordering groups by their smallest member.
pub(crate) fn group_labels(labels: &[usize]) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut first: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        first.entry(l).or_insert(i);
    }
    let mut order: Vec<(usize, usize)> = first.into_iter().map(|(l, i)| (i, l)).collect();
    order.sort_unstable();
    let remap: HashMap<usize, usize> = order
        .iter()
        .enumerate()
        .map(|(new, &(_, l))| (l, new))
        .collect();
    let mut groups = vec![Vec::new(); order.len()];
    let ids: Vec<usize> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let g = remap[l];
            groups[g].push(i);
            g
        })
        .collect();
    (ids, groups)
}

#[derive(Clone, Debug)]
pub struct ParameterManifold {
    pub proto: ProtoManifold,
    element_offsets: Vec<usize>,
    element_orbit: Vec<usize>,
    pub orbits: Vec<ElementOrbit>,
    vertex_offsets: Vec<usize>,
    vertex_orbit: Vec<usize>,
    pub vertex_orbit_count: usize,
}

impl ParameterManifold {
    /// Identifies elements and vertices along every recorded transition.
    pub fn build(proto: ProtoManifold) -> Result<Self, AtlasError> {
        proto.check_structure()?;
        let mut element_offsets = Vec::with_capacity(proto.charts.len() + 1);
        let mut vertex_offsets = Vec::with_capacity(proto.charts.len() + 1);
        let (mut ne, mut nv) = (0, 0);
        for c in &proto.charts {
            element_offsets.push(ne);
            vertex_offsets.push(nv);
            ne += c.element_count();
            nv += c.mesh.vertices.len();
        }
        element_offsets.push(ne);
        vertex_offsets.push(nv);

        let mut euf = UnionFind::<usize>::new(ne);
        let mut vuf = UnionFind::<usize>::new(nv);
        // adjacency for orientation propagation
        let mut adj: Vec<Vec<(usize, Orientation)>> = vec![Vec::new(); ne];
        for t in &proto.transitions {
            let sc = proto.chart(t.source);
            let tc = proto.chart(t.target);
            for p in &t.pairs {
                let a = element_offsets[t.source.0] + p.source;
                let b = element_offsets[t.target.0] + p.target;
                euf.union(a, b);
                adj[a].push((b, p.orient));
                adj[b].push((a, p.orient.inverse()));
                let sv = &sc.mesh.elements[p.source];
                let tv = &tc.mesh.elements[p.target];
                for (c, &v) in sv.iter().enumerate() {
                    let w = tv[p.orient.apply_corner(c)];
                    vuf.union(vertex_offsets[t.source.0] + v, vertex_offsets[t.target.0] + w);
                }
            }
        }
        let (element_orbit, groups) = group_labels(&euf.into_labeling());
        let (vertex_orbit, vgroups) = group_labels(&vuf.into_labeling());

        let chart_of = |g: usize| -> ElementRef {
            let chart = element_offsets.partition_point(|&o| o <= g) - 1;
            ElementRef {
                chart: ChartId(chart),
                element: g - element_offsets[chart],
            }
        };

        let mut orbits = Vec::with_capacity(groups.len());
        let mut orient: Vec<Option<Orientation>> = vec![None; ne];
        for group in &groups {
            let root = group[0];
            orient[root] = Some(Orientation::identity(proto.dim));
            let mut queue = VecDeque::from([root]);
            while let Some(u) = queue.pop_front() {
                let ou = orient[u].unwrap();
                for &(v, o) in &adj[u] {
                    let ov = o.after(&ou);
                    match orient[v] {
                        None => {
                            orient[v] = Some(ov);
                            queue.push_back(v);
                        }
                        Some(existing) if existing != ov => {
                            let a = chart_of(u);
                            let b = chart_of(v);
                            return Err(AtlasError::Inconsistent(format!(
                                "element ({}, {}) reaches ({}, {}) with two orientations",
                                a.chart, a.element, b.chart, b.element
                            )));
                        }
                        _ => {}
                    }
                }
            }
            let mut members: Vec<Instance> = group
                .iter()
                .map(|&g| Instance {
                    element: chart_of(g),
                    orient: orient[g].unwrap(),
                })
                .collect();
            members.sort_by_key(|m| m.element);
            for w in members.windows(2) {
                if w[0].element.chart == w[1].element.chart {
                    return Err(AtlasError::SelfGluing {
                        chart: w[0].element.chart.0,
                        first: w[0].element.element,
                        second: w[1].element.element,
                    });
                }
            }
            orbits.push(ElementOrbit { members });
        }

        Ok(Self {
            proto,
            element_offsets,
            element_orbit,
            orbits,
            vertex_offsets,
            vertex_orbit,
            vertex_orbit_count: vgroups.len(),
        })
    }

    pub fn dim(&self) -> usize {
        self.proto.dim
    }

    pub fn orbit_of(&self, e: ElementRef) -> usize {
        self.element_orbit[self.element_offsets[e.chart.0] + e.element]
    }

    pub fn vertex_orbit_of(&self, chart: ChartId, vertex: usize) -> usize {
        self.vertex_orbit[self.vertex_offsets[chart.0] + vertex]
    }

    /// Orientation taking reference coordinates of instance `from` to those
    /// of `to` (both in the same orbit).
    pub fn relative_orientation(&self, from: &Instance, to: &Instance) -> Orientation {
        to.orient.after(&from.orient.inverse())
    }

    pub fn instance(&self, e: ElementRef) -> &Instance {
        let orbit = &self.orbits[self.orbit_of(e)];
        orbit
            .members
            .iter()
            .find(|m| m.element == e)
            .expect("element belongs to its orbit")
    }

    /// Vertex orbits at the corners of element orbit `orbit`, in the
    /// canonical instance's corner order.
    pub fn orbit_corners(&self, orbit: usize) -> Vec<usize> {
        let e = self.orbits[orbit].canonical();
        self.proto.chart(e.chart).mesh.elements[e.element]
            .iter()
            .map(|&v| self.vertex_orbit_of(e.chart, v))
            .collect()
    }

    /// Canonical representative of a point's equivalence class: the
    /// representative on the smallest `(chart, element)` instance among all
    /// instances of all elements whose closure contains the point.
    pub fn canonicalize_point(&self, p: &PointOnChart) -> Result<PointOnChart, AtlasError> {
        let chart = self.proto.charts.get(p.chart.0).ok_or_else(|| {
            AtlasError::Structural(format!("point on missing chart {}", p.chart))
        })?;
        let mut best: Option<(ElementRef, Point)> = None;
        let mut found = false;
        for (e, cell) in chart.mesh.cells.iter().enumerate() {
            let Some(r) = cell.locate(&p.coords, 1e-10) else {
                continue;
            };
            found = true;
            let here = self.instance(ElementRef {
                chart: p.chart,
                element: e,
            });
            let orbit = &self.orbits[self.orbit_of(here.element)];
            for m in &orbit.members {
                let rr = self.relative_orientation(here, m).apply(&r);
                let x = self.proto.cell(m.element).eval(&rr);
                if best.as_ref().map_or(true, |(b, _)| m.element < *b) {
                    best = Some((m.element, x));
                }
            }
        }
        if !found {
            return Err(AtlasError::Domain { chart: p.chart.0 });
        }
        let (e, x) = best.unwrap();
        Ok(PointOnChart {
            chart: e.chart,
            coords: x,
        })
    }
}
