//! The global mesh on the parameter manifold and its vertex/edge
//! classification.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::atlas::{face_corners, ElementRef};
use crate::error::AtlasError;
use crate::geom::corner_count;
use crate::manifold::ParameterManifold;

#[derive(Clone, Debug, PartialEq)]
pub struct MeshElement {
    pub canonical: ElementRef,
    /// Vertex orbits in the canonical instance's corner order.
    pub vertices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeshFace {
    /// Sorted vertex orbits.
    pub vertices: Vec<usize>,
    /// Incident element orbits (one or two).
    pub elements: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalMesh {
    pub dim: usize,
    pub level: usize,
    pub elements: Vec<MeshElement>,
    pub vertex_count: usize,
    pub faces: Vec<MeshFace>,
    /// Element orbits sharing a face, per element orbit.
    pub neighbors: Vec<Vec<usize>>,
    /// Element orbits incident to each vertex orbit.
    pub vertex_elements: Vec<Vec<usize>>,
}

impl GlobalMesh {
    pub fn build(manifold: &ParameterManifold, level: usize) -> Result<Self, AtlasError> {
        let dim = manifold.dim();
        let elements: Vec<MeshElement> = (0..manifold.orbits.len())
            .map(|o| MeshElement {
                canonical: manifold.orbits[o].canonical(),
                vertices: manifold.orbit_corners(o),
            })
            .collect();
        let mut face_map: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
        for (o, el) in elements.iter().enumerate() {
            for f in 0..2 * dim {
                let mut key: Vec<usize> = face_corners(dim, f).iter().map(|&c| el.vertices[c]).collect();
                key.sort_unstable();
                let entry = face_map.entry(key).or_default();
                if !entry.contains(&o) {
                    entry.push(o);
                }
            }
        }
        let mut faces = Vec::with_capacity(face_map.len());
        let mut neighbors = vec![Vec::new(); elements.len()];
        for (vertices, incident) in face_map {
            if incident.len() > 2 {
                return Err(AtlasError::Inconsistent(format!(
                    "face with vertex orbits {vertices:?} is shared by {} elements",
                    incident.len()
                )));
            }
            if let [a, b] = incident[..] {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
            faces.push(MeshFace {
                vertices,
                elements: incident,
            });
        }
        for n in &mut neighbors {
            n.sort_unstable();
            n.dedup();
        }
        let mut vertex_elements = vec![Vec::new(); manifold.vertex_orbit_count];
        for (o, el) in elements.iter().enumerate() {
            for &v in &el.vertices {
                if !vertex_elements[v].contains(&o) {
                    vertex_elements[v].push(o);
                }
            }
        }
        Ok(Self {
            dim,
            level,
            elements,
            vertex_count: manifold.vertex_orbit_count,
            faces,
            neighbors,
            vertex_elements,
        })
    }

    pub fn boundary_faces(&self) -> impl Iterator<Item = &MeshFace> {
        self.faces.iter().filter(|f| f.elements.len() == 1)
    }

    pub fn boundary_vertices(&self) -> BTreeSet<usize> {
        self.boundary_faces().flat_map(|f| f.vertices.iter().copied()).collect()
    }

    /// Edges as sorted vertex-orbit pairs with their incident elements.
    pub fn edges(&self) -> BTreeMap<(usize, usize), Vec<usize>> {
        let mut out: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        let nc = corner_count(self.dim);
        for (o, el) in self.elements.iter().enumerate() {
            for c in 0..nc {
                for a in 0..self.dim {
                    let d = c | (1 << a);
                    if d == c {
                        continue;
                    }
                    let (u, v) = (el.vertices[c], el.vertices[d]);
                    let key = (u.min(v), u.max(v));
                    let entry = out.entry(key).or_default();
                    if !entry.contains(&o) {
                        entry.push(o);
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum VertexClass2D {
    Regular,
    Hanging,
    Extraordinary { valence: usize },
    /// Boundary vertex with three or more incident elements.
    Boundary { valence: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum EdgeClass3D {
    Regular,
    Hanging,
    Extraordinary { valence: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexClass3D {
    Regular,
    Hanging,
    PartiallyUnstructured,
    FullyUnstructured,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Classification {
    pub dim: usize,
    pub vertices_2d: Vec<VertexClass2D>,
    pub edges_3d: Vec<((usize, usize), EdgeClass3D)>,
    pub vertices_3d: Vec<VertexClass3D>,
    /// Element orbits whose closure holds two extraordinary vertices.
    pub violations: Vec<usize>,
}

impl Classification {
    pub fn extraordinary_2d(&self) -> Vec<(usize, usize)> {
        self.vertices_2d
            .iter()
            .enumerate()
            .filter_map(|(v, c)| match c {
                VertexClass2D::Extraordinary { valence } => Some((v, *valence)),
                _ => None,
            })
            .collect()
    }

    /// Class name to count, in name order.
    pub fn counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for c in &self.vertices_2d {
            let name = match c {
                VertexClass2D::Regular => "regular".to_string(),
                VertexClass2D::Hanging => "hanging".to_string(),
                VertexClass2D::Extraordinary { valence } => format!("extraordinary({valence})"),
                VertexClass2D::Boundary { valence } => format!("boundary({valence})"),
            };
            *out.entry(name).or_insert(0) += 1;
        }
        for (_, c) in &self.edges_3d {
            let name = match c {
                EdgeClass3D::Regular => "edge:regular".to_string(),
                EdgeClass3D::Hanging => "edge:hanging".to_string(),
                EdgeClass3D::Extraordinary { valence } => format!("edge:extraordinary({valence})"),
            };
            *out.entry(name).or_insert(0) += 1;
        }
        for c in &self.vertices_3d {
            let name = match c {
                VertexClass3D::Regular => "vertex:regular",
                VertexClass3D::Hanging => "vertex:hanging",
                VertexClass3D::PartiallyUnstructured => "vertex:partially-unstructured",
                VertexClass3D::FullyUnstructured => "vertex:fully-unstructured",
            };
            *out.entry(name.to_string()).or_insert(0) += 1;
        }
        out
    }
}

/// Assigns every vertex (and every edge for `d = 3`) exactly one class.
///
/// Meshes built from element pairings are conforming, so no vertex is ever
/// classified as hanging here; the variant exists for completeness of the
/// taxonomy.
pub fn classify(mesh: &GlobalMesh) -> Classification {
    let boundary = mesh.boundary_vertices();
    let mut out = Classification {
        dim: mesh.dim,
        vertices_2d: Vec::new(),
        edges_3d: Vec::new(),
        vertices_3d: Vec::new(),
        violations: Vec::new(),
    };
    match mesh.dim {
        2 => {
            out.vertices_2d = (0..mesh.vertex_count)
                .map(|v| {
                    let k = mesh.vertex_elements[v].len();
                    if boundary.contains(&v) {
                        if k >= 3 {
                            VertexClass2D::Boundary { valence: k }
                        } else {
                            VertexClass2D::Regular
                        }
                    } else if k == 4 {
                        VertexClass2D::Regular
                    } else {
                        VertexClass2D::Extraordinary { valence: k }
                    }
                })
                .collect();
            let special: BTreeSet<usize> = out
                .vertices_2d
                .iter()
                .enumerate()
                .filter(|(_, c)| {
                    matches!(c, VertexClass2D::Extraordinary { .. } | VertexClass2D::Boundary { .. })
                })
                .map(|(v, _)| v)
                .collect();
            for (o, el) in mesh.elements.iter().enumerate() {
                let n = el.vertices.iter().filter(|v| special.contains(v)).count();
                if n > 1 {
                    out.violations.push(o);
                }
            }
        }
        3 => {
            let boundary_edges: BTreeSet<(usize, usize)> = mesh
                .boundary_faces()
                .flat_map(|f| {
                    // boundary faces are quads; their edges join vertices
                    // adjacent on the face cycle
                    let el = &mesh.elements[f.elements[0]];
                    face_edges(el, &f.vertices)
                })
                .collect();
            let mut per_vertex: HashMap<usize, Vec<usize>> = HashMap::new();
            for (key, incident) in mesh.edges() {
                let k = incident.len();
                let class = if boundary_edges.contains(&key) {
                    if k <= 2 {
                        EdgeClass3D::Regular
                    } else {
                        EdgeClass3D::Extraordinary { valence: k }
                    }
                } else if k == 4 {
                    EdgeClass3D::Regular
                } else {
                    EdgeClass3D::Extraordinary { valence: k }
                };
                if matches!(class, EdgeClass3D::Extraordinary { .. }) {
                    per_vertex.entry(key.0).or_default().push(k);
                    per_vertex.entry(key.1).or_default().push(k);
                }
                out.edges_3d.push((key, class));
            }
            out.vertices_3d = (0..mesh.vertex_count)
                .map(|v| match per_vertex.get(&v) {
                    None => VertexClass3D::Regular,
                    Some(ks) => {
                        let on_boundary = boundary.contains(&v);
                        match ks.len() {
                            1 if on_boundary => VertexClass3D::PartiallyUnstructured,
                            2 if ks[0] == ks[1] && !on_boundary => VertexClass3D::PartiallyUnstructured,
                            _ => VertexClass3D::FullyUnstructured,
                        }
                    }
                })
                .collect();
            let special: BTreeSet<usize> = out
                .vertices_3d
                .iter()
                .enumerate()
                .filter(|(_, c)| **c == VertexClass3D::FullyUnstructured)
                .map(|(v, _)| v)
                .collect();
            for (o, el) in mesh.elements.iter().enumerate() {
                if el.vertices.iter().filter(|v| special.contains(v)).count() > 1 {
                    out.violations.push(o);
                }
            }
        }
        _ => {}
    }
    out
}

/// Edges of the element face spanned by `face` (sorted vertex orbits).
fn face_edges(el: &MeshElement, face: &[usize]) -> Vec<(usize, usize)> {
    let nc = el.vertices.len();
    let dim = nc.trailing_zeros() as usize;
    let mut out = Vec::new();
    for c in 0..nc {
        for a in 0..dim {
            let d = c | (1 << a);
            if d == c {
                continue;
            }
            let (u, v) = (el.vertices[c], el.vertices[d]);
            if face.binary_search(&u).is_ok() && face.binary_search(&v).is_ok() {
                out.push((u.min(v), u.max(v)));
            }
        }
    }
    out
}
