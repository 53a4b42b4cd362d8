//! Manifold files (strict JSON) and raw meshes (whitespace separated text).

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::atlas::{Chart, ChartId, ChartKind, ElementPair, PatchFrame, ProtoManifold, TransitionMap};
use crate::basis::ProtoOverride;
use crate::cover::RawMesh;
use crate::error::IoError;
use crate::geom::{Orientation, Point, MAX_DIM};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldFile {
    pub version: u32,
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<usize>,
    pub charts: Vec<ChartEntry>,
    pub transitions: Vec<TransitionEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub patches: Vec<PatchEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<OverrideEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub control_points: Vec<Point>,
}

/// Retained boundary faces are `[element, 2 * axis + side]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChartEntry {
    Structured {
        knots: Vec<Vec<f64>>,
        #[serde(default)]
        gamma: Vec<[usize; 2]>,
    },
    Vertex2d {
        segments: Vec<Vec<Point>>,
        #[serde(default)]
        gamma: Vec<[usize; 2]>,
    },
    Boundary2d {
        segments: Vec<Vec<Point>>,
        #[serde(default)]
        gamma: Vec<[usize; 2]>,
    },
    Vertex3d {
        segments: Vec<Vec<Point>>,
        #[serde(default)]
        gamma: Vec<[usize; 2]>,
    },
    Edge3d {
        section: Vec<Vec<Point>>,
        axis_knots: Vec<f64>,
        #[serde(default)]
        gamma: Vec<[usize; 2]>,
    },
}

/// Pairs are `[source element, target element, orientation code]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionEntry {
    pub source: usize,
    pub target: usize,
    pub pairs: Vec<[usize; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchEntry {
    pub chart: usize,
    pub origin: Point,
    pub matrix: [[f64; MAX_DIM]; MAX_DIM],
    pub corners: Vec<Point>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideEntry {
    pub chart: usize,
    pub local: usize,
    pub knots: Vec<Vec<f64>>,
}

fn gamma_of(g: &[(usize, usize)]) -> Vec<[usize; 2]> {
    g.iter().map(|&(e, f)| [e, f]).collect()
}

impl ManifoldFile {
    pub fn from_proto(proto: &ProtoManifold) -> Self {
        let charts = proto
            .charts
            .iter()
            .map(|c| {
                let gamma = gamma_of(&c.gamma);
                match &c.kind {
                    ChartKind::Structured { knots } => ChartEntry::Structured { knots: knots.clone(), gamma },
                    ChartKind::UnstructuredVertex2D { segments } => ChartEntry::Vertex2d { segments: segments.clone(), gamma },
                    ChartKind::Boundary2D { segments } => ChartEntry::Boundary2d { segments: segments.clone(), gamma },
                    ChartKind::UnstructuredVertex3D { segments } => ChartEntry::Vertex3d { segments: segments.clone(), gamma },
                    ChartKind::UnstructuredEdge3D { section, axis_knots } => ChartEntry::Edge3d {
                        section: section.clone(),
                        axis_knots: axis_knots.clone(),
                        gamma,
                    },
                }
            })
            .collect();
        let transitions = proto
            .transitions
            .iter()
            .map(|t| TransitionEntry {
                source: t.source.0,
                target: t.target.0,
                pairs: t.pairs.iter().map(|p| [p.source, p.target, p.orient.code() as usize]).collect(),
            })
            .collect();
        let patches = proto
            .frames
            .iter()
            .map(|f| PatchEntry {
                chart: f.chart.0,
                origin: f.origin,
                matrix: f.matrix,
                corners: f.corners.clone(),
            })
            .collect();
        Self {
            version: FORMAT_VERSION,
            dimension: proto.dim,
            degree: None,
            charts,
            transitions,
            patches,
            overrides: Vec::new(),
            control_points: Vec::new(),
        }
    }

    pub fn with_degree(mut self, degree: usize) -> Self {
        self.degree = Some(degree);
        self
    }

    pub fn with_overrides(mut self, overrides: &[ProtoOverride]) -> Self {
        self.overrides = overrides
            .iter()
            .map(|o| OverrideEntry { chart: o.chart.0, local: o.local, knots: o.knots.clone() })
            .collect();
        self
    }

    pub fn to_proto(&self) -> Result<ProtoManifold, IoError> {
        if self.version != FORMAT_VERSION {
            return Err(IoError::Parse(format!("unsupported version {}", self.version)));
        }
        let dim = self.dimension;
        if !(2..=3).contains(&dim) {
            return Err(IoError::Parse(format!("unsupported dimension {dim}")));
        }
        let mut charts = Vec::with_capacity(self.charts.len());
        for (i, entry) in self.charts.iter().enumerate() {
            let (kind, gamma) = match entry {
                ChartEntry::Structured { knots, gamma } => (ChartKind::Structured { knots: knots.clone() }, gamma),
                ChartEntry::Vertex2d { segments, gamma } => (ChartKind::UnstructuredVertex2D { segments: segments.clone() }, gamma),
                ChartEntry::Boundary2d { segments, gamma } => (ChartKind::Boundary2D { segments: segments.clone() }, gamma),
                ChartEntry::Vertex3d { segments, gamma } => (ChartKind::UnstructuredVertex3D { segments: segments.clone() }, gamma),
                ChartEntry::Edge3d {
                    section,
                    axis_knots,
                    gamma,
                } => (
                    ChartKind::UnstructuredEdge3D {
                        section: section.clone(),
                        axis_knots: axis_knots.clone(),
                    },
                    gamma,
                ),
            };
            let gamma = gamma.iter().map(|g| (g[0], g[1])).collect();
            charts.push(Chart::new(ChartId(i), dim, kind, gamma)?);
        }
        let mut transitions = Vec::with_capacity(self.transitions.len());
        for t in &self.transitions {
            let pairs = t
                .pairs
                .iter()
                .map(|&[s, e, code]| {
                    let orient = u32::try_from(code)
                        .ok()
                        .and_then(|c| Orientation::from_code(dim, c))
                        .ok_or_else(|| IoError::Parse(format!("invalid orientation code {code}")))?;
                    Ok(ElementPair {
                        source: s,
                        target: e,
                        orient,
                    })
                })
                .collect::<Result<Vec<_>, IoError>>()?;
            transitions.push(TransitionMap {
                source: ChartId(t.source),
                target: ChartId(t.target),
                pairs,
            });
        }
        let frames = self
            .patches
            .iter()
            .map(|p| PatchFrame {
                chart: ChartId(p.chart),
                origin: p.origin,
                matrix: p.matrix,
                corners: p.corners.clone(),
            })
            .collect();
        let proto = ProtoManifold {
            dim,
            charts,
            transitions,
            frames,
        };
        proto.check_structure()?;
        Ok(proto)
    }

    pub fn overrides(&self) -> Vec<ProtoOverride> {
        self.overrides
            .iter()
            .map(|o| ProtoOverride {
                chart: ChartId(o.chart),
                local: o.local,
                knots: o.knots.clone(),
            })
            .collect()
    }

    pub fn parse(text: &str) -> Result<Self, IoError> {
        serde_json::from_str(text).map_err(|e| IoError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifold files serialize")
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        Self::parse(&read_text(path)?)
    }
}

fn read_text(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|e| IoError::Read {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Parses a raw mesh:
///
/// ```text
/// dim 2
/// vertices 4
/// 0 0
/// 1 0
/// 1 1
/// 0 1
/// cells 1
/// 0 1 2 3
/// ```
///
/// Quads are listed counter-clockwise, hexahedra as bottom cycle then top
/// cycle. `#` starts a comment.
pub fn parse_raw_mesh(text: &str) -> Result<RawMesh, IoError> {
    let mut tok = Tokens(
        text.lines()
            .flat_map(|l| l.split('#').next().unwrap_or("").split_whitespace())
            .collect::<Vec<_>>()
            .into_iter(),
    );
    let dim = tok.keyword("dim")?;
    if !(2..=3).contains(&dim) {
        return Err(IoError::Parse(format!("unsupported dimension {dim}")));
    }
    let nv = tok.keyword("vertices")?;
    // `dim` coordinates per vertex, or three for surfaces in space
    let mut values = Vec::new();
    loop {
        let t = tok.next("vertex coordinates or `cells`")?;
        if t == "cells" {
            break;
        }
        values.push(t.parse::<f64>().map_err(|_| IoError::Parse(format!("invalid coordinate `{t}`")))?);
    }
    let width = if nv == 0 { dim } else { values.len() / nv };
    if nv * width != values.len() || !(dim..=3).contains(&width) {
        return Err(IoError::Parse(format!("{} coordinates for {nv} vertices", values.len())));
    }
    let vertices = values
        .chunks(width)
        .map(|c| {
            let mut p = [0.0; MAX_DIM];
            p[..width].copy_from_slice(c);
            p
        })
        .collect();
    let nc = tok.count("cells")?;
    let per = 1usize << dim;
    let mut cells = Vec::with_capacity(nc);
    for c in 0..nc {
        let mut cell = Vec::with_capacity(per);
        for _ in 0..per {
            let t = tok.next("cell vertex")?;
            cell.push(t.parse().map_err(|_| IoError::Parse(format!("cell {c}: invalid index `{t}`")))?);
        }
        cells.push(cell);
    }
    if let Some(extra) = tok.0.next() {
        return Err(IoError::Parse(format!("trailing input `{extra}`")));
    }
    Ok(RawMesh::from_cyclic(dim, vertices, cells)?)
}

struct Tokens<'a>(std::vec::IntoIter<&'a str>);

impl<'a> Tokens<'a> {
    fn next(&mut self, what: &str) -> Result<&'a str, IoError> {
        self.0
            .next()
            .ok_or_else(|| IoError::Parse(format!("unexpected end of input, expected {what}")))
    }

    fn count(&mut self, after: &str) -> Result<usize, IoError> {
        let n = self.next("a count")?;
        n.parse().map_err(|_| IoError::Parse(format!("invalid count `{n}` after `{after}`")))
    }

    fn keyword(&mut self, kw: &str) -> Result<usize, IoError> {
        let got = self.next(kw)?;
        if got != kw {
            return Err(IoError::Parse(format!("expected `{kw}`, found `{got}`")));
        }
        self.count(kw)
    }
}

pub fn read_raw_mesh(path: &Path) -> Result<RawMesh, IoError> {
    parse_raw_mesh(&read_text(path)?)
}

pub fn write_raw_mesh(raw: &RawMesh) -> String {
    let width = if raw.vertices.iter().any(|v| v[raw.dim..].iter().any(|&c| c != 0.0)) {
        3
    } else {
        raw.dim
    };
    let mut s = format!("dim {}\nvertices {}\n", raw.dim, raw.vertices.len());
    for v in &raw.vertices {
        let coords: Vec<String> = v[..width].iter().map(|c| format!("{c}")).collect();
        let _ = writeln!(s, "{}", coords.join(" "));
    }
    let _ = writeln!(s, "cells {}", raw.cells.len());
    for c in raw.cyclic_cells() {
        let ids: Vec<String> = c.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", ids.join(" "));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{extruded_star_raw, star_atlas, star_raw};

    #[test]
    fn manifold_file_round_trips() {
        let proto = star_atlas(3, 2).unwrap();
        let file = ManifoldFile::from_proto(&proto).with_degree(2);
        let again = ManifoldFile::parse(&file.to_json()).unwrap();
        assert_eq!(file, again);
        assert_eq!(again.to_proto().unwrap(), proto);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let proto = star_atlas(3, 2).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&ManifoldFile::from_proto(&proto).to_json()).unwrap();
        v["colour"] = serde_json::json!("red");
        assert!(matches!(ManifoldFile::parse(&v.to_string()), Err(IoError::Parse(_))));
    }

    #[test]
    fn bad_orientation_code_is_reported() {
        let proto = star_atlas(3, 2).unwrap();
        let mut file = ManifoldFile::from_proto(&proto);
        file.transitions[0].pairs[0][2] = 99;
        let err = file.to_proto().unwrap_err();
        assert!(err.to_string().contains("orientation"), "{err}");
    }

    #[test]
    fn raw_mesh_round_trips() {
        for raw in [star_raw(5), extruded_star_raw(3, 2)] {
            let text = write_raw_mesh(&raw);
            assert_eq!(parse_raw_mesh(&text).unwrap(), raw);
        }
    }

    #[test]
    fn raw_mesh_errors() {
        assert!(parse_raw_mesh("dim 2\nvertices 1\n0 0\ncells 1\n0 0 0").is_err());
        assert!(parse_raw_mesh("dim 4\n").is_err());
        assert!(parse_raw_mesh("dim 2\nvertices 1\n0 0\ncells 0\nextra").is_err());
        let ok = "# unit square\ndim 2\nvertices 4\n0 0\n1 0\n1 1\n0 1\ncells 1\n0 1 2 3\n";
        assert_eq!(parse_raw_mesh(ok).unwrap().cells.len(), 1);
    }
}
