//! Triangle mesh container and the Wavefront OBJ subset used for I/O.
//!
//! Only `v x y z` and `f a b c` records are consumed. Face indices are
//! 1-based; negative indices count back from the most recent vertex, and any
//! `/t/n` suffixes are stripped. Every other record type is ignored.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Point3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: face has {count} vertices, only triangles are accepted")]
    NonTriangleFace { line: usize, count: usize },
    #[error("triangle {triangle}: vertex index {index} out of range for {vertex_count} vertices")]
    IndexOutOfRange {
        triangle: usize,
        index: i64,
        vertex_count: usize,
    },
    #[error("triangle {triangle} is degenerate (repeated vertex index)")]
    DegenerateTriangle { triangle: usize },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Indexed triangle mesh. Construction always validates, so a value of this
/// type never holds an out-of-range or degenerate triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    name: String,
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[usize; 3]>,
    watertight: bool,
}

impl TriangleMesh {
    pub fn new(
        name: impl Into<String>,
        vertices: Vec<Point3<f64>>,
        triangles: Vec<[usize; 3]>,
    ) -> Result<Self, MeshError> {
        let n = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i >= n) {
                return Err(MeshError::IndexOutOfRange {
                    triangle: t,
                    index: bad as i64 + 1,
                    vertex_count: n,
                });
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(MeshError::DegenerateTriangle { triangle: t });
            }
        }
        let watertight = edge_incidence(&triangles).values().all(|&c| c == 2);
        Ok(Self {
            name: name.into(),
            vertices,
            triangles,
            watertight,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// True iff every undirected edge is shared by exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        self.watertight
    }

    /// Same topology with new vertex positions (posed output).
    pub fn with_vertices(&self, vertices: Vec<Point3<f64>>) -> Self {
        assert_eq!(vertices.len(), self.vertices.len(), "vertex count changed");
        Self {
            name: self.name.clone(),
            vertices,
            triangles: self.triangles.clone(),
            watertight: self.watertight,
        }
    }

    /// Sorted vertex adjacency lists derived from triangle edges.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for t in &self.triangles {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Enclosed volume by the divergence theorem (positive for outward winding).
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let (a, b, c) = (
                    self.vertices[t[0]].coords,
                    self.vertices[t[1]].coords,
                    self.vertices[t[2]].coords,
                );
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }
}

/// Number of triangles incident to each undirected edge.
pub fn edge_incidence(triangles: &[[usize; 3]]) -> HashMap<(usize, usize), usize> {
    let mut counts = HashMap::new();
    for t in triangles {
        for e in 0..3 {
            let (a, b) = (t[e], t[(e + 1) % 3]);
            *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    counts
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh, MeshError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_obj(&text, name)
}

pub fn parse_obj(text: &str, name: impl Into<String>) -> Result<TriangleMesh, MeshError> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut fields = content.split_whitespace();
        match fields.next() {
            Some("v") => {
                let coords: Vec<&str> = fields.collect();
                if coords.len() < 3 {
                    return Err(MeshError::Parse {
                        line,
                        message: format!("vertex needs 3 coordinates, found {}", coords.len()),
                    });
                }
                let mut p = [0.0; 3];
                for (slot, tok) in p.iter_mut().zip(&coords) {
                    *slot = tok.parse::<f64>().map_err(|_| MeshError::Parse {
                        line,
                        message: format!("invalid coordinate {tok:?}"),
                    })?;
                }
                vertices.push(Point3::from(p));
            }
            Some("f") => {
                let refs: Vec<&str> = fields.collect();
                if refs.len() != 3 {
                    return Err(MeshError::NonTriangleFace {
                        line,
                        count: refs.len(),
                    });
                }
                let mut tri = [0usize; 3];
                for (slot, tok) in tri.iter_mut().zip(&refs) {
                    let idx_str = tok.split('/').next().unwrap_or("");
                    let idx: i64 = idx_str.parse().map_err(|_| MeshError::Parse {
                        line,
                        message: format!("invalid face index {tok:?}"),
                    })?;
                    let resolved = match idx {
                        0 => None,
                        i if i > 0 => Some(i - 1),
                        i => Some(vertices.len() as i64 + i),
                    };
                    match resolved {
                        Some(r) if r >= 0 && (r as usize) < vertices.len() => *slot = r as usize,
                        _ => {
                            return Err(MeshError::IndexOutOfRange {
                                triangle: triangles.len(),
                                index: idx,
                                vertex_count: vertices.len(),
                            })
                        }
                    }
                }
                triangles.push(tri);
            }
            _ => {}
        }
    }
    TriangleMesh::new(name, vertices, triangles)
}

/// Serialize to OBJ text. Coordinates use the shortest round-trip decimal
/// representation, so output is byte-stable and lossless.
pub fn to_obj_string(mesh: &TriangleMesh) -> String {
    let mut out = String::new();
    if !mesh.name.is_empty() {
        let _ = writeln!(out, "o {}", mesh.name);
    }
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for t in &mesh.triangles {
        let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    out
}

pub fn write_mesh(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    std::fs::write(path, to_obj_string(mesh))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TET: &str = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 3 2\nf 1 2 4\nf 2 3 4\nf 1 4 3\n";

    #[test]
    fn tetrahedron_loads_watertight() {
        let m = parse_obj(TET, "tet").unwrap();
        assert_eq!(m.vertices().len(), 4);
        assert_eq!(m.triangles().len(), 4);
        assert!(m.is_watertight());
        assert!((m.signed_volume() - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_face_is_rejected() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 2 5\n";
        match parse_obj(text, "bad") {
            Err(MeshError::IndexOutOfRange { index: 5, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn quads_and_malformed_records_report_line() {
        let quad = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        assert!(matches!(
            parse_obj(quad, "q"),
            Err(MeshError::NonTriangleFace { line: 5, count: 4 })
        ));
        let bad = "v 0 0 0\nv 1 zero 0\n";
        assert!(matches!(parse_obj(bad, "b"), Err(MeshError::Parse { line: 2, .. })));
    }

    #[test]
    fn slashes_comments_and_negative_indices() {
        let text = "# header\nv 0 0 0\nv 1 0 0\nv 0 1 0 # trailing\nvn 0 0 1\nf 1/1/1 2//1 -1\n";
        let m = parse_obj(text, "s").unwrap();
        assert_eq!(m.triangles(), &[[0, 1, 2]]);
        assert!(!m.is_watertight());
    }

    #[test]
    fn degenerate_triangle_rejected() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 1 2\n";
        assert!(matches!(
            parse_obj(text, "d"),
            Err(MeshError::DegenerateTriangle { triangle: 0 })
        ));
    }

    #[test]
    fn cube_edges_each_shared_twice() {
        let cube = crate::fixtures::unit_cube();
        assert_eq!(cube.vertices().len(), 8);
        assert_eq!(cube.triangles().len(), 12);
        // brute-force: count incidences per edge by scanning every triangle
        let mut edges = Vec::new();
        for t in cube.triangles() {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                edges.push((a.min(b), a.max(b)));
            }
        }
        for e in &edges {
            let count = edges.iter().filter(|f| *f == e).count();
            assert_eq!(count, 2, "edge {e:?}");
        }
        assert_eq!(edges.len(), 36);
        assert!(cube.is_watertight());
    }

    #[test]
    fn empty_mesh_writes_valid_obj() {
        let m = TriangleMesh::new("", vec![], vec![]).unwrap();
        let text = to_obj_string(&m);
        assert_eq!(text, "");
        let back = parse_obj(&text, "").unwrap();
        assert!(back.vertices().is_empty());
    }
}
