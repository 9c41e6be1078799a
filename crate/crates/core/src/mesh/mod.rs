//! Indexed triangle meshes.
//!
//! A [`Mesh`] is plain data: constructing one never checks anything. Call
//! [`Mesh::validate`] to get every problem at once, which is what ingestion of
//! foreign generator output needs.

mod format;

pub use format::{binary_size, read_mesh, write_mesh, MeshFormat, BINARY_MAGIC, BINARY_VERSION};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("input truncated: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("bad magic {0:?}, expected \"MFRG\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("face {face} references vertex {index} but the mesh has {vertex_count} vertices")]
    IndexOverflow {
        face: usize,
        index: u64,
        vertex_count: usize,
    },
    #[error("{0} trailing bytes after mesh payload")]
    TrailingBytes(usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("mesh is invalid: {0}")]
    Invalid(ValidationReport),
}

/// Indexed triangle mesh. Positions are in meters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub vertices: Vec<[f32; 3]>,
    pub faces: Vec<[u32; 3]>,
    /// Optional per-vertex RGB in `[0, 1]`. Dropped by the binary codec.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub colors: Option<Vec<[f32; 3]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    IndexOutOfRange { face: usize, index: u32 },
    DegenerateFace { face: usize },
    NonFiniteCoordinate { vertex: usize },
    /// Two faces traverse the same directed edge.
    InconsistentWinding { edge: (u32, u32) },
    /// More than two faces share an undirected edge.
    NonManifoldEdge { edge: (u32, u32), faces: usize },
    ColorCountMismatch { colors: usize, vertices: usize },
    ColorOutOfRange { vertex: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} violation(s)", self.violations.len())?;
        if let Some(first) = self.violations.first() {
            write!(f, ", first: {first:?}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: [f32; 3],
    pub max: [f32; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshStats {
    pub vertex_count: usize,
    pub face_count: usize,
    pub edge_count: usize,
    pub euler_characteristic: i64,
    /// Serialized size per format, keyed by [`MeshFormat::name`].
    pub serialized_size_bytes: BTreeMap<String, usize>,
    /// `None` for a mesh without vertices.
    pub bounding_box: Option<BoundingBox>,
}

impl Mesh {
    pub fn new(vertices: Vec<[f32; 3]>, faces: Vec<[u32; 3]>) -> Self {
        Self {
            vertices,
            faces,
            colors: None,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let n = self.vertices.len();

        for (i, v) in self.vertices.iter().enumerate() {
            if !v.iter().all(|c| c.is_finite()) {
                violations.push(Violation::NonFiniteCoordinate { vertex: i });
            }
        }

        if let Some(colors) = &self.colors {
            if colors.len() != n {
                violations.push(Violation::ColorCountMismatch {
                    colors: colors.len(),
                    vertices: n,
                });
            }
            for (i, c) in colors.iter().enumerate() {
                if !c.iter().all(|x| (0.0..=1.0).contains(x)) {
                    violations.push(Violation::ColorOutOfRange { vertex: i });
                }
            }
        }

        let mut directed: HashMap<(u32, u32), usize> = HashMap::new();
        let mut undirected: HashMap<(u32, u32), usize> = HashMap::new();
        for (fi, f) in self.faces.iter().enumerate() {
            let mut in_range = true;
            for &idx in f {
                if idx as usize >= n {
                    violations.push(Violation::IndexOutOfRange { face: fi, index: idx });
                    in_range = false;
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                violations.push(Violation::DegenerateFace { face: fi });
                continue;
            }
            if !in_range {
                continue;
            }
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *directed.entry((a, b)).or_default() += 1;
                *undirected.entry(edge_key(a, b)).or_default() += 1;
            }
        }

        let mut winding: Vec<_> = directed
            .into_iter()
            .filter(|&(_, c)| c > 1)
            .map(|(e, _)| edge_key(e.0, e.1))
            .collect();
        winding.sort_unstable();
        winding.dedup();
        let mut non_manifold: Vec<_> = undirected.into_iter().filter(|&(_, c)| c > 2).collect();
        non_manifold.sort_unstable();

        for (edge, faces) in non_manifold {
            violations.push(Violation::NonManifoldEdge { edge, faces });
        }
        for edge in winding {
            violations.push(Violation::InconsistentWinding { edge });
        }

        ValidationReport { violations }
    }

    /// Validates and wraps the report in an error when anything is wrong.
    pub fn ensure_valid(&self) -> Result<(), MeshError> {
        let report = self.validate();
        if report.is_valid() {
            Ok(())
        } else {
            Err(MeshError::Invalid(report))
        }
    }

    /// Undirected edge count.
    pub fn edge_count(&self) -> usize {
        let mut edges: Vec<(u32, u32)> = self
            .faces
            .iter()
            .flat_map(|f| [edge_key(f[0], f[1]), edge_key(f[1], f[2]), edge_key(f[2], f[0])])
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges.len()
    }

    pub fn bounding_box(&self) -> Option<BoundingBox> {
        let first = *self.vertices.first()?;
        let mut bb = BoundingBox {
            min: first,
            max: first,
        };
        for v in &self.vertices[1..] {
            for k in 0..3 {
                bb.min[k] = bb.min[k].min(v[k]);
                bb.max[k] = bb.max[k].max(v[k]);
            }
        }
        Some(bb)
    }

    pub fn stats(&self) -> Result<MeshStats, MeshError> {
        self.ensure_valid()?;
        let vertex_count = self.vertices.len();
        let face_count = self.faces.len();
        let edge_count = self.edge_count();
        let mut serialized_size_bytes = BTreeMap::new();
        serialized_size_bytes.insert(
            MeshFormat::Binary.name().to_string(),
            binary_size(vertex_count, face_count),
        );
        serialized_size_bytes.insert(
            MeshFormat::Obj.name().to_string(),
            write_mesh(self, MeshFormat::Obj).len(),
        );
        Ok(MeshStats {
            vertex_count,
            face_count,
            edge_count,
            euler_characteristic: vertex_count as i64 - edge_count as i64 + face_count as i64,
            serialized_size_bytes,
            bounding_box: self.bounding_box(),
        })
    }

    /// Indices of vertices lying on an edge used by exactly one face.
    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut count: HashMap<(u32, u32), u32> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                *count.entry(edge_key(f[k], f[(k + 1) % 3])).or_default() += 1;
            }
        }
        let mut boundary = vec![false; self.vertices.len()];
        for ((a, b), c) in count {
            if c == 1 {
                boundary[a as usize] = true;
                boundary[b as usize] = true;
            }
        }
        boundary
    }
}

pub(crate) fn edge_key(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}
