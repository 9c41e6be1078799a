//! Mesh codecs.
//!
//! `.mforge` binary layout, all little-endian:
//!
//! ```text
//! magic    4 bytes  "MFRG"
//! version  u16      1
//! vcount   u32
//! fcount   u32
//! vertices vcount * 3 * f32
//! faces    fcount * 3 * u32
//! ```
//!
//! Colors are not part of the binary layout. The OBJ writer emits them as the
//! common `v x y z r g b` extension and the reader accepts it.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Mesh, MeshError};

pub const BINARY_MAGIC: [u8; 4] = *b"MFRG";
pub const BINARY_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshFormat {
    /// Wavefront OBJ subset: `v` and triangular `f` records.
    Obj,
    /// Compact `.mforge` binary.
    Binary,
}

impl MeshFormat {
    pub fn name(self) -> &'static str {
        match self {
            MeshFormat::Obj => "obj",
            MeshFormat::Binary => "binary",
        }
    }

    /// Guess the format from a file extension (`obj`, `mforge`).
    pub fn from_extension(ext: &str) -> Option<Self> {
        match ext.to_ascii_lowercase().as_str() {
            "obj" => Some(MeshFormat::Obj),
            "mforge" => Some(MeshFormat::Binary),
            _ => None,
        }
    }
}

impl FromStr for MeshFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "obj" | "text-obj" => Ok(MeshFormat::Obj),
            "binary" | "mforge" | "compact-binary" => Ok(MeshFormat::Binary),
            other => Err(format!("unknown mesh format {other:?}")),
        }
    }
}

/// Exact `.mforge` size for the given counts.
pub fn binary_size(vertex_count: usize, face_count: usize) -> usize {
    HEADER_LEN + vertex_count * 12 + face_count * 12
}

pub fn write_mesh(mesh: &Mesh, format: MeshFormat) -> Vec<u8> {
    match format {
        MeshFormat::Binary => write_binary(mesh),
        MeshFormat::Obj => write_obj(mesh).into_bytes(),
    }
}

pub fn read_mesh(bytes: &[u8], format: MeshFormat) -> Result<Mesh, MeshError> {
    match format {
        MeshFormat::Binary => read_binary(bytes),
        MeshFormat::Obj => read_obj(bytes),
    }
}

fn write_binary(mesh: &Mesh) -> Vec<u8> {
    let mut out = Vec::with_capacity(binary_size(mesh.vertices.len(), mesh.faces.len()));
    out.extend_from_slice(&BINARY_MAGIC);
    out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    out.extend_from_slice(&(mesh.vertices.len() as u32).to_le_bytes());
    out.extend_from_slice(&(mesh.faces.len() as u32).to_le_bytes());
    for v in &mesh.vertices {
        for c in v {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    for f in &mesh.faces {
        for i in f {
            out.extend_from_slice(&i.to_le_bytes());
        }
    }
    out
}

fn read_binary(bytes: &[u8]) -> Result<Mesh, MeshError> {
    if bytes.len() < HEADER_LEN {
        // Report a bad magic before a short header when the prefix already disagrees.
        let n = bytes.len().min(4);
        if bytes[..n] != BINARY_MAGIC[..n] {
            let mut magic = [0u8; 4];
            magic[..n].copy_from_slice(&bytes[..n]);
            return Err(MeshError::BadMagic(magic));
        }
        return Err(MeshError::Truncated {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != BINARY_MAGIC {
        return Err(MeshError::BadMagic(magic));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != BINARY_VERSION {
        return Err(MeshError::UnsupportedVersion(version));
    }
    let vcount = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as u64;
    let fcount = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as u64;
    let needed = HEADER_LEN as u64 + 12 * vcount + 12 * fcount;
    if (bytes.len() as u64) < needed {
        return Err(MeshError::Truncated {
            needed: usize::try_from(needed).unwrap_or(usize::MAX),
            available: bytes.len(),
        });
    }
    if (bytes.len() as u64) > needed {
        return Err(MeshError::TrailingBytes(bytes.len() - needed as usize));
    }

    let body = &bytes[HEADER_LEN..];
    let (vbytes, fbytes) = body.split_at(12 * vcount as usize);
    let word = |chunk: &[u8]| -> [u8; 4] { chunk.try_into().unwrap() };

    let vertices = vbytes
        .chunks_exact(12)
        .map(|c| {
            [
                f32::from_le_bytes(word(&c[0..4])),
                f32::from_le_bytes(word(&c[4..8])),
                f32::from_le_bytes(word(&c[8..12])),
            ]
        })
        .collect::<Vec<_>>();
    let mut faces = Vec::with_capacity(fcount as usize);
    for (fi, c) in fbytes.chunks_exact(12).enumerate() {
        let f = [
            u32::from_le_bytes(word(&c[0..4])),
            u32::from_le_bytes(word(&c[4..8])),
            u32::from_le_bytes(word(&c[8..12])),
        ];
        if let Some(&bad) = f.iter().find(|&&i| i as u64 >= vcount) {
            return Err(MeshError::IndexOverflow {
                face: fi,
                index: bad as u64,
                vertex_count: vcount as usize,
            });
        }
        faces.push(f);
    }
    Ok(Mesh::new(vertices, faces))
}

fn write_obj(mesh: &Mesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# meshforge v{} f{}", mesh.vertices.len(), mesh.faces.len());
    for (i, v) in mesh.vertices.iter().enumerate() {
        match mesh.colors.as_ref().and_then(|c| c.get(i)) {
            Some(c) => {
                let _ = writeln!(s, "v {} {} {} {} {} {}", v[0], v[1], v[2], c[0], c[1], c[2]);
            }
            None => {
                let _ = writeln!(s, "v {} {} {}", v[0], v[1], v[2]);
            }
        }
    }
    for f in &mesh.faces {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

fn read_obj(bytes: &[u8]) -> Result<Mesh, MeshError> {
    let text = std::str::from_utf8(bytes).map_err(|e| MeshError::Parse {
        line: 0,
        message: format!("not UTF-8: {e}"),
    })?;
    let mut vertices = Vec::new();
    let mut colors: Vec<[f32; 3]> = Vec::new();
    let mut raw_faces: Vec<(usize, [i64; 3])> = Vec::new();

    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let err = |message: String| MeshError::Parse {
            line: line_no,
            message,
        };
        let line = line.split('#').next().unwrap_or("").trim();
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let nums = toks
                    .map(|t| t.parse::<f32>().map_err(|e| err(format!("bad number {t:?}: {e}"))))
                    .collect::<Result<Vec<_>, _>>()?;
                match nums.len() {
                    3 | 4 => {}
                    6 => {
                        if colors.len() != vertices.len() {
                            return Err(err("vertex colors must be given for all vertices or none".into()));
                        }
                        colors.push([nums[3], nums[4], nums[5]]);
                    }
                    n => return Err(err(format!("vertex record has {n} components"))),
                }
                if nums.len() != 6 && !colors.is_empty() {
                    return Err(err("vertex colors must be given for all vertices or none".into()));
                }
                vertices.push([nums[0], nums[1], nums[2]]);
            }
            Some("f") => {
                let idx = toks
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or("");
                        head.parse::<i64>()
                            .map_err(|e| err(format!("bad face index {t:?}: {e}")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                if idx.len() != 3 {
                    return Err(err(format!(
                        "face has {} corners; only triangles are supported",
                        idx.len()
                    )));
                }
                raw_faces.push((line_no, [idx[0], idx[1], idx[2]]));
            }
            _ => {}
        }
    }

    let n = vertices.len() as i64;
    let mut faces = Vec::with_capacity(raw_faces.len());
    for (fi, (line, raw)) in raw_faces.into_iter().enumerate() {
        let mut f = [0u32; 3];
        for k in 0..3 {
            // OBJ indices are 1-based; negatives count back from the last vertex seen.
            let i = match raw[k] {
                0 => {
                    return Err(MeshError::Parse {
                        line,
                        message: "face index 0 is not valid in OBJ".into(),
                    })
                }
                i if i > 0 => i - 1,
                i => n + i,
            };
            if i < 0 || i >= n {
                return Err(MeshError::IndexOverflow {
                    face: fi,
                    index: raw[k].unsigned_abs(),
                    vertex_count: n as usize,
                });
            }
            f[k] = i as u32;
        }
        faces.push(f);
    }
    let mut mesh = Mesh::new(vertices, faces);
    if !colors.is_empty() {
        mesh.colors = Some(colors);
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::tests::{icosahedron, tetrahedron};
    use proptest::prelude::*;

    #[test]
    fn binary_round_trip_tetrahedron() {
        let m = tetrahedron();
        let bytes = write_mesh(&m, MeshFormat::Binary);
        assert_eq!(&bytes[..4], b"MFRG");
        assert_eq!(read_mesh(&bytes, MeshFormat::Binary).unwrap(), m);
    }

    #[test]
    fn binary_size_formula() {
        // 4 + 2 + 4 + 4 header, 12 bytes per vertex, 12 per face.
        assert_eq!(binary_size(1000, 2000), 36_014);
        let m = icosahedron();
        assert_eq!(write_mesh(&m, MeshFormat::Binary).len(), binary_size(12, 20));
    }

    #[test]
    fn binary_size_ratio_for_budget() {
        let ratio = binary_size(13_944, 27_884) as f64 / binary_size(1000, 2000) as f64;
        assert!((ratio - 13.9).abs() < 0.05, "{ratio}");
        // Within 30% of the 2.5 MB -> 0.16 MB reduction.
        assert!((ratio / (2.5 / 0.16) - 1.0).abs() < 0.3);
    }

    #[test]
    fn binary_errors() {
        let bytes = write_mesh(&tetrahedron(), MeshFormat::Binary);
        assert!(matches!(
            read_mesh(&bytes[..bytes.len() - 1], MeshFormat::Binary),
            Err(MeshError::Truncated { .. })
        ));
        assert!(matches!(
            read_mesh(&bytes[..8], MeshFormat::Binary),
            Err(MeshError::Truncated { .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_mesh(&bad, MeshFormat::Binary),
            Err(MeshError::BadMagic(_))
        ));
        let mut bad = bytes.clone();
        let last = bad.len() - 4;
        bad[last..].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            read_mesh(&bad, MeshFormat::Binary),
            Err(MeshError::IndexOverflow { index: 7, .. })
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert_eq!(
            read_mesh(&long, MeshFormat::Binary),
            Err(MeshError::TrailingBytes(1))
        );
        let mut v2 = bytes;
        v2[4] = 2;
        assert_eq!(
            read_mesh(&v2, MeshFormat::Binary),
            Err(MeshError::UnsupportedVersion(2))
        );
    }

    #[test]
    fn huge_counts_do_not_allocate() {
        let mut bytes = b"MFRG".to_vec();
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(
            read_mesh(&bytes, MeshFormat::Binary),
            Err(MeshError::Truncated { .. })
        ));
    }

    #[test]
    fn obj_round_trip_within_tolerance() {
        let mut m = icosahedron();
        m.colors = Some(vec![[0.25, 0.5, 1.0]; 12]);
        let back = read_mesh(&write_mesh(&m, MeshFormat::Obj), MeshFormat::Obj).unwrap();
        assert_eq!(back.faces, m.faces);
        assert_eq!(back.colors, m.colors);
        for (a, b) in back.vertices.iter().zip(&m.vertices) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn obj_reader_accepts_common_forms() {
        let src = "# comment\no cube\nv 0 0 0\nv 1 0 0\nvt 0 0\nv 0 1 0\nvn 0 0 1\nf 1/1/1 2//1 -1\n";
        let m = read_mesh(src.as_bytes(), MeshFormat::Obj).unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn obj_reader_rejects_quads_and_bad_indices() {
        let quad = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        assert!(matches!(
            read_mesh(quad.as_bytes(), MeshFormat::Obj),
            Err(MeshError::Parse { line: 5, .. })
        ));
        let oob = "v 0 0 0\nf 1 2 3\n";
        assert!(matches!(
            read_mesh(oob.as_bytes(), MeshFormat::Obj),
            Err(MeshError::IndexOverflow { .. })
        ));
        let zero = "v 0 0 0\nf 0 1 1\n";
        assert!(matches!(
            read_mesh(zero.as_bytes(), MeshFormat::Obj),
            Err(MeshError::Parse { .. })
        ));
    }

    fn valid_mesh() -> impl Strategy<Value = Mesh> {
        (3usize..40)
            .prop_flat_map(|n| {
                let verts = prop::collection::vec(prop::array::uniform3(-1e3f32..1e3), n);
                let faces = prop::collection::vec(
                    prop::array::uniform3(0..n as u32)
                        .prop_filter("distinct", |f| f[0] != f[1] && f[1] != f[2] && f[0] != f[2]),
                    0..60,
                );
                (verts, faces)
            })
            .prop_map(|(v, f)| Mesh::new(v, f))
    }

    proptest! {
        #[test]
        fn binary_round_trip_is_bit_exact(m in valid_mesh()) {
            let bytes = write_mesh(&m, MeshFormat::Binary);
            prop_assert_eq!(bytes.len(), binary_size(m.vertices.len(), m.faces.len()));
            let back = read_mesh(&bytes, MeshFormat::Binary).unwrap();
            prop_assert_eq!(write_mesh(&back, MeshFormat::Binary), bytes);
            prop_assert_eq!(back, m);
        }

        #[test]
        fn binary_reader_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
            let _ = read_mesh(&bytes, MeshFormat::Binary);
            let _ = read_mesh(&bytes, MeshFormat::Obj);
        }
    }
}
