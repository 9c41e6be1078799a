//! Closed genus-0 test geometry.

use std::collections::HashMap;

use crate::mesh::{edge_key, Mesh};

const ICOSAHEDRON_FACES: [[u32; 3]; 20] = [
    [0, 11, 5],
    [0, 5, 1],
    [0, 1, 7],
    [0, 7, 10],
    [0, 10, 11],
    [1, 5, 9],
    [5, 11, 4],
    [11, 10, 2],
    [10, 7, 6],
    [7, 1, 8],
    [3, 9, 4],
    [3, 4, 2],
    [3, 2, 6],
    [3, 6, 8],
    [3, 8, 9],
    [4, 9, 5],
    [2, 4, 11],
    [6, 2, 10],
    [8, 6, 7],
    [9, 8, 1],
];

/// Vertex count of a unit icosphere at `level`: `10 * 4^level + 2`.
pub fn icosphere_vertex_count(level: u32) -> usize {
    10 * 4usize.pow(level) + 2
}

fn unit(p: [f64; 3]) -> [f64; 3] {
    let len = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    [p[0] / len, p[1] / len, p[2] / len]
}

fn icosphere_f64(level: u32) -> (Vec<[f64; 3]>, Vec<[u32; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<[f64; 3]> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .into_iter()
    .map(unit)
    .collect();
    let mut faces = ICOSAHEDRON_FACES.to_vec();
    for _ in 0..level {
        let mut mids: HashMap<(u32, u32), u32> = HashMap::new();
        let mut mid = |a: u32, b: u32, verts: &mut Vec<[f64; 3]>| -> u32 {
            *mids.entry(edge_key(a, b)).or_insert_with(|| {
                let (pa, pb) = (verts[a as usize], verts[b as usize]);
                verts.push(unit([pa[0] + pb[0], pa[1] + pb[1], pa[2] + pb[2]]));
                verts.len() as u32 - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    (verts, faces)
}

fn to_mesh(verts: Vec<[f64; 3]>, faces: Vec<[u32; 3]>, scale: [f64; 3]) -> Mesh {
    Mesh::new(
        verts
            .into_iter()
            .map(|p| [(p[0] * scale[0]) as f32, (p[1] * scale[1]) as f32, (p[2] * scale[2]) as f32])
            .collect(),
        faces,
    )
}

/// Unit-radius subdivided icosahedron.
pub fn icosphere(level: u32) -> Mesh {
    let (v, f) = icosphere_f64(level);
    to_mesh(v, f, [1.0; 3])
}

/// Icosphere with per-axis radii.
pub fn ellipsoid(level: u32, radii: [f64; 3]) -> Mesh {
    let (v, f) = icosphere_f64(level);
    to_mesh(v, f, radii)
}

/// Closed genus-0 unit sphere with exactly `n >= 12` vertices and `2n - 4`
/// faces: the largest icosphere that fits, then edge splits on the sphere
/// until the count is met.
pub fn sphere_with_vertices(n: usize) -> Mesh {
    assert!(n >= 12, "a closed icosphere needs at least 12 vertices");
    let mut level = 0;
    while icosphere_vertex_count(level + 1) <= n {
        level += 1;
    }
    let (mut verts, mut faces) = icosphere_f64(level);

    while verts.len() < n {
        // Split a matching of edges: no two chosen edges share a face.
        let mut edge_faces: HashMap<(u32, u32), Vec<usize>> = HashMap::new();
        for (fi, f) in faces.iter().enumerate() {
            for k in 0..3 {
                edge_faces.entry(edge_key(f[k], f[(k + 1) % 3])).or_default().push(fi);
            }
        }
        let mut edges: Vec<_> = edge_faces.into_iter().collect();
        edges.sort_unstable_by_key(|(e, _)| *e);
        let mut used = vec![false; faces.len()];
        let mut replaced: Vec<Option<[[u32; 3]; 2]>> = vec![None; faces.len()];
        for ((a, b), fs) in edges {
            if verts.len() >= n {
                break;
            }
            if fs.iter().any(|&f| used[f]) {
                continue;
            }
            let (pa, pb) = (verts[a as usize], verts[b as usize]);
            verts.push(unit([pa[0] + pb[0], pa[1] + pb[1], pa[2] + pb[2]]));
            let m = verts.len() as u32 - 1;
            for &fi in &fs {
                used[fi] = true;
                let f = faces[fi];
                let k = (0..3)
                    .find(|&k| edge_key(f[k], f[(k + 1) % 3]) == (a, b))
                    .unwrap();
                let (x, y, z) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
                replaced[fi] = Some([[x, m, z], [m, y, z]]);
            }
        }
        faces = faces
            .iter()
            .zip(replaced)
            .flat_map(|(f, r)| match r {
                Some(pair) => pair.to_vec(),
                None => vec![*f],
            })
            .collect();
    }
    to_mesh(verts, faces, [1.0; 3])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_counts() {
        for level in 0..5 {
            let m = icosphere(level);
            let s = m.stats().unwrap();
            assert_eq!(s.vertex_count, icosphere_vertex_count(level));
            assert_eq!(s.face_count, 2 * s.vertex_count - 4);
            assert_eq!(s.euler_characteristic, 2);
        }
        assert_eq!(icosphere_vertex_count(3), 642);
        assert_eq!(icosphere_vertex_count(6), 40_962);
    }

    #[test]
    fn split_sphere_has_exact_counts() {
        for n in [12, 13, 100, 1000, 13_944] {
            let m = sphere_with_vertices(n);
            let s = m.stats().unwrap();
            assert_eq!(s.vertex_count, n);
            assert_eq!(s.face_count, 2 * n - 4);
            assert_eq!(s.euler_characteristic, 2);
        }
    }
}
