use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use super::{PlacementStrategy, SimplifyConfig};
use crate::mesh::{Mesh, MeshError};

/// Symmetric 4x4 error form stored as its 10 independent coefficients,
/// upper triangle row-major: `a² ab ac ad b² bc bd c² cd d²`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Quadric([f64; 10]);

impl Quadric {
    pub const ZERO: Quadric = Quadric([0.0; 10]);

    pub fn from_coefficients(c: [f64; 10]) -> Self {
        Quadric(c)
    }

    pub fn coefficients(&self) -> [f64; 10] {
        self.0
    }

    /// `weight * p pᵀ` for the plane `n·x + d = 0`. `n` should be unit length.
    pub fn from_plane(n: [f64; 3], d: f64, weight: f64) -> Self {
        let [a, b, c] = n;
        Quadric(
            [
                a * a,
                a * b,
                a * c,
                a * d,
                b * b,
                b * c,
                b * d,
                c * c,
                c * d,
                d * d,
            ]
            .map(|x| x * weight),
        )
    }

    /// Area-weighted plane quadric of a triangle; zero for zero-area triangles.
    pub fn from_triangle(p0: [f64; 3], p1: [f64; 3], p2: [f64; 3]) -> Self {
        let n = cross(sub(p1, p0), sub(p2, p0));
        let len = norm(n);
        if len == 0.0 || !len.is_finite() {
            return Quadric::ZERO;
        }
        let unit = n.map(|x| x / len);
        Quadric::from_plane(unit, -dot(unit, p0), len / 2.0)
    }

    /// `vᵀ Q v` for `v = (x, y, z, 1)`.
    pub fn error(&self, p: [f64; 3]) -> f64 {
        let [a2, ab, ac, ad, b2, bc, bd, c2, cd, d2] = self.0;
        let [x, y, z] = p;
        a2 * x * x
            + 2.0 * ab * x * y
            + 2.0 * ac * x * z
            + 2.0 * ad * x
            + b2 * y * y
            + 2.0 * bc * y * z
            + 2.0 * bd * y
            + c2 * z * z
            + 2.0 * cd * z
            + d2
    }

    pub fn matrix(&self) -> [[f64; 4]; 4] {
        let [a2, ab, ac, ad, b2, bc, bd, c2, cd, d2] = self.0;
        [
            [a2, ab, ac, ad],
            [ab, b2, bc, bd],
            [ac, bc, c2, cd],
            [ad, bd, cd, d2],
        ]
    }

    /// Minimiser of the error, when the upper 3x3 block has
    /// `|det| > singular_threshold`.
    pub fn minimizer(&self, singular_threshold: f64) -> Option<[f64; 3]> {
        let [a2, ab, ac, ad, b2, bc, bd, c2, cd, _] = self.0;
        let det = a2 * (b2 * c2 - bc * bc) - ab * (ab * c2 - bc * ac) + ac * (ab * bc - b2 * ac);
        if !(det.abs() > singular_threshold) {
            return None;
        }
        // Cramer's rule on A x = -b.
        let (r0, r1, r2) = (-ad, -bd, -cd);
        let x = (r0 * (b2 * c2 - bc * bc) - ab * (r1 * c2 - bc * r2) + ac * (r1 * bc - b2 * r2)) / det;
        let y = (a2 * (r1 * c2 - bc * r2) - r0 * (ab * c2 - bc * ac) + ac * (ab * r2 - r1 * ac)) / det;
        let z = (a2 * (b2 * r2 - r1 * bc) - ab * (ab * r2 - r1 * ac) + r0 * (ab * bc - b2 * ac)) / det;
        let p = [x, y, z];
        p.iter().all(|c| c.is_finite()).then_some(p)
    }
}

impl Add for Quadric {
    type Output = Quadric;

    fn add(mut self, rhs: Quadric) -> Quadric {
        self += rhs;
        self
    }
}

impl AddAssign for Quadric {
    fn add_assign(&mut self, rhs: Quadric) {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a += b;
        }
    }
}

/// Optimal position for a merged vertex and the error it introduces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub cost: f64,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseCandidate {
    /// `(min, max)` vertex pair.
    pub edge: (u32, u32),
    pub cost: f64,
    pub placement: [f64; 3],
}

/// Per-vertex sum of the area-weighted plane quadrics of incident faces.
pub fn compute_vertex_quadrics(mesh: &Mesh) -> Result<Vec<Quadric>, MeshError> {
    mesh.ensure_valid()?;
    let pos: Vec<[f64; 3]> = mesh.vertices.iter().map(|v| v.map(f64::from)).collect();
    let mut q = vec![Quadric::ZERO; pos.len()];
    for f in &mesh.faces {
        let fq = Quadric::from_triangle(pos[f[0] as usize], pos[f[1] as usize], pos[f[2] as usize]);
        for &i in f {
            q[i as usize] += fq;
        }
    }
    Ok(q)
}

/// Cost of merging two vertices with quadrics `q1`, `q2` at `v1`, `v2`.
///
/// With [`PlacementStrategy::OptimalSolve`] the combined quadric's minimiser is
/// used when the system is well-posed; otherwise, and whenever the solve is
/// numerically worse than a trivial candidate, the best of midpoint, `v1` and
/// `v2` is taken (midpoint wins ties).
pub fn collapse_cost(q1: &Quadric, q2: &Quadric, v1: [f64; 3], v2: [f64; 3], cfg: &SimplifyConfig) -> Placement {
    let q = *q1 + *q2;
    let mid = [(v1[0] + v2[0]) / 2.0, (v1[1] + v2[1]) / 2.0, (v1[2] + v2[2]) / 2.0];
    let mut best = Placement {
        cost: q.error(mid),
        position: mid,
    };
    for p in [v1, v2] {
        let e = q.error(p);
        if e < best.cost {
            best = Placement { cost: e, position: p };
        }
    }
    if cfg.placement_strategy == PlacementStrategy::OptimalSolve {
        if let Some(p) = q.minimizer(cfg.singular_threshold) {
            let e = q.error(p);
            if e <= best.cost {
                best = Placement { cost: e, position: p };
            }
        }
    }
    best.cost = best.cost.max(0.0);
    best
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}
