//! Exhaustive re-costing oracle for the decimator.
//!
//! Tracks topology, positions and merged quadrics on its own, re-scores every
//! edge from scratch before each step, and checks the executed collapse is a
//! minimum among admissible candidates.

use meshforge::mesh::Mesh;
use meshforge::simplify::{collapse_cost, compute_vertex_quadrics, Decimator, Quadric, SimplifyConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct OracleOutcome {
    pub steps: usize,
    pub normal_flips: usize,
    pub output: Mesh,
}

fn key(a: u32, b: u32) -> (u32, u32) {
    (a.min(b), a.max(b))
}

fn normal(p: [[f64; 3]; 3]) -> [f64; 3] {
    let u = [p[1][0] - p[0][0], p[1][1] - p[0][1], p[1][2] - p[0][2]];
    let v = [p[2][0] - p[0][0], p[2][1] - p[0][1], p[2][2] - p[0][2]];
    [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Runs the decimator to `cfg.target_vertices`, checking every step.
pub fn check_greedy(mesh: &Mesh, cfg: &SimplifyConfig) -> Result<OracleOutcome, String> {
    let original_q = compute_vertex_quadrics(mesh).map_err(|e| e.to_string())?;
    let mut members: Vec<Vec<u32>> = (0..mesh.vertices.len() as u32).map(|v| vec![v]).collect();
    let mut pos: Vec<[f64; 3]> = mesh.vertices.iter().map(|v| v.map(f64::from)).collect();
    let mut pinned = if cfg.preserve_boundary {
        mesh.boundary_vertices()
    } else {
        vec![false; mesh.vertices.len()]
    };
    let mut faces: Vec<Option<[u32; 3]>> = mesh.faces.iter().copied().map(Some).collect();
    let mut alive = mesh.vertices.len();

    let mut d = Decimator::new(mesh, cfg).map_err(|e| e.to_string())?;
    let mut steps = 0;
    let mut normal_flips = 0;

    while alive > cfg.target_vertices {
        let mut edges: Vec<(u32, u32)> = faces
            .iter()
            .flatten()
            .flat_map(|f| [key(f[0], f[1]), key(f[1], f[2]), key(f[2], f[0])])
            .collect();
        edges.sort_unstable();
        edges.dedup();
        if edges != d.edges() {
            return Err(format!("step {steps}: topology diverged"));
        }

        let mut best: Option<(f64, (u32, u32))> = None;
        let mut costs = std::collections::HashMap::new();
        for &(a, b) in &edges {
            let qa = members[a as usize].iter().fold(Quadric::ZERO, |q, &m| q + original_q[m as usize]);
            let qb = members[b as usize].iter().fold(Quadric::ZERO, |q, &m| q + original_q[m as usize]);
            let (cost, placement) = match (pinned[a as usize], pinned[b as usize]) {
                (true, true) => continue,
                (true, false) => ((qa + qb).error(pos[a as usize]).max(0.0), pos[a as usize]),
                (false, true) => ((qa + qb).error(pos[b as usize]).max(0.0), pos[b as usize]),
                (false, false) => {
                    let p = collapse_cost(&qa, &qb, pos[a as usize], pos[b as usize], cfg);
                    (p.cost, p.position)
                }
            };
            if d.check_collapse(a, b, placement).is_err() {
                continue;
            }
            costs.insert((a, b), cost);
            if best.is_none_or(|(c, e)| cost < c || (cost == c && (a, b) < e)) {
                best = Some((cost, (a, b)));
            }
        }

        let before: Vec<Option<[f64; 3]>> = faces
            .iter()
            .map(|f| f.map(|f| normal(f.map(|v| pos[v as usize]))))
            .collect();

        let step = d.step();
        let (step, (min_cost, _)) = match (step, best) {
            (None, None) => break,
            (Some(s), Some(b)) => (s, b),
            (s, b) => return Err(format!("step {steps}: decimator {s:?} vs oracle {b:?}")),
        };
        let tol = 1e-9 * (1.0 + min_cost.abs());
        let executed = key(step.kept, step.removed);
        let Some(&executed_cost) = costs.get(&executed) else {
            return Err(format!("step {steps}: executed {executed:?} is not admissible"));
        };
        if (executed_cost - min_cost).abs() > tol || (step.cost - min_cost).abs() > tol {
            return Err(format!(
                "step {steps}: executed {executed:?} at {} (oracle re-cost {executed_cost}), minimum {min_cost}",
                step.cost
            ));
        }

        // Apply the collapse to the oracle's own state.
        let (k, r) = (step.kept, step.removed);
        let moved = std::mem::take(&mut members[r as usize]);
        members[k as usize].extend(moved);
        pinned[k as usize] |= pinned[r as usize];
        pos[k as usize] = step.placement;
        for f in faces.iter_mut() {
            if let Some(face) = f {
                if face.contains(&r) {
                    if face.contains(&k) {
                        *f = None;
                    } else {
                        for v in face.iter_mut() {
                            if *v == r {
                                *v = k;
                            }
                        }
                    }
                }
            }
        }
        alive -= 1;
        for (f, n0) in faces.iter().zip(&before) {
            if let (Some(face), Some(n0)) = (f, n0) {
                let n1 = normal(face.map(|v| pos[v as usize]));
                if dot(*n0, *n0) > 0.0 && dot(*n0, n1) < 0.0 {
                    normal_flips += 1;
                }
            }
        }
        steps += 1;
    }

    Ok(OracleOutcome {
        steps,
        normal_flips,
        output: d.to_mesh(),
    })
}

/// Random closed sphere (radially perturbed) or open height-field grid with
/// at most 100 vertices. Returns the mesh and whether it is closed.
pub fn random_small_mesh(seed: u64) -> (Mesh, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if rng.gen_bool(0.6) {
        let n = rng.gen_range(12..=100);
        let mut m = meshforge::backends::procedural::sphere_with_vertices(n);
        let radii = [rng.gen_range(0.5..1.5), rng.gen_range(0.5..1.5), rng.gen_range(0.5..1.5)];
        for v in &mut m.vertices {
            let s: f32 = rng.gen_range(0.9..1.1);
            for k in 0..3 {
                v[k] *= s * radii[k] as f32;
            }
        }
        (m, true)
    } else {
        let w = rng.gen_range(3..=10u32);
        let h = rng.gen_range(3..=(100 / w).min(10));
        let mut v = Vec::new();
        for j in 0..h {
            for i in 0..w {
                v.push([
                    i as f32 + rng.gen_range(-0.2..0.2),
                    j as f32 + rng.gen_range(-0.2..0.2),
                    rng.gen_range(-0.5..0.5),
                ]);
            }
        }
        let mut f = Vec::new();
        for j in 0..h - 1 {
            for i in 0..w - 1 {
                let a = j * w + i;
                if rng.gen_bool(0.5) {
                    f.push([a, a + 1, a + w + 1]);
                    f.push([a, a + w + 1, a + w]);
                } else {
                    f.push([a, a + 1, a + w]);
                    f.push([a + 1, a + w + 1, a + w]);
                }
            }
        }
        (Mesh::new(v, f), false)
    }
}
