//! Quadric edge-collapse decimation.
//!
//! Every vertex carries the sum of the area-weighted plane quadrics of its
//! faces. Edges sit in a lazy-deletion min-heap keyed by collapse cost; each
//! entry records the version stamps of both endpoints and is skipped on pop
//! when either endpoint changed since it was pushed. Ties break on the
//! `(min, max)` vertex pair, so a run is fully deterministic.
//!
//! A collapse is refused when it would break the link condition (which keeps
//! the surface manifold and its Euler characteristic intact) or turn any
//! surviving face's normal through 90 degrees or more. Refused edges are
//! parked on both endpoints and re-queued once their neighbourhood changes.

mod quadric;

pub use quadric::{collapse_cost, compute_vertex_quadrics, CollapseCandidate, Placement, Quadric};

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{edge_key, Mesh, MeshError, ValidationReport};
use quadric::{cross, dot, sub};

pub const DEFAULT_TARGET_VERTICES: usize = 1000;
pub const MIN_TARGET_VERTICES: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum SimplifyError {
    #[error("target vertex count {0} is below the minimum of 4")]
    TargetTooSmall(usize),
    #[error("mesh is invalid: {0}")]
    InvalidMesh(ValidationReport),
    #[error("sweep targets must be sorted ascending")]
    UnsortedTargets,
    #[error("{0}")]
    Mesh(String),
}

impl From<MeshError> for SimplifyError {
    fn from(e: MeshError) -> Self {
        match e {
            MeshError::Invalid(r) => SimplifyError::InvalidMesh(r),
            other => SimplifyError::Mesh(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlacementStrategy {
    /// Solve for the quadric minimiser, falling back to midpoint/endpoints.
    OptimalSolve,
    /// Best of midpoint and endpoints only.
    MidpointFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplifyConfig {
    pub target_vertices: usize,
    /// Pin boundary vertices in place.
    pub preserve_boundary: bool,
    pub placement_strategy: PlacementStrategy,
    /// Minimum `|det|` of the 3x3 block for the optimal solve.
    pub singular_threshold: f64,
}

impl Default for SimplifyConfig {
    fn default() -> Self {
        Self {
            target_vertices: DEFAULT_TARGET_VERTICES,
            preserve_boundary: true,
            placement_strategy: PlacementStrategy::OptimalSolve,
            singular_threshold: 1e-12,
        }
    }
}

impl SimplifyConfig {
    pub fn with_target(target_vertices: usize) -> Self {
        Self {
            target_vertices,
            ..Self::default()
        }
    }

    pub fn check(&self) -> Result<(), SimplifyError> {
        if self.target_vertices < MIN_TARGET_VERTICES {
            return Err(SimplifyError::TargetTooSmall(self.target_vertices));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplifyReport {
    pub target_vertices: usize,
    pub initial_vertices: usize,
    pub initial_faces: usize,
    pub final_vertices: usize,
    pub final_faces: usize,
    pub collapses: usize,
    /// Sum of the costs of every executed collapse.
    pub total_error: f64,
    /// Set when guards blocked every remaining candidate above the target.
    pub guard_blocked: bool,
    pub decimation_seconds: f64,
    /// Filled in by callers that also serialize the result.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub serialize_seconds: Option<f64>,
}

impl SimplifyReport {
    /// Equality ignoring wall-clock fields.
    pub fn same_outcome(&self, other: &SimplifyReport) -> bool {
        let strip = |r: &SimplifyReport| SimplifyReport {
            decimation_seconds: 0.0,
            serialize_seconds: None,
            ..r.clone()
        };
        strip(self) == strip(other)
    }
}

/// One executed collapse: `removed` merged into `kept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollapseStep {
    pub kept: u32,
    pub removed: u32,
    pub cost: f64,
    pub placement: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Blocked {
    BothPinned,
    LinkCondition,
    NormalFlip,
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    cost: f64,
    a: u32,
    b: u32,
    stamp_a: u32,
    stamp_b: u32,
    placement: [f64; 3],
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then(self.a.cmp(&other.a))
            .then(self.b.cmp(&other.b))
    }
}

/// Incremental decimation state. [`simplify`] drives it to a target; tests
/// and tooling can step it one collapse at a time.
pub struct Decimator {
    cfg: SimplifyConfig,
    positions: Vec<[f64; 3]>,
    quadrics: Vec<Quadric>,
    faces: Vec<[u32; 3]>,
    face_alive: Vec<bool>,
    vertex_faces: Vec<Vec<u32>>,
    vertex_alive: Vec<bool>,
    pinned: Vec<bool>,
    stamps: Vec<u32>,
    parked: Vec<Vec<(u32, u32)>>,
    heap: BinaryHeap<Reverse<Entry>>,
    alive_vertices: usize,
    alive_faces: usize,
    total_error: f64,
    collapses: usize,
}

impl Decimator {
    pub fn new(mesh: &Mesh, cfg: &SimplifyConfig) -> Result<Self, SimplifyError> {
        cfg.check()?;
        let quadrics = compute_vertex_quadrics(mesh)?;
        let n = mesh.vertices.len();
        let mut vertex_faces = vec![Vec::new(); n];
        for (fi, f) in mesh.faces.iter().enumerate() {
            for &v in f {
                vertex_faces[v as usize].push(fi as u32);
            }
        }
        let pinned = if cfg.preserve_boundary {
            mesh.boundary_vertices()
        } else {
            vec![false; n]
        };
        // Vertices that no face references are carried through untouched.
        let alive_vertices = n;
        let mut d = Decimator {
            cfg: cfg.clone(),
            positions: mesh.vertices.iter().map(|v| v.map(f64::from)).collect(),
            quadrics,
            faces: mesh.faces.clone(),
            face_alive: vec![true; mesh.faces.len()],
            vertex_faces,
            vertex_alive: vec![true; n],
            pinned,
            stamps: vec![0; n],
            parked: vec![Vec::new(); n],
            heap: BinaryHeap::new(),
            alive_vertices,
            alive_faces: mesh.faces.len(),
            total_error: 0.0,
            collapses: 0,
        };
        let mut edges: Vec<(u32, u32)> = mesh
            .faces
            .iter()
            .flat_map(|f| [edge_key(f[0], f[1]), edge_key(f[1], f[2]), edge_key(f[2], f[0])])
            .collect();
        edges.sort_unstable();
        edges.dedup();
        for (a, b) in edges {
            d.push_edge(a, b);
        }
        Ok(d)
    }

    pub fn vertex_count(&self) -> usize {
        self.alive_vertices
    }

    pub fn face_count(&self) -> usize {
        self.alive_faces
    }

    pub fn total_error(&self) -> f64 {
        self.total_error
    }

    pub fn collapses(&self) -> usize {
        self.collapses
    }

    pub fn is_vertex_alive(&self, v: u32) -> bool {
        self.vertex_alive[v as usize]
    }

    pub fn position(&self, v: u32) -> [f64; 3] {
        self.positions[v as usize]
    }

    pub fn quadric(&self, v: u32) -> Quadric {
        self.quadrics[v as usize]
    }

    pub fn is_pinned(&self, v: u32) -> bool {
        self.pinned[v as usize]
    }

    pub fn config(&self) -> &SimplifyConfig {
        &self.cfg
    }

    /// Current undirected edges as `(min, max)` pairs, sorted.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut edges: Vec<(u32, u32)> = self
            .live_faces()
            .flat_map(|f| [edge_key(f[0], f[1]), edge_key(f[1], f[2]), edge_key(f[2], f[0])])
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    fn live_faces(&self) -> impl Iterator<Item = [u32; 3]> + '_ {
        self.faces
            .iter()
            .zip(&self.face_alive)
            .filter(|(_, &alive)| alive)
            .map(|(f, _)| *f)
    }

    /// Collapse candidate for the edge as the queue would score it, or `None`
    /// when both endpoints are pinned.
    pub fn candidate(&self, a: u32, b: u32) -> Option<CollapseCandidate> {
        let (a, b) = edge_key(a, b);
        let (pa, pb) = (self.pinned[a as usize], self.pinned[b as usize]);
        let qa = &self.quadrics[a as usize];
        let qb = &self.quadrics[b as usize];
        let placement = match (pa, pb) {
            (true, true) => return None,
            (true, false) | (false, true) => {
                let p = if pa { self.positions[a as usize] } else { self.positions[b as usize] };
                Placement {
                    cost: (*qa + *qb).error(p).max(0.0),
                    position: p,
                }
            }
            (false, false) => collapse_cost(qa, qb, self.positions[a as usize], self.positions[b as usize], &self.cfg),
        };
        Some(CollapseCandidate {
            edge: (a, b),
            cost: placement.cost,
            placement: placement.position,
        })
    }

    fn neighbors(&self, v: u32) -> Vec<u32> {
        let mut out: Vec<u32> = self.vertex_faces[v as usize]
            .iter()
            .flat_map(|&f| self.faces[f as usize])
            .filter(|&u| u != v)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn shared_faces(&self, a: u32, b: u32) -> impl Iterator<Item = u32> + '_ {
        self.vertex_faces[a as usize]
            .iter()
            .copied()
            .filter(move |&f| self.faces[f as usize].contains(&b))
    }

    /// On a manifold surface an interior vertex has as many faces as neighbours.
    fn is_boundary_vertex(&self, v: u32, neighbors: &[u32]) -> bool {
        self.vertex_faces[v as usize].len() != neighbors.len()
    }

    /// Guard check for collapsing `b` into `a` at `placement`.
    pub fn check_collapse(&self, a: u32, b: u32, placement: [f64; 3]) -> Result<(), Blocked> {
        if self.pinned[a as usize] && self.pinned[b as usize] {
            return Err(Blocked::BothPinned);
        }

        let shared: Vec<u32> = self.shared_faces(a, b).collect();
        if shared.is_empty() || shared.len() > 2 {
            return Err(Blocked::LinkCondition);
        }
        let mut opposite: Vec<u32> = shared
            .iter()
            .map(|&f| {
                *self.faces[f as usize]
                    .iter()
                    .find(|&&x| x != a && x != b)
                    .unwrap()
            })
            .collect();
        opposite.sort_unstable();
        let na = self.neighbors(a);
        let nb = self.neighbors(b);
        let common: Vec<u32> = na.iter().copied().filter(|x| nb.binary_search(x).is_ok()).collect();
        if common != opposite {
            return Err(Blocked::LinkCondition);
        }
        // An interior edge between two boundary vertices would pinch the surface.
        if shared.len() == 2 && self.is_boundary_vertex(a, &na) && self.is_boundary_vertex(b, &nb) {
            return Err(Blocked::LinkCondition);
        }
        // Neither a lone triangle nor a tetrahedron can lose a vertex.
        if (shared.len() == 1 && na.len() == 2 && nb.len() == 2)
            || (shared.len() == 2 && na.len() == 3 && nb.len() == 3)
        {
            return Err(Blocked::LinkCondition);
        }

        for &v in &[a, b] {
            for &f in &self.vertex_faces[v as usize] {
                let face = self.faces[f as usize];
                if face.contains(&a) && face.contains(&b) {
                    continue;
                }
                let old = face.map(|i| self.positions[i as usize]);
                let new = face.map(|i| {
                    if i == a || i == b {
                        placement
                    } else {
                        self.positions[i as usize]
                    }
                });
                let n_old = cross(sub(old[1], old[0]), sub(old[2], old[0]));
                let n_new = cross(sub(new[1], new[0]), sub(new[2], new[0]));
                if dot(n_old, n_old) > 0.0 && dot(n_old, n_new) <= 0.0 {
                    return Err(Blocked::NormalFlip);
                }
            }
        }
        Ok(())
    }

    fn push_edge(&mut self, a: u32, b: u32) {
        if let Some(c) = self.candidate(a, b) {
            let (a, b) = c.edge;
            self.heap.push(Reverse(Entry {
                cost: c.cost,
                a,
                b,
                stamp_a: self.stamps[a as usize],
                stamp_b: self.stamps[b as usize],
                placement: c.placement,
            }));
        }
    }

    fn is_current(&self, e: &Entry) -> bool {
        self.vertex_alive[e.a as usize]
            && self.vertex_alive[e.b as usize]
            && self.stamps[e.a as usize] == e.stamp_a
            && self.stamps[e.b as usize] == e.stamp_b
    }

    /// Executes the cheapest admissible collapse. `None` when no candidate
    /// passes the guards.
    pub fn step(&mut self) -> Option<CollapseStep> {
        while let Some(Reverse(e)) = self.heap.pop() {
            if !self.is_current(&e) {
                continue;
            }
            if self.check_collapse(e.a, e.b, e.placement).is_err() {
                self.parked[e.a as usize].push((e.a, e.b));
                self.parked[e.b as usize].push((e.a, e.b));
                continue;
            }
            self.collapse(e.a, e.b, e.placement, e.cost);
            return Some(CollapseStep {
                kept: e.a,
                removed: e.b,
                cost: e.cost,
                placement: e.placement,
            });
        }
        None
    }

    fn collapse(&mut self, keep: u32, remove: u32, placement: [f64; 3], cost: f64) {
        let (k, r) = (keep as usize, remove as usize);
        let removed_faces = std::mem::take(&mut self.vertex_faces[r]);
        for f in removed_faces {
            let face = &mut self.faces[f as usize];
            if face.contains(&keep) {
                self.face_alive[f as usize] = false;
                self.alive_faces -= 1;
                for &v in face.iter() {
                    if v != remove {
                        self.vertex_faces[v as usize].retain(|&x| x != f);
                    }
                }
            } else {
                for v in face.iter_mut() {
                    if *v == remove {
                        *v = keep;
                    }
                }
                self.vertex_faces[k].push(f);
            }
        }
        self.vertex_faces[k].sort_unstable();
        self.vertex_alive[r] = false;
        self.alive_vertices -= 1;
        self.positions[k] = placement;
        let qr = self.quadrics[r];
        self.quadrics[k] += qr;
        self.pinned[k] |= self.pinned[r];
        self.total_error += cost;
        self.collapses += 1;

        let ring = self.neighbors(keep);
        self.stamps[k] += 1;
        for &u in &ring {
            self.push_edge(keep, u);
        }
        // Costs elsewhere are unchanged, but guards of edges touching the
        // 1-ring may have flipped.
        self.parked[r].clear();
        for u in std::iter::once(keep).chain(ring) {
            for (x, y) in std::mem::take(&mut self.parked[u as usize]) {
                if self.vertex_alive[x as usize]
                    && self.vertex_alive[y as usize]
                    && self.shared_faces(x, y).next().is_some()
                {
                    self.push_edge(x, y);
                }
            }
        }
    }

    /// Runs until the vertex count reaches `target` or no collapse is
    /// admissible. Returns `true` when the target was reached.
    pub fn run_to(&mut self, target: usize) -> bool {
        while self.alive_vertices > target {
            if self.step().is_none() {
                return false;
            }
        }
        true
    }

    /// Compacts the surviving vertices and faces, preserving original order.
    pub fn to_mesh(&self) -> Mesh {
        let mut remap = vec![u32::MAX; self.positions.len()];
        let mut vertices = Vec::with_capacity(self.alive_vertices);
        for (i, p) in self.positions.iter().enumerate() {
            if self.vertex_alive[i] {
                remap[i] = vertices.len() as u32;
                vertices.push(p.map(|c| c as f32));
            }
        }
        let faces = self
            .live_faces()
            .map(|f| f.map(|v| remap[v as usize]))
            .collect();
        Mesh::new(vertices, faces)
    }
}

/// Decimates `mesh` to at most `cfg.target_vertices` vertices.
pub fn simplify(mesh: &Mesh, cfg: &SimplifyConfig) -> Result<(Mesh, SimplifyReport), SimplifyError> {
    let start = Instant::now();
    let mut d = Decimator::new(mesh, cfg)?;
    let reached = d.run_to(cfg.target_vertices);
    let out = if d.collapses() == 0 { mesh.clone() } else { d.to_mesh() };
    let report = SimplifyReport {
        target_vertices: cfg.target_vertices,
        initial_vertices: mesh.vertex_count(),
        initial_faces: mesh.face_count(),
        final_vertices: out.vertex_count(),
        final_faces: out.face_count(),
        collapses: d.collapses(),
        total_error: d.total_error(),
        guard_blocked: !reached,
        decimation_seconds: start.elapsed().as_secs_f64(),
        serialize_seconds: None,
    };
    Ok((out, report))
}

/// One report per target. Runs a single decimation from the largest target
/// down; each snapshot equals an independent [`simplify`] at that target.
pub fn vertex_budget_sweep(
    mesh: &Mesh,
    targets: &[usize],
    base: &SimplifyConfig,
) -> Result<Vec<(Mesh, SimplifyReport)>, SimplifyError> {
    if targets.windows(2).any(|w| w[0] > w[1]) {
        return Err(SimplifyError::UnsortedTargets);
    }
    if let Some(&t) = targets.first() {
        if t < MIN_TARGET_VERTICES {
            return Err(SimplifyError::TargetTooSmall(t));
        }
    }
    let start = Instant::now();
    let mut d = Decimator::new(mesh, base)?;
    let mut out: Vec<(Mesh, SimplifyReport)> = Vec::with_capacity(targets.len());
    for &target in targets.iter().rev() {
        let reached = d.run_to(target);
        let m = if d.collapses() == 0 { mesh.clone() } else { d.to_mesh() };
        let report = SimplifyReport {
            target_vertices: target,
            initial_vertices: mesh.vertex_count(),
            initial_faces: mesh.face_count(),
            final_vertices: m.vertex_count(),
            final_faces: m.face_count(),
            collapses: d.collapses(),
            total_error: d.total_error(),
            guard_blocked: !reached,
            decimation_seconds: start.elapsed().as_secs_f64(),
            serialize_seconds: None,
        };
        out.push((m, report));
    }
    out.reverse();
    Ok(out)
}
