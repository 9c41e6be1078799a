//! Vertex-budget comparison table: one row per target, averaged over a set
//! of meshes.

use std::path::Path;

use anyhow::{bail, Context};
use meshforge::backends::mock::mock_mesh;
use meshforge::mesh::{binary_size, read_mesh, Mesh, MeshFormat};
use meshforge::simplify::{vertex_budget_sweep, SimplifyConfig};
use serde::{Deserialize, Serialize};

pub const DEFAULT_TARGETS: [usize; 5] = [500, 800, 1000, 1500, 2000];

/// Vertex count of the mock meshes used when no directory is given.
pub const MOCK_VERTICES: usize = 13_944;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub target_vertices: usize,
    pub meshes: usize,
    pub mean_vertices: f64,
    pub mean_faces: f64,
    pub mean_bytes: f64,
    pub mean_mb: f64,
    pub raw_mean_bytes: f64,
    /// Raw mean bytes over simplified mean bytes.
    pub size_ratio: f64,
    /// Decimation time from the raw mesh down to this target.
    pub mean_seconds: f64,
    pub guard_blocked: usize,
    pub euler_preserved: usize,
}

/// Parses `500,800,1000`; sorted and deduplicated.
pub fn parse_targets(list: &str) -> anyhow::Result<Vec<usize>> {
    let mut out = list
        .split(',')
        .map(|t| t.trim().parse::<usize>().with_context(|| format!("bad target {t:?}")))
        .collect::<anyhow::Result<Vec<_>>>()?;
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Every `.mforge` / `.obj` file in `dir`, by file name.
pub fn load_dir(dir: &Path) -> anyhow::Result<Vec<(String, Mesh)>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()).and_then(MeshFormat::from_extension).is_some())
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let format = MeshFormat::from_extension(p.extension().and_then(|e| e.to_str()).unwrap_or_default()).expect("filtered above");
        let bytes = std::fs::read(&p).with_context(|| format!("reading {}", p.display()))?;
        let mesh = read_mesh(&bytes, format).with_context(|| format!("decoding {}", p.display()))?;
        out.push((p.file_name().unwrap_or_default().to_string_lossy().into_owned(), mesh));
    }
    Ok(out)
}

/// `count` mock-generator meshes of [`MOCK_VERTICES`] vertices.
pub fn mock_set(count: usize) -> Vec<(String, Mesh)> {
    (0..count)
        .map(|i| {
            let label = format!("object {i}");
            let mesh = mock_mesh(&label, Some(MOCK_VERTICES));
            (label, mesh)
        })
        .collect()
}

pub fn sweep_table(meshes: &[(String, Mesh)], targets: &[usize]) -> anyhow::Result<Vec<SweepRow>> {
    if meshes.is_empty() {
        bail!("no meshes to sweep");
    }
    let n = meshes.len() as f64;
    let mut rows: Vec<SweepRow> = targets
        .iter()
        .map(|&t| SweepRow {
            target_vertices: t,
            meshes: meshes.len(),
            mean_vertices: 0.0,
            mean_faces: 0.0,
            mean_bytes: 0.0,
            mean_mb: 0.0,
            raw_mean_bytes: 0.0,
            size_ratio: 0.0,
            mean_seconds: 0.0,
            guard_blocked: 0,
            euler_preserved: 0,
        })
        .collect();
    let raw_mean = meshes.iter().map(|(_, m)| binary_size(m.vertex_count(), m.face_count()) as f64).sum::<f64>() / n;
    for (name, mesh) in meshes {
        let chi = mesh.stats().with_context(|| format!("{name} is invalid"))?.euler_characteristic;
        let results = vertex_budget_sweep(mesh, targets, &SimplifyConfig::default()).with_context(|| format!("simplifying {name}"))?;
        for (row, (out, report)) in rows.iter_mut().zip(results) {
            row.mean_vertices += out.vertex_count() as f64 / n;
            row.mean_faces += out.face_count() as f64 / n;
            row.mean_bytes += binary_size(out.vertex_count(), out.face_count()) as f64 / n;
            row.mean_seconds += report.decimation_seconds / n;
            row.guard_blocked += usize::from(report.guard_blocked);
            row.euler_preserved += usize::from(out.stats().map(|s| s.euler_characteristic == chi).unwrap_or(false));
        }
    }
    for row in &mut rows {
        row.raw_mean_bytes = raw_mean;
        row.mean_mb = row.mean_bytes / 1e6;
        row.size_ratio = raw_mean / row.mean_bytes;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn targets_are_sorted_and_unique() {
        assert_eq!(parse_targets("2000, 500,800,500").unwrap(), [500, 800, 2000]);
        assert!(parse_targets("500,x").is_err());
    }

    #[test]
    fn rows_follow_targets() {
        let meshes: Vec<_> = (0..2).map(|i| (format!("m{i}"), mock_mesh(&format!("m{i}"), Some(600)))).collect();
        let rows = sweep_table(&meshes, &[100, 300]).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].mean_vertices, 100.0);
        assert_eq!(rows[1].mean_faces, 596.0);
        assert_eq!(rows[1].mean_bytes, binary_size(300, 596) as f64);
        assert_eq!(rows[0].euler_preserved, 2);
        assert!(rows[0].size_ratio > rows[1].size_ratio);
        assert!(sweep_table(&[], &[100]).is_err());
    }
}
