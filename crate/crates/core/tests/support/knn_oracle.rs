//! Brute-force cosine top-k, independent of the repository's index.

use meshforge::repo::{AssetRecord, EmbeddingVector};
use rand::Rng;

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Ids of the best `k` records, sorted by score then age then insertion order.
pub fn top_k(records: &[AssetRecord], query: &[f64], k: usize, min_score: f64) -> Vec<String> {
    let mut scored: Vec<(f64, usize)> = records
        .iter()
        .enumerate()
        .map(|(i, r)| (cosine(r.embedding.values(), query), i))
        .filter(|(s, _)| *s >= min_score)
        .collect();
    scored.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(records[a.1].created_at.cmp(&records[b.1].created_at))
            .then(a.1.cmp(&b.1))
    });
    scored.into_iter().take(k).map(|(_, i)| records[i].id.clone()).collect()
}

pub fn random_unit(rng: &mut impl Rng, dim: usize) -> EmbeddingVector {
    let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    EmbeddingVector::new(v.into_iter().map(|x| x / n).collect()).unwrap()
}
