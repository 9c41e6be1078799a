use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::RepoError;

pub const DEFAULT_DIMENSION: usize = 384;

/// Fixed-length embedding with its L2 norm cached.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    norm: f64,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, RepoError> {
        if !values.iter().all(|v| v.is_finite()) {
            return Err(RepoError::NonFiniteEmbedding);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(Self { values, norm })
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Unit-length copy; the zero vector stays zero.
    pub fn normalized(&self) -> Vec<f64> {
        if self.norm == 0.0 {
            return self.values.clone();
        }
        self.values.iter().map(|v| v / self.norm).collect()
    }

    /// Cosine similarity in `[-1, 1]`, 0 when either side is the zero vector.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        if self.norm == 0.0 || other.norm == 0.0 {
            return 0.0;
        }
        let dot: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        (dot / (self.norm * other.norm)).clamp(-1.0, 1.0)
    }
}

impl Serialize for EmbeddingVector {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.values.serialize(s)
    }
}

impl<'de> Deserialize<'de> for EmbeddingVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(d)?;
        EmbeddingVector::new(values).map_err(serde::de::Error::custom)
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RepoError>;
}

/// Embeds a non-empty label with `provider`.
pub fn embed(label: &str, provider: &dyn EmbeddingProvider) -> Result<EmbeddingVector, RepoError> {
    if label.trim().is_empty() {
        return Err(RepoError::EmptyLabel);
    }
    provider.embed(label)
}

/// Model-free embedder: signed feature hashing of whole words and padded
/// character trigrams, L2-normalised.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dimension: usize,
}

impl HashingEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0);
        Self { dimension }
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION)
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl EmbeddingProvider for HashingEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RepoError> {
        let mut v = vec![0.0f64; self.dimension];
        let mut add = |feature: &[u8], weight: f64| {
            let h = fnv1a(feature);
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % self.dimension as u64) as usize] += sign * weight;
        };
        let lower = text.to_lowercase();
        for word in lower.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
            let mut token = b"w:".to_vec();
            token.extend_from_slice(word.as_bytes());
            add(&token, 1.0);
            let padded: Vec<char> = std::iter::once('<')
                .chain(word.chars())
                .chain(std::iter::once('>'))
                .collect();
            for gram in padded.windows(3) {
                let s: String = gram.iter().collect();
                add(s.as_bytes(), 1.0);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        EmbeddingVector::new(v)
    }
}
