//! Embedding-keyed repository of generated assets.
//!
//! On disk a repository is a directory holding
//!
//! * `meta.jsonl`: append-only log of [`LogEntry`] lines, replayed on open;
//! * `blobs/<sha256>.mforge`: content-addressed meshes in the compact binary
//!   format.
//!
//! Similarity search is an exact scan over unit-normalised rows. Readers take
//! a shared lock on the in-memory state; writers are serialised through the
//! log handle, and a record becomes visible only after its log line is synced.

mod embed;

pub use embed::{embed, EmbeddingProvider, EmbeddingVector, HashingEmbedder, DEFAULT_DIMENSION};
pub(crate) use embed::fnv1a;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::mesh::{read_mesh, write_mesh, Mesh, MeshError, MeshFormat};

pub const DEFAULT_DUPLICATE_THRESHOLD: f64 = 0.92;
const LOG_FILE: &str = "meta.jsonl";
const BLOB_DIR: &str = "blobs";
const LOG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RepoError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("embedding has dimension {got}, repository expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding contains non-finite values")]
    NonFiniteEmbedding,
    #[error("label must not be empty")]
    EmptyLabel,
    #[error("blob {0} is not in the store")]
    UnknownBlob(String),
    #[error("asset {0} not found")]
    NotFound(String),
    #[error("meta.jsonl line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("stored mesh is unreadable: {0}")]
    Mesh(#[from] MeshError),
    #[error("embedding provider unreachable: {0}")]
    ProviderUnreachable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssetSource {
    Generated,
    Imported,
    ImageDerived,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetRecord {
    pub id: String,
    pub label: String,
    pub embedding: EmbeddingVector,
    /// SHA-256 hex of the `.mforge` bytes.
    pub mesh_ref: String,
    pub source: AssetSource,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub hit_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityHit {
    pub id: String,
    pub label: String,
    pub score: f64,
}

/// One `meta.jsonl` line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum LogEntry {
    Create { version: u32, dimension: usize },
    Upsert { record: AssetRecord },
    Hit { id: String, at: DateTime<Utc> },
}

/// Parses a single log line.
pub fn decode_log_line(line: &str) -> Result<LogEntry, serde_json::Error> {
    serde_json::from_str(line)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepoConfig {
    pub dimension: usize,
    pub duplicate_threshold: f64,
}

impl Default for RepoConfig {
    fn default() -> Self {
        Self {
            dimension: DEFAULT_DIMENSION,
            duplicate_threshold: DEFAULT_DUPLICATE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepoStats {
    pub records: usize,
    pub blobs: usize,
    pub dimension: usize,
    pub total_hits: u64,
    pub by_source: HashMap<AssetSource, usize>,
}

#[derive(Default)]
struct State {
    records: Vec<AssetRecord>,
    by_id: HashMap<String, usize>,
    /// Row-major unit vectors, one row per record.
    rows: Vec<f64>,
}

impl State {
    fn apply(&mut self, entry: LogEntry, dimension: usize) -> Result<(), String> {
        match entry {
            LogEntry::Create { .. } => Ok(()),
            LogEntry::Upsert { record } => {
                if record.embedding.dimension() != dimension {
                    return Err(format!(
                        "record {} has dimension {}",
                        record.id,
                        record.embedding.dimension()
                    ));
                }
                let row = record.embedding.normalized();
                match self.by_id.get(&record.id) {
                    Some(&i) => {
                        self.rows[i * dimension..(i + 1) * dimension].copy_from_slice(&row);
                        self.records[i] = record;
                    }
                    None => {
                        self.by_id.insert(record.id.clone(), self.records.len());
                        self.rows.extend_from_slice(&row);
                        self.records.push(record);
                    }
                }
                Ok(())
            }
            LogEntry::Hit { id, .. } => match self.by_id.get(&id) {
                Some(&i) => {
                    self.records[i].hit_count += 1;
                    Ok(())
                }
                None => Err(format!("hit for unknown asset {id}")),
            },
        }
    }
}

enum BlobStore {
    Memory(Mutex<HashMap<String, Arc<Vec<u8>>>>),
    Disk(PathBuf),
}

pub struct Repository {
    config: RepoConfig,
    embedder: Arc<dyn EmbeddingProvider>,
    state: RwLock<State>,
    log: Mutex<Option<File>>,
    blobs: BlobStore,
    dir: Option<PathBuf>,
}

#[derive(PartialEq)]
struct Ranked {
    score: f64,
    created_at: DateTime<Utc>,
    index: usize,
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// `Greater` ranks first: higher score, then older, then inserted earlier.
impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then(other.created_at.cmp(&self.created_at))
            .then(other.index.cmp(&self.index))
    }
}

impl Repository {
    /// Volatile repository; nothing touches the filesystem.
    pub fn in_memory(config: RepoConfig, embedder: Arc<dyn EmbeddingProvider>) -> Self {
        Self {
            config,
            embedder,
            state: RwLock::new(State::default()),
            log: Mutex::new(None),
            blobs: BlobStore::Memory(Mutex::new(HashMap::new())),
            dir: None,
        }
    }

    /// Opens (or creates) a repository directory and replays its log.
    pub fn open(dir: impl AsRef<Path>, config: RepoConfig, embedder: Arc<dyn EmbeddingProvider>) -> Result<Self, RepoError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(dir.join(BLOB_DIR))?;
        let log_path = dir.join(LOG_FILE);
        let mut state = State::default();

        if log_path.exists() {
            let bytes = fs::read(&log_path)?;
            let ends_clean = bytes.last().is_none_or(|&b| b == b'\n');
            let lines: Vec<&[u8]> = bytes.split(|&b| b == b'\n').collect();
            let count = lines.len();
            for (i, raw) in lines.into_iter().enumerate() {
                if raw.iter().all(|b| b.is_ascii_whitespace()) {
                    continue;
                }
                let is_last = i + 1 == count;
                let text = std::str::from_utf8(raw).map_err(|e| RepoError::Corrupt {
                    line: i + 1,
                    message: e.to_string(),
                });
                let parsed = text.and_then(|t| {
                    decode_log_line(t).map_err(|e| RepoError::Corrupt {
                        line: i + 1,
                        message: e.to_string(),
                    })
                });
                let entry = match parsed {
                    Ok(entry) => entry,
                    // A crash mid-append leaves an unterminated last line; drop it.
                    Err(_) if is_last && !ends_clean => {
                        tracing::warn!(line = i + 1, "dropping torn final log line");
                        break;
                    }
                    Err(e) => return Err(e),
                };
                if let LogEntry::Create { dimension, .. } = entry {
                    if dimension != config.dimension {
                        return Err(RepoError::DimensionMismatch {
                            expected: dimension,
                            got: config.dimension,
                        });
                    }
                }
                state
                    .apply(entry, config.dimension)
                    .map_err(|message| RepoError::Corrupt { line: i + 1, message })?;
            }
            if !ends_clean {
                // Truncate the torn tail so the next append starts on a fresh line.
                let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
                let f = OpenOptions::new().write(true).open(&log_path)?;
                f.set_len(keep as u64)?;
            }
        }

        let mut file = OpenOptions::new().create(true).append(true).open(&log_path)?;
        if file.metadata()?.len() == 0 {
            let line = serde_json::to_string(&LogEntry::Create {
                version: LOG_VERSION,
                dimension: config.dimension,
            })
            .expect("log entry serializes");
            file.write_all(line.as_bytes())?;
            file.write_all(b"\n")?;
            file.sync_data()?;
        }

        Ok(Self {
            config,
            embedder,
            state: RwLock::new(state),
            log: Mutex::new(Some(file)),
            blobs: BlobStore::Disk(dir.join(BLOB_DIR)),
            dir: Some(dir),
        })
    }

    pub fn config(&self) -> &RepoConfig {
        &self.config
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn embedder(&self) -> &Arc<dyn EmbeddingProvider> {
        &self.embedder
    }

    pub fn len(&self) -> usize {
        self.state.read().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn embed(&self, label: &str) -> Result<EmbeddingVector, RepoError> {
        let v = embed(label, self.embedder.as_ref())?;
        self.check_dimension(&v)?;
        Ok(v)
    }

    fn check_dimension(&self, v: &EmbeddingVector) -> Result<(), RepoError> {
        if v.dimension() != self.config.dimension {
            return Err(RepoError::DimensionMismatch {
                expected: self.config.dimension,
                got: v.dimension(),
            });
        }
        Ok(())
    }

    /// Validates and stores a mesh, returning its content key.
    pub fn put_blob(&self, mesh: &Mesh) -> Result<String, RepoError> {
        mesh.ensure_valid()?;
        let bytes = write_mesh(mesh, MeshFormat::Binary);
        let key = hex::encode(Sha256::digest(&bytes));
        match &self.blobs {
            BlobStore::Memory(map) => {
                map.lock().entry(key.clone()).or_insert_with(|| Arc::new(bytes));
            }
            BlobStore::Disk(dir) => {
                let path = dir.join(format!("{key}.mforge"));
                if !path.exists() {
                    let tmp = dir.join(format!(".{key}.{}.tmp", uuid::Uuid::new_v4()));
                    let mut f = File::create(&tmp)?;
                    f.write_all(&bytes)?;
                    f.sync_all()?;
                    fs::rename(&tmp, &path)?;
                }
            }
        }
        Ok(key)
    }

    pub fn has_blob(&self, key: &str) -> bool {
        match &self.blobs {
            BlobStore::Memory(map) => map.lock().contains_key(key),
            BlobStore::Disk(dir) => is_blob_key(key) && dir.join(format!("{key}.mforge")).exists(),
        }
    }

    pub fn blob_bytes(&self, key: &str) -> Result<Vec<u8>, RepoError> {
        match &self.blobs {
            BlobStore::Memory(map) => map
                .lock()
                .get(key)
                .map(|b| b.as_ref().clone())
                .ok_or_else(|| RepoError::UnknownBlob(key.to_string())),
            BlobStore::Disk(dir) => {
                if !is_blob_key(key) {
                    return Err(RepoError::UnknownBlob(key.to_string()));
                }
                fs::read(dir.join(format!("{key}.mforge"))).map_err(|e| match e.kind() {
                    io::ErrorKind::NotFound => RepoError::UnknownBlob(key.to_string()),
                    _ => RepoError::Io(e),
                })
            }
        }
    }

    pub fn load_mesh(&self, key: &str) -> Result<Mesh, RepoError> {
        Ok(read_mesh(&self.blob_bytes(key)?, MeshFormat::Binary)?)
    }

    fn append(&self, entry: LogEntry) -> Result<(), RepoError> {
        let mut log = self.log.lock();
        if let Some(file) = log.as_mut() {
            let mut line = serde_json::to_vec(&entry).expect("log entry serializes");
            line.push(b'\n');
            file.write_all(&line)?;
            file.sync_data()?;
        }
        self.state
            .write()
            .apply(entry, self.config.dimension)
            .map_err(|message| RepoError::Corrupt { line: 0, message })
    }

    /// Inserts or replaces a record; durable once this returns.
    pub fn upsert(&self, record: AssetRecord) -> Result<String, RepoError> {
        if record.label.trim().is_empty() {
            return Err(RepoError::EmptyLabel);
        }
        self.check_dimension(&record.embedding)?;
        if !self.has_blob(&record.mesh_ref) {
            return Err(RepoError::UnknownBlob(record.mesh_ref));
        }
        let id = record.id.clone();
        self.append(LogEntry::Upsert { record })?;
        Ok(id)
    }

    /// Embeds `label`, stores `mesh` and upserts a fresh record.
    pub fn insert_asset(&self, label: &str, mesh: &Mesh, source: AssetSource) -> Result<AssetRecord, RepoError> {
        let embedding = self.embed(label)?;
        let mesh_ref = self.put_blob(mesh)?;
        let record = AssetRecord {
            id: uuid::Uuid::new_v4().to_string(),
            label: label.trim().to_string(),
            embedding,
            mesh_ref,
            source,
            created_at: Utc::now(),
            hit_count: 0,
        };
        self.upsert(record.clone())?;
        Ok(record)
    }

    pub fn get(&self, id: &str) -> Option<AssetRecord> {
        let state = self.state.read();
        state.by_id.get(id).map(|&i| state.records[i].clone())
    }

    pub fn records(&self) -> Vec<AssetRecord> {
        self.state.read().records.clone()
    }

    pub fn labels(&self) -> Vec<String> {
        self.state.read().records.iter().map(|r| r.label.clone()).collect()
    }

    /// Counts one served cache hit.
    pub fn record_hit(&self, id: &str) -> Result<(), RepoError> {
        if self.get(id).is_none() {
            return Err(RepoError::NotFound(id.to_string()));
        }
        self.append(LogEntry::Hit {
            id: id.to_string(),
            at: Utc::now(),
        })
    }

    /// Top-`k` records by cosine score with `score >= min_score`, best first.
    /// Equal scores rank the older record first.
    pub fn query_similar(&self, query: &EmbeddingVector, k: usize, min_score: f64) -> Result<Vec<SimilarityHit>, RepoError> {
        self.check_dimension(query)?;
        if k == 0 {
            return Ok(Vec::new());
        }
        let q = query.normalized();
        let dim = self.config.dimension;
        let state = self.state.read();
        let mut heap: BinaryHeap<std::cmp::Reverse<Ranked>> = BinaryHeap::with_capacity(k + 1);
        for (index, row) in state.rows.chunks_exact(dim).enumerate() {
            let score = row.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>().clamp(-1.0, 1.0);
            if score < min_score {
                continue;
            }
            let ranked = Ranked {
                score,
                created_at: state.records[index].created_at,
                index,
            };
            if heap.len() < k {
                heap.push(std::cmp::Reverse(ranked));
            } else if heap.peek().is_some_and(|worst| ranked > worst.0) {
                heap.pop();
                heap.push(std::cmp::Reverse(ranked));
            }
        }
        let mut best: Vec<Ranked> = heap.into_iter().map(|r| r.0).collect();
        best.sort_by(|a, b| b.cmp(a));
        Ok(best
            .into_iter()
            .map(|r| SimilarityHit {
                id: state.records[r.index].id.clone(),
                label: state.records[r.index].label.clone(),
                score: r.score,
            })
            .collect())
    }

    pub fn query_label(&self, label: &str, k: usize, min_score: f64) -> Result<Vec<SimilarityHit>, RepoError> {
        let q = self.embed(label)?;
        self.query_similar(&q, k, min_score)
    }

    /// Best match for `label` scoring at least `threshold`.
    pub fn find_duplicate(&self, label: &str, threshold: f64) -> Result<Option<String>, RepoError> {
        Ok(self.query_label(label, 1, threshold)?.into_iter().next().map(|h| h.id))
    }

    pub fn stats(&self) -> RepoStats {
        let state = self.state.read();
        let mut by_source = HashMap::new();
        for r in &state.records {
            *by_source.entry(r.source).or_insert(0) += 1;
        }
        let blobs = match &self.blobs {
            BlobStore::Memory(map) => map.lock().len(),
            BlobStore::Disk(dir) => fs::read_dir(dir)
                .map(|it| {
                    it.filter_map(Result::ok)
                        .filter(|e| e.file_name().to_string_lossy().ends_with(".mforge"))
                        .count()
                })
                .unwrap_or(0),
        };
        RepoStats {
            records: state.records.len(),
            blobs,
            dimension: self.config.dimension,
            total_hits: state.records.iter().map(|r| r.hit_count).sum(),
            by_source,
        }
    }
}

fn is_blob_key(key: &str) -> bool {
    key.len() == 64 && key.bytes().all(|b| b.is_ascii_hexdigit())
}

/// Reads a log file line by line; used by tooling that inspects a repository
/// without opening it.
pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<LogEntry>, RepoError> {
    let f = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(decode_log_line(&line).map_err(|e| RepoError::Corrupt {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
