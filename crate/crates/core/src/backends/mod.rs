//! External model services: descriptors, request types, the async traits
//! the pipeline talks to, an HTTP client and deterministic mocks.

pub mod geometry;
pub mod http;
pub mod mock;
pub mod procedural;

use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::mesh::Mesh;
use geometry::{DetectionBox, Rect};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BackendKind {
    #[serde(rename = "text-to-3d")]
    TextTo3d,
    #[serde(rename = "image-to-3d")]
    ImageTo3d,
    #[serde(rename = "detector")]
    Detector,
    #[serde(rename = "stt-translate")]
    SttTranslate,
    #[serde(rename = "llm-extract")]
    LlmExtract,
    #[serde(rename = "vlm-describe")]
    VlmDescribe,
    #[serde(rename = "tts")]
    Tts,
}

impl BackendKind {
    pub const ALL: [BackendKind; 7] = [
        BackendKind::TextTo3d,
        BackendKind::ImageTo3d,
        BackendKind::Detector,
        BackendKind::SttTranslate,
        BackendKind::LlmExtract,
        BackendKind::VlmDescribe,
        BackendKind::Tts,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BackendKind::TextTo3d => "text-to-3d",
            BackendKind::ImageTo3d => "image-to-3d",
            BackendKind::Detector => "detector",
            BackendKind::SttTranslate => "stt-translate",
            BackendKind::LlmExtract => "llm-extract",
            BackendKind::VlmDescribe => "vlm-describe",
            BackendKind::Tts => "tts",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    pub endpoint: String,
    pub timeout_ms: u64,
    /// Forwarded verbatim in every request.
    #[serde(default)]
    pub params: Map<String, Value>,
}

impl BackendDescriptor {
    pub fn new(kind: BackendKind, endpoint: impl Into<String>) -> Self {
        let (timeout_ms, params) = match kind {
            BackendKind::TextTo3d => (
                120_000,
                json!({"sampling_steps": 64, "sigma_min": 1e-3, "sigma_max": 160.0, "s_churn": 0.0}),
            ),
            BackendKind::ImageTo3d => (120_000, json!({})),
            _ => (30_000, json!({})),
        };
        let Value::Object(params) = params else { unreachable!() };
        Self {
            kind,
            endpoint: endpoint.into(),
            timeout_ms,
            params,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout_ms = timeout.as_millis() as u64;
        self
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend did not answer within {after_ms} ms")]
    Timeout { after_ms: u64 },
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("backend error {status} {code}: {message}")]
    Remote { status: u16, code: String, message: String },
    #[error("transport failure: {0}")]
    Transport(String),
}

impl BackendError {
    /// Worth one more attempt: connection trouble or a 5xx/429 reply.
    pub fn is_transient(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Remote { status, .. } => *status >= 500 || *status == 429,
            _ => false,
        }
    }

    pub fn code(&self) -> &str {
        match self {
            BackendError::Timeout { .. } => "backend_timeout",
            BackendError::Malformed(_) => "backend_malformed",
            BackendError::Remote { .. } => "backend_remote",
            BackendError::Transport(_) => "backend_transport",
        }
    }
}

pub(crate) mod b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        STANDARD.decode(s.as_bytes()).map_err(serde::de::Error::custom)
    }
}

/// Encoded camera frame; the bytes are opaque to this crate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageData {
    pub width: u32,
    pub height: u32,
    #[serde(with = "b64")]
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    /// English text.
    pub text: String,
    pub source_language: String,
    pub translated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneReply {
    pub location_name: String,
    pub summary: String,
    /// Raw suggestion text, one object per line.
    pub suggestions: String,
}

#[async_trait]
pub trait TextTo3d: Send + Sync {
    async fn generate(&self, prompt: &str) -> Result<Mesh, BackendError>;
}

#[async_trait]
pub trait ImageTo3d: Send + Sync {
    async fn generate(&self, image: &ImageData, crop: Option<Rect>, label: &str) -> Result<Mesh, BackendError>;
}

#[async_trait]
pub trait Detector: Send + Sync {
    async fn detect(&self, image: &ImageData, min_confidence: f64) -> Result<Vec<DetectionBox>, BackendError>;
}

#[async_trait]
pub trait SpeechToText: Send + Sync {
    /// `audio` is an opaque clip reference; output is always English.
    async fn transcribe(&self, audio: &str, language: &str) -> Result<Transcript, BackendError>;
}

#[async_trait]
pub trait LabelExtractor: Send + Sync {
    async fn extract(&self, transcript: &str) -> Result<Vec<String>, BackendError>;
}

#[async_trait]
pub trait SceneDescriber: Send + Sync {
    async fn describe(&self, prompt: &str, image: Option<&ImageData>) -> Result<SceneReply, BackendError>;
}

#[async_trait]
pub trait Speaker: Send + Sync {
    async fn speak(&self, text: &str, language: &str) -> Result<Vec<u8>, BackendError>;
}
