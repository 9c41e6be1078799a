//! JSON-over-HTTP backend client.
//!
//! Every call is a `POST` to the descriptor endpoint:
//!
//! ```text
//! {"kind": "text-to-3d", "params": {"sampling_steps": 64, ...}, "input": {"prompt": "red apple"}}
//! ```
//!
//! A 2xx reply carries `{"output": {...}}`; anything else should carry
//! `{"error": {"code": "...", "message": "..."}}`. Per-kind payloads:
//!
//! | kind          | input                                   | output                      |
//! |---------------|-----------------------------------------|-----------------------------|
//! | text-to-3d    | `prompt`                                | `mesh`                      |
//! | image-to-3d   | `image`, `crop` (optional), `label`     | `mesh`                      |
//! | detector      | `image`, `min_confidence`               | `detections`                |
//! | stt-translate | `audio`, `language`                     | `transcript`                |
//! | llm-extract   | `transcript`                            | `labels`                    |
//! | vlm-describe  | `prompt`, `image` (optional)            | `scene`                     |
//! | tts           | `text`, `language`                      | `audio`                     |
//!
//! `mesh` is a base64 `.mforge` blob, `image` is `{width, height, data}` with
//! base64 `data`, and `audio` in a tts reply is base64.

use async_trait::async_trait;
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use super::geometry::{DetectionBox, Rect};
use super::{BackendDescriptor, BackendError, Detector, ImageData, ImageTo3d, LabelExtractor, SceneDescriber, SceneReply, Speaker, SpeechToText, TextTo3d, Transcript};
use crate::mesh::{read_mesh, Mesh, MeshFormat};

#[derive(Deserialize)]
struct ErrorBody {
    error: ErrorDetail,
}

#[derive(Deserialize)]
struct ErrorDetail {
    code: String,
    #[serde(default)]
    message: String,
}

async fn attempt(client: &reqwest::Client, d: &BackendDescriptor, body: &Value) -> Result<Value, BackendError> {
    let resp = client
        .post(&d.endpoint)
        .json(body)
        .send()
        .await
        .map_err(|e| BackendError::Transport(e.to_string()))?;
    let status = resp.status().as_u16();
    let bytes = resp.bytes().await.map_err(|e| BackendError::Transport(e.to_string()))?;
    decode_response(status, &bytes)
}

/// Turns a raw reply into the `output` object or the matching error.
pub fn decode_response(status: u16, bytes: &[u8]) -> Result<Value, BackendError> {
    if !(200..300).contains(&status) {
        let (code, message) = match serde_json::from_slice::<ErrorBody>(bytes) {
            Ok(b) => (b.error.code, b.error.message),
            Err(_) => (format!("http_{status}"), String::from_utf8_lossy(bytes).into_owned()),
        };
        return Err(BackendError::Remote { status, code, message });
    }
    let mut v: Value = serde_json::from_slice(bytes).map_err(|e| BackendError::Malformed(e.to_string()))?;
    match v.get_mut("output") {
        Some(out) if out.is_object() => Ok(out.take()),
        _ => Err(BackendError::Malformed("missing `output` object".into())),
    }
}

/// Sends `input` to the backend and returns its `output` object. A transient
/// failure is retried once; both attempts share the descriptor deadline.
pub async fn call_backend(client: &reqwest::Client, descriptor: &BackendDescriptor, input: Value) -> Result<Value, BackendError> {
    let body = json!({
        "kind": descriptor.kind,
        "params": descriptor.params,
        "input": input,
    });
    let calls = async {
        match attempt(client, descriptor, &body).await {
            Err(e) if e.is_transient() => {
                tracing::debug!(kind = descriptor.kind.name(), error = %e, "retrying backend call");
                attempt(client, descriptor, &body).await
            }
            r => r,
        }
    };
    tokio::time::timeout(descriptor.timeout(), calls)
        .await
        .map_err(|_| BackendError::Timeout {
            after_ms: descriptor.timeout_ms,
        })?
}

/// Takes and decodes one member of an `output` object.
pub fn output_field<T: DeserializeOwned>(mut out: Value, name: &str) -> Result<T, BackendError> {
    let v = out
        .get_mut(name)
        .map(Value::take)
        .ok_or_else(|| BackendError::Malformed(format!("missing `{name}`")))?;
    serde_json::from_value(v).map_err(|e| BackendError::Malformed(format!("`{name}`: {e}")))
}

/// Decodes a base64 `.mforge` payload.
pub fn decode_mesh_payload(b64: &str) -> Result<Mesh, BackendError> {
    let bytes = STANDARD
        .decode(b64.as_bytes())
        .map_err(|e| BackendError::Malformed(format!("mesh base64: {e}")))?;
    read_mesh(&bytes, MeshFormat::Binary).map_err(|e| BackendError::Malformed(format!("mesh: {e}")))
}

/// One remote service; implements whichever trait matches its kind.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    descriptor: BackendDescriptor,
    client: reqwest::Client,
}

impl HttpBackend {
    pub fn new(descriptor: BackendDescriptor) -> Self {
        Self {
            descriptor,
            client: reqwest::Client::new(),
        }
    }

    pub fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    async fn call(&self, input: Value) -> Result<Value, BackendError> {
        call_backend(&self.client, &self.descriptor, input).await
    }
}

#[async_trait]
impl TextTo3d for HttpBackend {
    async fn generate(&self, prompt: &str) -> Result<Mesh, BackendError> {
        let out = self.call(json!({ "prompt": prompt })).await?;
        decode_mesh_payload(&output_field::<String>(out, "mesh")?)
    }
}

#[async_trait]
impl ImageTo3d for HttpBackend {
    async fn generate(&self, image: &ImageData, crop: Option<Rect>, label: &str) -> Result<Mesh, BackendError> {
        let out = self.call(json!({ "image": image, "crop": crop, "label": label })).await?;
        decode_mesh_payload(&output_field::<String>(out, "mesh")?)
    }
}

#[async_trait]
impl Detector for HttpBackend {
    async fn detect(&self, image: &ImageData, min_confidence: f64) -> Result<Vec<DetectionBox>, BackendError> {
        let out = self.call(json!({ "image": image, "min_confidence": min_confidence })).await?;
        let dets: Vec<DetectionBox> = output_field(out, "detections")?;
        for d in &dets {
            d.check().map_err(|e| BackendError::Malformed(format!("detection `{}`: {e}", d.label)))?;
        }
        Ok(dets)
    }
}

#[async_trait]
impl SpeechToText for HttpBackend {
    async fn transcribe(&self, audio: &str, language: &str) -> Result<Transcript, BackendError> {
        let out = self.call(json!({ "audio": audio, "language": language })).await?;
        output_field(out, "transcript")
    }
}

#[async_trait]
impl LabelExtractor for HttpBackend {
    async fn extract(&self, transcript: &str) -> Result<Vec<String>, BackendError> {
        let out = self.call(json!({ "transcript": transcript })).await?;
        output_field(out, "labels")
    }
}

#[async_trait]
impl SceneDescriber for HttpBackend {
    async fn describe(&self, prompt: &str, image: Option<&ImageData>) -> Result<SceneReply, BackendError> {
        let out = self.call(json!({ "prompt": prompt, "image": image })).await?;
        output_field(out, "scene")
    }
}

#[async_trait]
impl Speaker for HttpBackend {
    async fn speak(&self, text: &str, language: &str) -> Result<Vec<u8>, BackendError> {
        let out = self.call(json!({ "text": text, "language": language })).await?;
        let b64: String = output_field(out, "audio")?;
        STANDARD
            .decode(b64.as_bytes())
            .map_err(|e| BackendError::Malformed(format!("audio base64: {e}")))
    }
}

/// Base64 `.mforge` payload for a `mesh` field.
pub fn encode_mesh_payload(mesh: &Mesh) -> String {
    STANDARD.encode(crate::mesh::write_mesh(mesh, MeshFormat::Binary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_response_cases() {
        let ok = decode_response(200, br#"{"output":{"labels":["apple"]}}"#).unwrap();
        assert_eq!(output_field::<Vec<String>>(ok, "labels").unwrap(), ["apple"]);
        assert!(matches!(decode_response(200, b"{}"), Err(BackendError::Malformed(_))));
        assert!(matches!(decode_response(204, br#"{"output":3}"#), Err(BackendError::Malformed(_))));
        match decode_response(503, br#"{"error":{"code":"busy","message":"later"}}"#) {
            Err(BackendError::Remote { status, code, message }) => assert_eq!((status, code.as_str(), message.as_str()), (503, "busy", "later")),
            other => panic!("{other:?}"),
        }
        match decode_response(502, b"<html>") {
            Err(BackendError::Remote { code, .. }) => assert_eq!(code, "http_502"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mesh_payload_round_trip() {
        let m = crate::backends::procedural::icosphere(1);
        assert_eq!(decode_mesh_payload(&encode_mesh_payload(&m)).unwrap(), m);
        assert!(decode_mesh_payload("!!").is_err());
        assert!(decode_mesh_payload("AAAA").is_err());
    }
}
