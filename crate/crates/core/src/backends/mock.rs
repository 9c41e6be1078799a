//! Deterministic stand-ins for every backend kind. Outputs depend only on
//! the inputs and the fixture manifests under `fixtures/`.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use async_trait::async_trait;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::geometry::{filter_detections, DetectionBox, Rect};
use super::procedural::{ellipsoid, sphere_with_vertices};
use super::{BackendError, Detector, ImageData, ImageTo3d, LabelExtractor, SceneDescriber, SceneReply, Speaker, SpeechToText, TextTo3d, Transcript};
use crate::mesh::Mesh;
use crate::repo::fnv1a;

#[derive(Debug, Deserialize)]
struct DetectionFixture {
    default: Vec<DetectionBox>,
    #[serde(default)]
    images: HashMap<String, Vec<DetectionBox>>,
}

#[derive(Debug, Deserialize)]
struct TranscriptFixture {
    translations: HashMap<String, HashMap<String, String>>,
}

#[derive(Debug, Deserialize)]
struct ExtractFixture {
    separators: Vec<String>,
    stopwords: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
struct SceneFixture {
    keywords: Vec<String>,
    location_name: String,
    summary: String,
    suggestions: String,
}

#[derive(Debug, Deserialize)]
struct ScenesFixture {
    scenes: Vec<SceneFixture>,
    default: SceneFixture,
}

fn detections() -> &'static DetectionFixture {
    static F: OnceLock<DetectionFixture> = OnceLock::new();
    F.get_or_init(|| serde_json::from_str(include_str!("../../fixtures/detections.json")).expect("detections fixture"))
}

fn transcripts() -> &'static TranscriptFixture {
    static F: OnceLock<TranscriptFixture> = OnceLock::new();
    F.get_or_init(|| serde_json::from_str(include_str!("../../fixtures/transcripts.json")).expect("transcripts fixture"))
}

fn extract_rules() -> &'static ExtractFixture {
    static F: OnceLock<ExtractFixture> = OnceLock::new();
    F.get_or_init(|| serde_json::from_str(include_str!("../../fixtures/extract.json")).expect("extract fixture"))
}

fn scenes() -> &'static ScenesFixture {
    static F: OnceLock<ScenesFixture> = OnceLock::new();
    F.get_or_init(|| serde_json::from_str(include_str!("../../fixtures/scenes.json")).expect("scenes fixture"))
}

async fn pause(latency: Duration) {
    if !latency.is_zero() {
        tokio::time::sleep(latency).await;
    }
}

/// The mesh the mock generator returns for `label`: an ellipsoid whose
/// subdivision level (3..=6, so 642 to 40,962 vertices) and radii come from
/// the label hash. `fixed_vertices` swaps in a sphere of exactly that size.
pub fn mock_mesh(label: &str, fixed_vertices: Option<usize>) -> Mesh {
    let h = fnv1a(label.trim().to_lowercase().as_bytes());
    let radius = |shift: u32| 0.7 + 0.6 * ((h >> shift) & 0xff) as f64 / 255.0;
    let radii = [radius(8), radius(16), radius(24)];
    match fixed_vertices {
        None => ellipsoid(3 + (h % 4) as u32, radii),
        Some(n) => {
            let mut m = sphere_with_vertices(n);
            for v in &mut m.vertices {
                for k in 0..3 {
                    v[k] = (v[k] as f64 * radii[k]) as f32;
                }
            }
            m
        }
    }
}

/// Text- and image-to-3D mock with a shared call counter.
#[derive(Debug, Clone, Default)]
pub struct MockGenerator {
    latency: Duration,
    fixed_vertices: Option<usize>,
    calls: Arc<AtomicUsize>,
}

impl MockGenerator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn with_fixed_vertices(mut self, n: usize) -> Self {
        self.fixed_vertices = Some(n);
        self
    }

    /// Invocations so far, across clones.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn counter(&self) -> Arc<AtomicUsize> {
        self.calls.clone()
    }
}

#[async_trait]
impl TextTo3d for MockGenerator {
    async fn generate(&self, prompt: &str) -> Result<Mesh, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        pause(self.latency).await;
        Ok(mock_mesh(prompt, self.fixed_vertices))
    }
}

#[async_trait]
impl ImageTo3d for MockGenerator {
    async fn generate(&self, _image: &ImageData, _crop: Option<Rect>, label: &str) -> Result<Mesh, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        pause(self.latency).await;
        Ok(mock_mesh(label, self.fixed_vertices))
    }
}

/// Returns the fixture detection set for the image (keyed by the SHA-256 of
/// its bytes, falling back to the default set).
#[derive(Debug, Clone, Copy, Default)]
pub struct MockDetector;

#[async_trait]
impl Detector for MockDetector {
    async fn detect(&self, image: &ImageData, min_confidence: f64) -> Result<Vec<DetectionBox>, BackendError> {
        let f = detections();
        let key = hex::encode(Sha256::digest(&image.data));
        let set = f.images.get(&key).unwrap_or(&f.default);
        filter_detections(set, None, min_confidence).map_err(|e| BackendError::Remote {
            status: 400,
            code: "bad_threshold".into(),
            message: e.to_string(),
        })
    }
}

/// English passes through; other languages are looked up in the
/// translation fixture and otherwise echoed untranslated.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockSpeech;

fn primary_subtag(language: &str) -> String {
    language.split(['-', '_']).next().unwrap_or("").to_ascii_lowercase()
}

#[async_trait]
impl SpeechToText for MockSpeech {
    async fn transcribe(&self, audio: &str, language: &str) -> Result<Transcript, BackendError> {
        let lang = primary_subtag(language);
        let text = audio.trim();
        if lang == "en" || lang.is_empty() {
            return Ok(Transcript {
                text: text.to_string(),
                source_language: language.to_string(),
                translated: false,
            });
        }
        let found = transcripts()
            .translations
            .get(&lang)
            .and_then(|t| t.get(text).or_else(|| t.get(&text.to_lowercase())));
        Ok(Transcript {
            text: found.cloned().unwrap_or_else(|| text.to_string()),
            source_language: language.to_string(),
            translated: found.is_some(),
        })
    }
}

/// Splits a request on the fixture separators and drops stopwords:
/// "Create a red apple and a banana" gives `["red apple", "banana"]`.
pub fn extract_labels(transcript: &str) -> Vec<String> {
    let rules = extract_rules();
    let mut text = transcript.to_lowercase();
    for sep in &rules.separators {
        text = text.replace(sep.as_str(), "\n");
    }
    let mut out: Vec<String> = Vec::new();
    for chunk in text.lines() {
        let words: Vec<&str> = chunk
            .split(|c: char| !(c.is_alphanumeric() || c == '-' || c == '\''))
            .filter(|w| !w.is_empty() && !rules.stopwords.iter().any(|s| s == w))
            .collect();
        let label = words.join(" ");
        if !label.is_empty() && !out.contains(&label) {
            out.push(label);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MockExtractor;

#[async_trait]
impl LabelExtractor for MockExtractor {
    async fn extract(&self, transcript: &str) -> Result<Vec<String>, BackendError> {
        Ok(extract_labels(transcript))
    }
}

/// Picks the fixture scene sharing the most keywords with the prompt.
#[derive(Debug, Clone, Default)]
pub struct MockDescriber {
    latency: Duration,
}

impl MockDescriber {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }
}

pub fn describe_scene(prompt: &str) -> SceneReply {
    let f = scenes();
    let lower = prompt.to_lowercase();
    let words: Vec<&str> = lower.split(|c: char| !c.is_alphanumeric()).collect();
    let score = |s: &SceneFixture| s.keywords.iter().filter(|k| words.contains(&k.as_str())).count();
    let scene = f
        .scenes
        .iter()
        .map(|s| (score(s), s))
        .filter(|(n, _)| *n > 0)
        .fold(None::<(usize, &SceneFixture)>, |best, cur| match best {
            Some(b) if b.0 >= cur.0 => Some(b),
            _ => Some(cur),
        })
        .map_or(&f.default, |(_, s)| s);
    SceneReply {
        location_name: scene.location_name.clone(),
        summary: scene.summary.clone(),
        suggestions: scene.suggestions.clone(),
    }
}

#[async_trait]
impl SceneDescriber for MockDescriber {
    async fn describe(&self, prompt: &str, _image: Option<&ImageData>) -> Result<SceneReply, BackendError> {
        pause(self.latency).await;
        Ok(describe_scene(prompt))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MockSpeaker;

#[async_trait]
impl Speaker for MockSpeaker {
    async fn speak(&self, text: &str, language: &str) -> Result<Vec<u8>, BackendError> {
        Ok(format!("{language}|{text}").into_bytes())
    }
}

/// Every call fails with a transport error.
#[derive(Debug, Clone, Copy, Default)]
pub struct Offline;

fn offline() -> BackendError {
    BackendError::Transport("backend offline".into())
}

#[async_trait]
impl TextTo3d for Offline {
    async fn generate(&self, _prompt: &str) -> Result<Mesh, BackendError> {
        Err(offline())
    }
}

#[async_trait]
impl ImageTo3d for Offline {
    async fn generate(&self, _image: &ImageData, _crop: Option<Rect>, _label: &str) -> Result<Mesh, BackendError> {
        Err(offline())
    }
}

#[async_trait]
impl Detector for Offline {
    async fn detect(&self, _image: &ImageData, _min_confidence: f64) -> Result<Vec<DetectionBox>, BackendError> {
        Err(offline())
    }
}

#[async_trait]
impl SpeechToText for Offline {
    async fn transcribe(&self, _audio: &str, _language: &str) -> Result<Transcript, BackendError> {
        Err(offline())
    }
}

#[async_trait]
impl LabelExtractor for Offline {
    async fn extract(&self, _transcript: &str) -> Result<Vec<String>, BackendError> {
        Err(offline())
    }
}

#[async_trait]
impl SceneDescriber for Offline {
    async fn describe(&self, _prompt: &str, _image: Option<&ImageData>) -> Result<SceneReply, BackendError> {
        Err(offline())
    }
}

#[async_trait]
impl Speaker for Offline {
    async fn speak(&self, _text: &str, _language: &str) -> Result<Vec<u8>, BackendError> {
        Err(offline())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{write_mesh, MeshFormat};
    use crate::recommend::{build_designer_prompt, parse_suggestions, SceneDescription};

    fn image() -> ImageData {
        ImageData {
            width: 640,
            height: 480,
            data: vec![1, 2, 3],
        }
    }

    #[tokio::test]
    async fn generator_is_deterministic_and_counted() {
        let g = MockGenerator::new();
        let a = TextTo3d::generate(&g, "apple").await.unwrap();
        let b = TextTo3d::generate(&g.clone(), "apple").await.unwrap();
        assert_eq!(write_mesh(&a, MeshFormat::Binary), write_mesh(&b, MeshFormat::Binary));
        assert_eq!(g.calls(), 2);
        assert!(a.validate().is_valid());
        assert_eq!(a.stats().unwrap().euler_characteristic, 2);
    }

    #[test]
    fn levels_span_the_full_range() {
        let mut counts = std::collections::BTreeSet::new();
        for i in 0..40 {
            counts.insert(fnv1a(format!("object {i}").as_bytes()) % 4);
        }
        assert_eq!(counts.len(), 4);
        let m = mock_mesh("anything", Some(13_944));
        assert_eq!(m.vertex_count(), 13_944);
        assert_eq!(m.face_count(), 27_884);
    }

    #[tokio::test]
    async fn detector_returns_fixture_above_threshold() {
        let d = MockDetector.detect(&image(), 0.5).await.unwrap();
        let labels: Vec<_> = d.iter().map(|d| d.label.as_str()).collect();
        assert_eq!(labels, ["apple", "banana", "plate", "table", "cup"]);
        assert_eq!(MockDetector.detect(&image(), 0.0).await.unwrap().len(), 6);
    }

    #[tokio::test]
    async fn speech_translates_fixture_and_passes_english() {
        let fa = MockSpeech.transcribe("audio-token", "fa").await.unwrap();
        assert_eq!(fa.text, "Create a red apple");
        assert!(fa.translated);
        let en = MockSpeech.transcribe("audio-token", "en-US").await.unwrap();
        assert_eq!(en.text, "audio-token");
        assert!(!en.translated);
    }

    #[test]
    fn extraction_drops_filler() {
        assert_eq!(extract_labels("Create a red apple and a banana, please"), ["red apple", "banana"]);
        assert_eq!(extract_labels("MATRIX make me a wall-mounted shelf STOP"), ["wall-mounted shelf"]);
        assert!(extract_labels("please").is_empty());
    }

    #[test]
    fn fruit_scene_gives_five_suggestions() {
        let scene = SceneDescription::new("", "", ["apple"]);
        let reply = describe_scene(&build_designer_prompt(Some(&scene)));
        assert_eq!(reply.location_name, "Kitchen");
        let parsed = parse_suggestions(&reply.suggestions);
        assert_eq!(parsed.suggestions.len(), 5);
        assert!(parsed.issues.is_empty());
        assert_eq!(describe_scene(&build_designer_prompt(None)).location_name, "Living Room");
        for s in &scenes().scenes {
            assert_eq!(parse_suggestions(&s.suggestions).suggestions.len(), 5);
        }
    }

    #[tokio::test]
    async fn offline_fails_transiently() {
        let e = TextTo3d::generate(&Offline, "x").await.unwrap_err();
        assert!(e.is_transient());
    }
}
