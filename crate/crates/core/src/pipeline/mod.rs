//! Per-session orchestration: the status-board state machine, the offer
//! step, cache-or-generate fulfilment and timing capture.
//!
//! A [`Session`] is plain data; a [`Pipeline`] applies [`Event`]s to it.
//! Callers serialise events per session and may run sessions concurrently.

mod report;
mod script;
mod session;
mod state;

pub use report::{report_metrics, PipelineReport, ReportRow, StageSummary, REPORT_ROWS, REPORT_SCHEMA_VERSION};
pub use script::{run_script, AutoSelect, Script, ScriptMock};
pub use session::{Event, OfferMenus, RepoOffer, Selection, ServedAsset, Session, SessionError, StageTimings, TaskRecord, Warning};
pub use state::{is_legal_path, next_state, SessionState, Trigger, EDGES};

use std::collections::HashMap;
use std::future::Future;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::geometry::{crop_rect, filter_detections, DetectionBox, ImageSize, LassoPolygon};
use crate::backends::http::HttpBackend;
use crate::backends::mock::{MockDescriber, MockDetector, MockExtractor, MockGenerator, MockSpeaker, MockSpeech};
use crate::backends::{BackendDescriptor, BackendError, BackendKind, Detector, ImageData, ImageTo3d, LabelExtractor, SceneDescriber, Speaker, SpeechToText, TextTo3d};
use crate::mesh::{binary_size, Mesh};
use crate::recommend::{build_designer_prompt, filter_duplicates, parse_suggestions, SceneDescription};
use crate::repo::{AssetRecord, AssetSource, Repository};
use crate::simplify::{simplify, SimplifyConfig};

/// One implementation per backend kind.
#[derive(Clone)]
pub struct Backends {
    pub text_to_3d: Arc<dyn TextTo3d>,
    pub image_to_3d: Arc<dyn ImageTo3d>,
    pub detector: Arc<dyn Detector>,
    pub speech: Arc<dyn SpeechToText>,
    pub extractor: Arc<dyn LabelExtractor>,
    pub describer: Arc<dyn SceneDescriber>,
    pub speaker: Arc<dyn Speaker>,
}

impl Backends {
    /// All mocks, with `generator` serving both text and image requests.
    pub fn mock(generator: MockGenerator) -> Self {
        let generator = Arc::new(generator);
        Self {
            text_to_3d: generator.clone(),
            image_to_3d: generator,
            detector: Arc::new(MockDetector),
            speech: Arc::new(MockSpeech),
            extractor: Arc::new(MockExtractor),
            describer: Arc::new(MockDescriber::new()),
            speaker: Arc::new(MockSpeaker),
        }
    }

    /// Mocks, with each kind listed in `descriptors` replaced by an HTTP client.
    pub fn with_descriptors(generator: MockGenerator, descriptors: &[BackendDescriptor]) -> Self {
        let mut b = Self::mock(generator);
        for d in descriptors {
            let http = Arc::new(HttpBackend::new(d.clone()));
            match d.kind {
                BackendKind::TextTo3d => b.text_to_3d = http,
                BackendKind::ImageTo3d => b.image_to_3d = http,
                BackendKind::Detector => b.detector = http,
                BackendKind::SttTranslate => b.speech = http,
                BackendKind::LlmExtract => b.extractor = http,
                BackendKind::VlmDescribe => b.describer = http,
                BackendKind::Tts => b.speaker = http,
            }
        }
        b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub simplify: SimplifyConfig,
    pub min_confidence: f64,
    pub repo_k: usize,
    pub repo_min_score: f64,
    /// Per-branch limit for recommendation and repository search.
    pub branch_deadline_ms: u64,
    /// Limit for any other single backend call.
    pub call_deadline_ms: u64,
    pub generation_deadline_ms: u64,
    /// Artificial latency added to every blob fetch.
    pub retrieval_delay_ms: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            simplify: SimplifyConfig::default(),
            min_confidence: 0.5,
            repo_k: 5,
            repo_min_score: 0.3,
            branch_deadline_ms: 10_000,
            call_deadline_ms: 30_000,
            generation_deadline_ms: 300_000,
            retrieval_delay_ms: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("event `{event}` is not allowed in state {state}")]
    IllegalTransition { state: SessionState, event: &'static str },
    #[error("selection is not on the offered menus: {0}")]
    UnknownSelection(String),
}

impl PipelineError {
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::IllegalTransition { .. } => "illegal_transition",
            PipelineError::UnknownSelection(_) => "unknown_selection",
        }
    }
}

/// Timing and error detail of one offer step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OfferOutcome {
    pub menus: OfferMenus,
    pub recommend_seconds: f64,
    pub repo_search_seconds: f64,
    pub location_name: Option<String>,
    pub summary: Option<String>,
    pub suggestions_seen: u32,
    pub duplicates_dropped: u32,
    pub errors: u32,
}

fn warning(branch: &str, code: &str, message: impl Into<String>) -> session::Warning {
    session::Warning {
        branch: branch.into(),
        code: code.into(),
        message: message.into(),
    }
}

async fn bounded<T>(limit: Duration, fut: impl Future<Output = Result<T, BackendError>>) -> Result<T, BackendError> {
    tokio::time::timeout(limit, fut).await.unwrap_or(Err(BackendError::Timeout {
        after_ms: limit.as_millis() as u64,
    }))
}

fn dedup_labels(labels: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for l in labels {
        let l = l.trim().to_string();
        if !l.is_empty() && !out.iter().any(|o| o.eq_ignore_ascii_case(&l)) {
            out.push(l);
        }
    }
    out
}

fn session_error(code: &str, message: impl Into<String>, retriable: bool) -> SessionError {
    SessionError {
        code: code.into(),
        message: message.into(),
        retriable,
        validation: None,
    }
}

/// Blank frame used when a capture carries no image.
fn placeholder_image() -> ImageData {
    ImageData {
        width: 640,
        height: 480,
        data: Vec::new(),
    }
}

pub struct Pipeline {
    repo: Arc<Repository>,
    backends: Backends,
    config: PipelineConfig,
}

impl Pipeline {
    pub fn new(repo: Arc<Repository>, backends: Backends, config: PipelineConfig) -> Self {
        Self { repo, backends, config }
    }

    pub fn repo(&self) -> &Arc<Repository> {
        &self.repo
    }

    pub fn backends(&self) -> &Backends {
        &self.backends
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    fn call_limit(&self) -> Duration {
        Duration::from_millis(self.config.call_deadline_ms)
    }

    fn legal(&self, s: &Session, trigger: Trigger, event: &Event) -> Result<SessionState, PipelineError> {
        next_state(s.state, trigger).ok_or(PipelineError::IllegalTransition {
            state: s.state,
            event: event.name(),
        })
    }

    /// Applies `event`. Rejected events leave the session untouched; backend
    /// failures are recorded on the session rather than returned.
    pub async fn handle(&self, s: &mut Session, event: Event) -> Result<(), PipelineError> {
        match &event {
            Event::Wake => {
                let next = self.legal(s, Trigger::Wake, &event)?;
                s.begin_task();
                s.enter(next);
            }
            Event::Transcript { text } => {
                if s.state != SessionState::Listening {
                    return Err(PipelineError::IllegalTransition {
                        state: s.state,
                        event: event.name(),
                    });
                }
                if !s.transcript.is_empty() {
                    s.transcript.push(' ');
                }
                s.transcript.push_str(text.trim());
            }
            Event::Stop => {
                let next = self.legal(s, Trigger::Stop, &event)?;
                s.enter(next);
                self.think(s).await;
            }
            Event::Capture { image, lasso, .. } => {
                let next = self.legal(s, Trigger::Capture, &event)?;
                let lasso = lasso.clone().or_else(|| s.lasso.take());
                s.begin_task();
                s.lasso = lasso;
                s.image = Some(image.clone().unwrap_or_else(placeholder_image));
                s.enter(next);
                self.observe(s).await;
            }
            Event::Lasso { points } => match s.state {
                SessionState::Welcome => s.lasso = Some(points.clone()),
                SessionState::Suggestions => {
                    s.lasso = Some(points.clone());
                    let detected = self.zone_labels(s);
                    if let Some(m) = s.menus.as_mut() {
                        m.detected = detected;
                    }
                }
                state => {
                    return Err(PipelineError::IllegalTransition {
                        state,
                        event: event.name(),
                    })
                }
            },
            Event::Selection(sel) => {
                let next = self.legal(s, Trigger::Select, &event)?;
                self.check_selection(s, sel)?;
                if let Some(t) = s.clock.menus_at {
                    s.timings.wait_for_selection = Some(t.elapsed().as_secs_f64());
                }
                s.clock.selected_at = Some(Instant::now());
                s.selection = Some(sel.clone());
                s.enter(next);
                match self.fulfill(s).await {
                    Ok(record) => {
                        s.asset = Some(record.id);
                        s.enter(SessionState::Presenting);
                        s.finish_task(true);
                    }
                    Err(e) => {
                        tracing::warn!(session = %s.id, code = %e.code, "fulfilment failed");
                        s.current.errors += 1;
                        s.error = Some(e);
                        s.enter(SessionState::Failed);
                        s.finish_task(false);
                    }
                }
            }
            Event::Reset => {
                let next = self.legal(s, Trigger::Reset, &event)?;
                s.begin_task();
                s.lasso = None;
                s.clock.started = None;
                s.enter(next);
            }
        }
        Ok(())
    }

    fn check_selection(&self, s: &Session, sel: &Selection) -> Result<(), PipelineError> {
        let menus = s.menus.as_ref();
        let found = match sel {
            Selection::Detected { label } => menus.is_some_and(|m| m.detected.iter().any(|d| d.eq_ignore_ascii_case(label.trim()))),
            Selection::Repository { asset_id } => menus.is_some_and(|m| m.repository.iter().any(|r| &r.asset_id == asset_id)),
            Selection::Recommended { name } => menus.is_some_and(|m| {
                m.recommended
                    .iter()
                    .any(|r| r.suggestion.name.eq_ignore_ascii_case(name.trim()))
            }),
        };
        if found {
            Ok(())
        } else {
            Err(PipelineError::UnknownSelection(format!("{sel:?}")))
        }
    }

    /// Speech path: transcript to English, object labels, then offers.
    async fn think(&self, s: &mut Session) {
        let raw = s.transcript.clone();
        let t = Instant::now();
        let english = match bounded(self.call_limit(), self.backends.speech.transcribe(&raw, &s.language)).await {
            Ok(tr) => tr.text,
            Err(e) => {
                s.current.errors += 1;
                tracing::warn!(session = %s.id, error = %e, "transcription failed, using raw text");
                raw
            }
        };
        s.timings.transcribe = Some(t.elapsed().as_secs_f64());

        let t = Instant::now();
        let mut warnings = Vec::new();
        let labels = match bounded(self.call_limit(), self.backends.extractor.extract(&english)).await {
            Ok(l) => dedup_labels(l),
            Err(e) => {
                s.current.errors += 1;
                warnings.push(warning("detected", e.code(), e.to_string()));
                Vec::new()
            }
        };
        s.timings.extract = Some(t.elapsed().as_secs_f64());

        let scene = SceneDescription::new("", "", &labels);
        let outcome = self.assemble_offers(&labels, &scene, None).await;
        self.apply_offers(s, labels, scene, outcome, warnings);
        s.enter(SessionState::Offers);
    }

    /// Image path: detection within the lasso zone, then offers.
    async fn observe(&self, s: &mut Session) {
        let image = s.image.clone().unwrap_or_else(placeholder_image);
        let t = Instant::now();
        let mut warnings = Vec::new();
        match bounded(self.call_limit(), self.backends.detector.detect(&image, self.config.min_confidence)).await {
            Ok(d) => s.detections = d,
            Err(e) => {
                s.current.errors += 1;
                warnings.push(warning("detected", e.code(), e.to_string()));
            }
        }
        s.timings.detect = Some(t.elapsed().as_secs_f64());
        let labels = self.zone_labels(s);
        let scene = SceneDescription::new("", "", &labels);
        let outcome = self.assemble_offers(&labels, &scene, Some(&image)).await;
        self.apply_offers(s, labels, scene, outcome, warnings);
        s.enter(SessionState::Suggestions);
    }

    fn zone_labels(&self, s: &Session) -> Vec<String> {
        zone_labels(&s.detections, s.lasso.as_ref(), self.config.min_confidence)
    }

    fn apply_offers(&self, s: &mut Session, labels: Vec<String>, scene: SceneDescription, mut o: OfferOutcome, mut warnings: Vec<session::Warning>) {
        s.timings.recommend = Some(o.recommend_seconds);
        s.timings.repo_search = Some(o.repo_search_seconds);
        s.current.errors += o.errors;
        s.current.suggestions_seen += o.suggestions_seen;
        s.current.duplicates_dropped += o.duplicates_dropped;
        s.history.push(o.menus.recommended.iter().map(|r| r.suggestion.name.clone()).collect());
        warnings.append(&mut o.menus.warnings);
        o.menus.warnings = warnings;
        o.menus.detected = labels;
        s.scene = Some(SceneDescription::new(
            o.location_name.unwrap_or_default(),
            o.summary.unwrap_or_default(),
            scene.detected_labels(),
        ));
        s.menus = Some(o.menus);
        s.clock.menus_at = Some(Instant::now());
    }

    /// Runs recommendation and repository search concurrently, each under
    /// the branch deadline. A failed branch leaves its list empty and adds
    /// a warning.
    pub async fn assemble_offers(&self, labels: &[String], scene: &SceneDescription, image: Option<&ImageData>) -> OfferOutcome {
        let deadline = Duration::from_millis(self.config.branch_deadline_ms);
        let prompt = build_designer_prompt(Some(scene));

        let recommend = async {
            let t = Instant::now();
            let r = bounded(deadline, self.backends.describer.describe(&prompt, image)).await;
            (r, t.elapsed().as_secs_f64())
        };
        let repo = self.repo.clone();
        let query: Vec<String> = labels.to_vec();
        let (k, min_score) = (self.config.repo_k, self.config.repo_min_score);
        let search = async move {
            let t = Instant::now();
            let job = tokio::task::spawn_blocking(move || search_repo(&repo, &query, k, min_score));
            let r = match tokio::time::timeout(deadline, job).await {
                Ok(Ok(r)) => r,
                Ok(Err(join)) => Err(join.to_string()),
                Err(_) => Err(format!("no answer within {} ms", deadline.as_millis())),
            };
            (r, t.elapsed().as_secs_f64())
        };
        let ((rec, rec_secs), (hits, repo_secs)) = tokio::join!(recommend, search);

        let mut out = OfferOutcome {
            recommend_seconds: rec_secs,
            repo_search_seconds: repo_secs,
            ..OfferOutcome::default()
        };
        match hits {
            Ok(h) => out.menus.repository = h,
            Err(e) => {
                out.errors += 1;
                out.menus.warnings.push(warning("repository", "repo_search_failed", e));
            }
        }
        match rec {
            Ok(reply) => {
                let parsed = parse_suggestions(&reply.suggestions);
                let filtered = filter_duplicates(&parsed.suggestions, scene, &self.repo.labels());
                out.suggestions_seen = parsed.suggestions.len() as u32;
                out.duplicates_dropped = filtered.dropped.len() as u32;
                if !parsed.issues.is_empty() {
                    tracing::debug!(issues = parsed.issues.len(), "unparsed suggestion lines");
                }
                out.menus.recommended = filtered.kept;
                out.location_name = Some(reply.location_name);
                out.summary = Some(reply.summary);
            }
            Err(e) => {
                out.errors += 1;
                out.menus.warnings.push(warning("recommended", e.code(), e.to_string()));
            }
        }
        out
    }

    /// Produces the asset for the session's selection: the repository blob
    /// on a cache hit, otherwise generation, validation, simplification and
    /// storage. Records stage timings on the session.
    pub async fn fulfill(&self, s: &mut Session) -> Result<AssetRecord, SessionError> {
        if s.state != SessionState::Baking {
            return Err(session_error("not_baking", format!("fulfilment needs Baking, session is {}", s.state), false));
        }
        let sel = s.selection.clone().ok_or_else(|| session_error("no_selection", "nothing selected", false))?;
        let image_path = s.state_history.iter().rev().take_while(|st| **st != SessionState::Welcome).any(|st| *st == SessionState::Observing);
        match sel {
            Selection::Repository { asset_id } => self.serve_cached(s, &asset_id).await,
            Selection::Detected { label } if image_path => {
                let image = s.image.clone().unwrap_or_else(placeholder_image);
                let size = ImageSize {
                    width: image.width,
                    height: image.height,
                };
                let crop = s.lasso.as_ref().and_then(|l| crop_rect(l, size).ok());
                let limit = Duration::from_millis(self.config.generation_deadline_ms);
                s.current.generator_calls += 1;
                let t = Instant::now();
                let mesh = bounded(limit, self.backends.image_to_3d.generate(&image, crop, &label))
                    .await
                    .map_err(generation_error)?;
                s.timings.generate = Some(t.elapsed().as_secs_f64());
                self.post_process(s, &label, mesh, AssetSource::ImageDerived).await
            }
            Selection::Detected { label } => self.serve_text(s, &label, &label).await,
            Selection::Recommended { name } => {
                let prompt = s
                    .menus
                    .as_ref()
                    .and_then(|m| m.recommended.iter().find(|r| r.suggestion.name.eq_ignore_ascii_case(name.trim())))
                    .map(|r| r.suggestion.generation_prompt())
                    .unwrap_or_else(|| name.clone());
                self.serve_text(s, &name, &prompt).await
            }
        }
    }

    async fn serve_text(&self, s: &mut Session, label: &str, prompt: &str) -> Result<AssetRecord, SessionError> {
        let t = Instant::now();
        let dup = self.repo.find_duplicate(label, self.repo.config().duplicate_threshold);
        s.timings.repo_search = Some(s.timings.repo_search.unwrap_or(0.0) + t.elapsed().as_secs_f64());
        match dup {
            Ok(Some(id)) => return self.serve_cached(s, &id).await,
            Ok(None) => {}
            Err(e) => {
                s.current.errors += 1;
                tracing::warn!(error = %e, "duplicate lookup failed, generating");
            }
        }
        let limit = Duration::from_millis(self.config.generation_deadline_ms);
        s.current.generator_calls += 1;
        let t = Instant::now();
        let mesh = bounded(limit, self.backends.text_to_3d.generate(prompt)).await.map_err(generation_error)?;
        s.timings.generate = Some(t.elapsed().as_secs_f64());
        self.post_process(s, label, mesh, AssetSource::Generated).await
    }

    async fn serve_cached(&self, s: &mut Session, id: &str) -> Result<AssetRecord, SessionError> {
        let t = Instant::now();
        if self.config.retrieval_delay_ms > 0 {
            tokio::time::sleep(Duration::from_millis(self.config.retrieval_delay_ms)).await;
        }
        let record = self.repo.get(id).ok_or_else(|| session_error("asset_not_found", format!("asset {id} not found"), false))?;
        let mesh = self
            .repo
            .load_mesh(&record.mesh_ref)
            .map_err(|e| session_error("asset_unreadable", e.to_string(), false))?;
        self.repo
            .record_hit(id)
            .map_err(|e| session_error("repository_write_failed", e.to_string(), true))?;
        let secs = t.elapsed().as_secs_f64();
        s.timings.retrieve = Some(secs);
        s.timings.time_to_object = Some(secs);
        s.served = Some(ServedAsset {
            asset_id: record.id.clone(),
            label: record.label.clone(),
            vertex_count: mesh.vertex_count(),
            face_count: mesh.face_count(),
            bytes: binary_size(mesh.vertex_count(), mesh.face_count()) as u64,
            cache_hit: true,
            guard_blocked: false,
        });
        Ok(record)
    }

    async fn post_process(&self, s: &mut Session, label: &str, mesh: Mesh, source: AssetSource) -> Result<AssetRecord, SessionError> {
        let report = mesh.validate();
        if !report.is_valid() {
            return Err(SessionError {
                code: "invalid_mesh".into(),
                message: "generator returned an invalid mesh".into(),
                retriable: false,
                validation: Some(report),
            });
        }
        s.current.raw_mesh_bytes = Some(binary_size(mesh.vertex_count(), mesh.face_count()) as u64);

        let cfg = self.config.simplify.clone();
        let t = Instant::now();
        let (reduced, simp) = tokio::task::spawn_blocking(move || simplify(&mesh, &cfg))
            .await
            .map_err(|e| session_error("simplify_failed", e.to_string(), false))?
            .map_err(|e| session_error("simplify_failed", e.to_string(), false))?;
        let simplify_secs = t.elapsed().as_secs_f64();
        s.timings.simplify = Some(simplify_secs);
        s.timings.time_to_object = Some(s.timings.generate.unwrap_or(0.0) + simplify_secs);

        let t = Instant::now();
        let record = self
            .repo
            .insert_asset(label, &reduced, source)
            .map_err(|e| session_error("repository_write_failed", e.to_string(), true))?;
        s.timings.deliver = Some(t.elapsed().as_secs_f64());
        s.served = Some(ServedAsset {
            asset_id: record.id.clone(),
            label: record.label.clone(),
            vertex_count: reduced.vertex_count(),
            face_count: reduced.face_count(),
            bytes: binary_size(reduced.vertex_count(), reduced.face_count()) as u64,
            cache_hit: false,
            guard_blocked: simp.guard_blocked,
        });
        Ok(record)
    }
}

fn generation_error(e: BackendError) -> SessionError {
    let retriable = matches!(e, BackendError::Timeout { .. }) || e.is_transient();
    session_error(e.code(), e.to_string(), retriable)
}

/// Merged hits for every label, one entry per asset at its best score.
fn search_repo(repo: &Repository, labels: &[String], k: usize, min_score: f64) -> Result<Vec<RepoOffer>, String> {
    let mut best: HashMap<String, RepoOffer> = HashMap::new();
    let mut order: Vec<String> = Vec::new();
    for label in labels {
        for hit in repo.query_label(label, k, min_score).map_err(|e| e.to_string())? {
            match best.get_mut(&hit.id) {
                Some(o) if o.score >= hit.score => {}
                Some(o) => o.score = hit.score,
                None => {
                    order.push(hit.id.clone());
                    best.insert(
                        hit.id.clone(),
                        RepoOffer {
                            label: hit.label,
                            asset_id: hit.id,
                            score: hit.score,
                        },
                    );
                }
            }
        }
    }
    let mut out: Vec<RepoOffer> = order.into_iter().filter_map(|id| best.remove(&id)).collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    out.truncate(k);
    Ok(out)
}

/// Label set of a lasso zone, for callers without a session.
pub fn zone_labels(detections: &[DetectionBox], lasso: Option<&LassoPolygon>, min_confidence: f64) -> Vec<String> {
    dedup_labels(
        filter_detections(detections, lasso, min_confidence)
            .unwrap_or_default()
            .into_iter()
            .map(|d| d.label),
    )
}
