use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use super::state::SessionState;
use crate::backends::geometry::{DetectionBox, LassoPolygon};
use crate::backends::ImageData;
use crate::mesh::ValidationReport;
use crate::recommend::{KeptSuggestion, SceneDescription};

/// Client-visible session events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Wake,
    /// Appends recognised speech (or a typed phrase) while listening.
    Transcript { text: String },
    Stop,
    /// Camera frame from the headset; the lasso, if given, limits detection
    /// and cropping to the drawn zone.
    Capture {
        #[serde(default)]
        image: Option<ImageData>,
        #[serde(default)]
        lasso: Option<LassoPolygon>,
        #[serde(default)]
        client_time: Option<DateTime<Utc>>,
    },
    /// Sets the zone for the next capture, or narrows the detected menu of
    /// the current one.
    Lasso { points: LassoPolygon },
    Selection(Selection),
    /// Leaves `Failed` for a fresh start.
    Reset,
}

impl Event {
    pub fn name(&self) -> &'static str {
        match self {
            Event::Wake => "wake",
            Event::Transcript { .. } => "transcript",
            Event::Stop => "stop",
            Event::Capture { .. } => "capture",
            Event::Lasso { .. } => "lasso",
            Event::Selection(_) => "selection",
            Event::Reset => "reset",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Selection {
    Detected { label: String },
    Repository { asset_id: String },
    Recommended { name: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepoOffer {
    pub label: String,
    pub asset_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warning {
    pub branch: String,
    pub code: String,
    pub message: String,
}

/// The three selection lists shown before anything is generated.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OfferMenus {
    pub detected: Vec<String>,
    /// Best score first.
    pub repository: Vec<RepoOffer>,
    pub recommended: Vec<KeptSuggestion>,
    #[serde(default)]
    pub warnings: Vec<Warning>,
}

/// Stage durations in seconds; `None` for stages that did not run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub transcribe: Option<f64>,
    pub extract: Option<f64>,
    pub detect: Option<f64>,
    pub recommend: Option<f64>,
    pub repo_search: Option<f64>,
    /// Blob fetch on the cache path.
    pub retrieve: Option<f64>,
    pub generate: Option<f64>,
    pub simplify: Option<f64>,
    pub deliver: Option<f64>,
    /// Menus shown until the user picked.
    pub wait_for_selection: Option<f64>,
    pub time_to_object: Option<f64>,
    pub task_completion: Option<f64>,
    /// `task_completion` minus `wait_for_selection`.
    pub system_time: Option<f64>,
}

impl StageTimings {
    pub const STAGES: [&'static str; 13] = [
        "transcribe",
        "extract",
        "detect",
        "recommend",
        "repo_search",
        "retrieve",
        "generate",
        "simplify",
        "deliver",
        "wait_for_selection",
        "time_to_object",
        "task_completion",
        "system_time",
    ];

    pub fn get(&self, stage: &str) -> Option<f64> {
        match stage {
            "transcribe" => self.transcribe,
            "extract" => self.extract,
            "detect" => self.detect,
            "recommend" => self.recommend,
            "repo_search" => self.repo_search,
            "retrieve" => self.retrieve,
            "generate" => self.generate,
            "simplify" => self.simplify,
            "deliver" => self.deliver,
            "wait_for_selection" => self.wait_for_selection,
            "time_to_object" => self.time_to_object,
            "task_completion" => self.task_completion,
            "system_time" => self.system_time,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionError {
    pub code: String,
    pub message: String,
    pub retriable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationReport>,
}

/// The delivered object of a finished task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServedAsset {
    pub asset_id: String,
    pub label: String,
    pub vertex_count: usize,
    pub face_count: usize,
    pub bytes: u64,
    pub cache_hit: bool,
    /// The collapse guards stopped short of the vertex target.
    pub guard_blocked: bool,
}

/// One request from wake (or capture) to a presented object or a failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub success: bool,
    pub cache_hit: bool,
    pub generator_calls: u32,
    pub errors: u32,
    pub timings: StageTimings,
    pub raw_mesh_bytes: Option<u64>,
    pub served_mesh_bytes: Option<u64>,
    pub suggestions_seen: u32,
    pub duplicates_dropped: u32,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Clock {
    pub started: Option<Instant>,
    pub menus_at: Option<Instant>,
    pub selected_at: Option<Instant>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    /// BCP-47 tag.
    pub language: String,
    pub state: SessionState,
    /// Every state entered, starting with `Welcome`.
    pub state_history: Vec<SessionState>,
    pub created_at: DateTime<Utc>,
    pub transcript: String,
    pub scene: Option<SceneDescription>,
    pub lasso: Option<LassoPolygon>,
    #[serde(skip)]
    pub image: Option<ImageData>,
    pub detections: Vec<DetectionBox>,
    pub menus: Option<OfferMenus>,
    pub selection: Option<Selection>,
    /// Repository id of the presented object.
    pub asset: Option<String>,
    pub served: Option<ServedAsset>,
    pub timings: StageTimings,
    /// Recommended labels per offer round, oldest first.
    pub history: Vec<Vec<String>>,
    pub error: Option<SessionError>,
    pub tasks: Vec<TaskRecord>,
    pub(crate) current: TaskCounters,
    #[serde(skip)]
    pub(crate) clock: Clock,
    #[serde(skip)]
    listener: Option<broadcast::Sender<SessionState>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub(crate) struct TaskCounters {
    pub generator_calls: u32,
    pub errors: u32,
    pub raw_mesh_bytes: Option<u64>,
    pub suggestions_seen: u32,
    pub duplicates_dropped: u32,
}

impl Session {
    pub fn new(language: impl Into<String>) -> Self {
        Self {
            id: uuid::Uuid::new_v4().to_string(),
            language: language.into(),
            state: SessionState::Welcome,
            state_history: vec![SessionState::Welcome],
            created_at: Utc::now(),
            transcript: String::new(),
            scene: None,
            lasso: None,
            image: None,
            detections: Vec::new(),
            menus: None,
            selection: None,
            asset: None,
            served: None,
            timings: StageTimings::default(),
            history: Vec::new(),
            error: None,
            tasks: Vec::new(),
            current: TaskCounters::default(),
            clock: Clock::default(),
            listener: None,
        }
    }

    /// Every state entered from now on is also sent to `tx`.
    pub fn set_listener(&mut self, tx: broadcast::Sender<SessionState>) {
        self.listener = Some(tx);
    }

    pub(crate) fn enter(&mut self, state: SessionState) {
        self.state = state;
        self.state_history.push(state);
        if let Some(tx) = &self.listener {
            // No subscribers is fine.
            let _ = tx.send(state);
        }
    }

    /// Clears per-task fields for a new request.
    pub(crate) fn begin_task(&mut self) {
        self.transcript.clear();
        self.scene = None;
        self.image = None;
        self.detections.clear();
        self.menus = None;
        self.selection = None;
        self.asset = None;
        self.served = None;
        self.timings = StageTimings::default();
        self.error = None;
        self.current = TaskCounters::default();
        self.clock = Clock {
            started: Some(Instant::now()),
            ..Clock::default()
        };
    }

    pub(crate) fn finish_task(&mut self, success: bool) {
        if let Some(t0) = self.clock.started {
            let total = t0.elapsed().as_secs_f64();
            self.timings.task_completion = Some(total);
            self.timings.system_time = Some((total - self.timings.wait_for_selection.unwrap_or(0.0)).max(0.0));
        }
        let served = self.served.as_ref();
        self.tasks.push(TaskRecord {
            success,
            cache_hit: served.is_some_and(|s| s.cache_hit),
            generator_calls: self.current.generator_calls,
            errors: self.current.errors,
            timings: self.timings.clone(),
            raw_mesh_bytes: self.current.raw_mesh_bytes,
            served_mesh_bytes: served.map(|s| s.bytes),
            suggestions_seen: self.current.suggestions_seen,
            duplicates_dropped: self.current.duplicates_dropped,
        });
    }

    /// Asset only while presenting; menus only from the offer step on.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.asset.is_some() != (self.state == SessionState::Presenting) {
            return Err(format!("asset {:?} in state {}", self.asset, self.state));
        }
        if self.menus.is_some() && !self.state.has_menus() {
            return Err(format!("menus present in state {}", self.state));
        }
        if self.state_history.last() != Some(&self.state) {
            return Err("history does not end in the current state".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn events_use_type_tags() {
        let e: Event = serde_json::from_str(r#"{"type":"selection","source":"detected","label":"apple"}"#).unwrap();
        assert_eq!(e, Event::Selection(Selection::Detected { label: "apple".into() }));
        assert_eq!(serde_json::to_value(&e).unwrap()["source"], "detected");
        let c: Event = serde_json::from_str(r#"{"type":"capture"}"#).unwrap();
        assert!(matches!(c, Event::Capture { image: None, lasso: None, .. }));
        let t: Event = serde_json::from_str(r#"{"type":"transcript","text":"a red apple"}"#).unwrap();
        assert_eq!(t.name(), "transcript");
        assert!(serde_json::from_str::<Event>(r#"{"type":"lasso","points":[{"x":0,"y":0}]}"#).is_err());
    }

    #[test]
    fn fresh_session_holds_invariants() {
        let s = Session::new("en");
        assert_eq!(s.state, SessionState::Welcome);
        s.check_invariants().unwrap();
        let json = serde_json::to_value(&s).unwrap();
        assert_eq!(json["state"], "Welcome");
    }

    #[test]
    fn listener_sees_every_entered_state() {
        let (tx, mut rx) = broadcast::channel(8);
        let mut s = Session::new("en");
        s.set_listener(tx);
        s.enter(SessionState::Listening);
        s.enter(SessionState::Thinking);
        assert_eq!(rx.try_recv().unwrap(), SessionState::Listening);
        assert_eq!(rx.try_recv().unwrap(), SessionState::Thinking);
    }
}
