use serde::{Deserialize, Serialize};

use super::session::{Event, Selection, Session};
use super::state::SessionState;
use super::{Pipeline, PipelineError};

fn default_language() -> String {
    "en".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AutoSelect {
    FirstDetected,
}

/// Mock tuning for headless runs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptMock {
    pub generator_latency_ms: u64,
    pub fixed_vertices: Option<usize>,
    pub retrieval_delay_ms: u64,
}

/// A recorded session: events in order, plus an optional automatic pick
/// once the menus are up.
///
/// ```json
/// {"language": "en", "auto_select": "first-detected",
///  "steps": [{"type": "wake"}, {"type": "transcript", "text": "Create a red apple"}, {"type": "stop"}]}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Script {
    #[serde(default = "default_language")]
    pub language: String,
    pub steps: Vec<Event>,
    #[serde(default)]
    pub auto_select: Option<AutoSelect>,
    #[serde(default)]
    pub mock: ScriptMock,
}

impl Script {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Plays `script` against a fresh session. Stops at the first rejected
/// event.
pub async fn run_script(pipeline: &Pipeline, script: &Script) -> Result<Session, PipelineError> {
    let mut session = Session::new(script.language.clone());
    for step in &script.steps {
        pipeline.handle(&mut session, step.clone()).await?;
    }
    let waiting = matches!(session.state, SessionState::Offers | SessionState::Suggestions);
    if waiting && script.auto_select == Some(AutoSelect::FirstDetected) {
        let label = session
            .menus
            .as_ref()
            .and_then(|m| m.detected.first().cloned())
            .ok_or_else(|| PipelineError::UnknownSelection("no detected object to auto-select".into()))?;
        pipeline
            .handle(&mut session, Event::Selection(Selection::Detected { label }))
            .await?;
    }
    Ok(session)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_script() {
        let s = Script::from_json(r#"{"steps":[{"type":"wake"},{"type":"stop"}],"auto_select":"first-detected"}"#).unwrap();
        assert_eq!(s.language, "en");
        assert_eq!(s.steps.len(), 2);
        assert_eq!(s.auto_select, Some(AutoSelect::FirstDetected));
        assert_eq!(s.mock, ScriptMock::default());
        assert!(Script::from_json(r#"{"steps":[{"type":"dance"}]}"#).is_err());
    }
}
