use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SessionState {
    Welcome,
    Listening,
    Thinking,
    Offers,
    Baking,
    Presenting,
    Observing,
    Suggestions,
    Failed,
}

impl SessionState {
    pub const ALL: [SessionState; 9] = [
        SessionState::Welcome,
        SessionState::Listening,
        SessionState::Thinking,
        SessionState::Offers,
        SessionState::Baking,
        SessionState::Presenting,
        SessionState::Observing,
        SessionState::Suggestions,
        SessionState::Failed,
    ];

    /// States in which the offer menus may be present.
    pub fn has_menus(self) -> bool {
        matches!(
            self,
            SessionState::Offers | SessionState::Suggestions | SessionState::Baking | SessionState::Presenting | SessionState::Failed
        )
    }
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// What moves the machine. Client events map onto these; the rest are
/// raised by the pipeline itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    /// Wake word, or a new request once an object is presented.
    Wake,
    Stop,
    MenusReady,
    Select,
    AssetReady,
    Capture,
    VlmReply,
    BackendError,
    Reset,
}

impl Trigger {
    pub const ALL: [Trigger; 9] = [
        Trigger::Wake,
        Trigger::Stop,
        Trigger::MenusReady,
        Trigger::Select,
        Trigger::AssetReady,
        Trigger::Capture,
        Trigger::VlmReply,
        Trigger::BackendError,
        Trigger::Reset,
    ];
}

/// Declared edges of the status board.
pub const EDGES: [(SessionState, Trigger, SessionState); 10] = {
    use SessionState::*;
    [
        (Welcome, Trigger::Wake, Listening),
        (Listening, Trigger::Stop, Thinking),
        (Thinking, Trigger::MenusReady, Offers),
        (Offers, Trigger::Select, Baking),
        (Baking, Trigger::AssetReady, Presenting),
        (Welcome, Trigger::Capture, Observing),
        (Observing, Trigger::VlmReply, Suggestions),
        (Suggestions, Trigger::Select, Baking),
        (Presenting, Trigger::Wake, Listening),
        (Failed, Trigger::Reset, Welcome),
    ]
};

/// `None` when `trigger` is not legal in `state`.
pub fn next_state(state: SessionState, trigger: Trigger) -> Option<SessionState> {
    if trigger == Trigger::BackendError {
        return (state != SessionState::Failed).then_some(SessionState::Failed);
    }
    EDGES.iter().find(|(s, t, _)| *s == state && *t == trigger).map(|e| e.2)
}

/// True when every consecutive pair of `path` is a legal transition.
pub fn is_legal_path(path: &[SessionState]) -> bool {
    path.windows(2)
        .all(|w| Trigger::ALL.iter().any(|&t| next_state(w[0], t) == Some(w[1])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use SessionState::*;

    #[test]
    fn wake_word_starts_listening() {
        assert_eq!(next_state(Welcome, Trigger::Wake), Some(Listening));
        assert_eq!(next_state(Listening, Trigger::AssetReady), None);
    }

    #[test]
    fn every_state_can_fail_once() {
        for s in SessionState::ALL {
            assert_eq!(next_state(s, Trigger::BackendError), (s != Failed).then_some(Failed));
        }
    }

    #[test]
    fn both_happy_paths_are_legal() {
        assert!(is_legal_path(&[Welcome, Listening, Thinking, Offers, Baking, Presenting]));
        assert!(is_legal_path(&[Welcome, Observing, Suggestions, Baking, Presenting]));
        assert!(!is_legal_path(&[Welcome, Thinking]));
    }

    #[test]
    fn presenting_only_after_baking() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let mut s = Welcome;
            for _ in 0..10_000 {
                let t = Trigger::ALL[rng.gen_range(0..Trigger::ALL.len())];
                if let Some(n) = next_state(s, t) {
                    if n == Presenting {
                        assert_eq!(s, Baking);
                    }
                    s = n;
                }
            }
        }
    }
}
