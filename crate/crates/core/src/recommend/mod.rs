//! Context-aware object recommendation: the designer prompt sent to the
//! language/vision backend, parsing of its reply into menu rows, duplicate
//! filtering against the scene, and recommendation-quality metrics.

mod metrics;
mod parse;

pub use metrics::{diversity_index, evaluate, novelty_score, shannon_entropy_bits, MetricsError, RecommendationMetrics, RecommendationRound};
pub use parse::{parse_suggestion_line, parse_suggestions, IssueKind, ParseIssue, ParsedSuggestions};

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Asks the model to name and describe the location.
pub const LOCATION_PROMPT: &str = "write where am I (location name and a short description of the location).";

/// Asks for five new objects with color, shape and placement.
pub const DESIGNER_PROMPT: &str = "As a designer, recommend 5 simple objects (name , color, shape and suggest a location for each object within this space relative to the other objects in the picture) that would be suitable for this place but are currently not present.";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectSuggestion {
    pub name: String,
    pub color: String,
    pub shape: String,
    pub location: String,
}

impl ObjectSuggestion {
    /// Text used as the generation prompt for this suggestion.
    pub fn generation_prompt(&self) -> String {
        [self.color.as_str(), self.shape.as_str(), self.name.as_str()]
            .iter()
            .filter(|s| !s.is_empty())
            .copied()
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl fmt::Display for ObjectSuggestion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} - {}, {} - {}", self.name, self.color, self.shape, self.location)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneDescription {
    pub location_name: String,
    pub summary: String,
    detected_labels: Vec<String>,
}

impl SceneDescription {
    pub fn new(location_name: impl Into<String>, summary: impl Into<String>, labels: impl IntoIterator<Item = impl AsRef<str>>) -> Self {
        let mut seen = HashSet::new();
        let detected_labels = labels
            .into_iter()
            .map(|l| l.as_ref().trim().to_string())
            .filter(|l| !l.is_empty() && seen.insert(l.to_lowercase()))
            .collect();
        Self {
            location_name: location_name.into(),
            summary: summary.into(),
            detected_labels,
        }
    }

    pub fn detected_labels(&self) -> &[String] {
        &self.detected_labels
    }
}

/// The two-clause designer prompt; with a scene, the detected objects are
/// appended so the model does not suggest them again.
pub fn build_designer_prompt(scene: Option<&SceneDescription>) -> String {
    let mut prompt = format!("{LOCATION_PROMPT}\n{DESIGNER_PROMPT}");
    if let Some(scene) = scene {
        if !scene.detected_labels.is_empty() {
            prompt.push_str("\nObjects already present: ");
            prompt.push_str(&scene.detected_labels.join(", "));
            prompt.push('.');
        }
    }
    prompt
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeptSuggestion {
    #[serde(flatten)]
    pub suggestion: ObjectSuggestion,
    /// A repository asset already carries this name.
    pub cache_available: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateFilter {
    pub kept: Vec<KeptSuggestion>,
    /// Suggestions naming something already in the scene.
    pub dropped: Vec<ObjectSuggestion>,
}

impl DuplicateFilter {
    /// Share of suggestions dropped; 0 for an empty batch.
    pub fn duplicate_rate(&self) -> f64 {
        let total = self.kept.len() + self.dropped.len();
        if total == 0 {
            0.0
        } else {
            self.dropped.len() as f64 / total as f64
        }
    }
}

fn norm_name(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Drops suggestions whose name matches a detected scene label
/// (case-insensitive, trimmed); flags those matching a repository label.
pub fn filter_duplicates(suggestions: &[ObjectSuggestion], scene: &SceneDescription, repo_labels: &[String]) -> DuplicateFilter {
    let detected: HashSet<String> = scene.detected_labels.iter().map(|l| norm_name(l)).collect();
    let cached: HashSet<String> = repo_labels.iter().map(|l| norm_name(l)).collect();
    let mut out = DuplicateFilter::default();
    for s in suggestions {
        let key = norm_name(&s.name);
        if detected.contains(&key) {
            out.dropped.push(s.clone());
        } else {
            out.kept.push(KeptSuggestion {
                suggestion: s.clone(),
                cache_available: cached.contains(&key),
            });
        }
    }
    out
}
