//! Random event walks through a full mock pipeline, checking the state
//! graph and generator discipline after every event.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use async_trait::async_trait;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use meshforge::backends::geometry::{LassoPolygon, Point, Rect};
use meshforge::backends::mock::MockGenerator;
use meshforge::backends::{BackendError, ImageData, ImageTo3d, TextTo3d};
use meshforge::mesh::Mesh;
use meshforge::pipeline::{is_legal_path, Backends, Event, Pipeline, PipelineConfig, Selection, Session, SessionState};
use meshforge::repo::{HashingEmbedder, RepoConfig, Repository};
use meshforge::simplify::SimplifyConfig;

/// Counts calls and fails every `fail_every`-th one.
pub struct SpyGenerator {
    inner: MockGenerator,
    calls: AtomicUsize,
    fail_every: usize,
}

impl SpyGenerator {
    pub fn new(inner: MockGenerator, fail_every: usize) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
            fail_every,
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn tick(&self) -> Result<(), BackendError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
        if self.fail_every > 0 && n % self.fail_every == 0 {
            Err(BackendError::Transport("injected".into()))
        } else {
            Ok(())
        }
    }
}

#[async_trait]
impl TextTo3d for SpyGenerator {
    async fn generate(&self, prompt: &str) -> Result<Mesh, BackendError> {
        self.tick()?;
        TextTo3d::generate(&self.inner, prompt).await
    }
}

#[async_trait]
impl ImageTo3d for SpyGenerator {
    async fn generate(&self, image: &ImageData, crop: Option<Rect>, label: &str) -> Result<Mesh, BackendError> {
        self.tick()?;
        ImageTo3d::generate(&self.inner, image, crop, label).await
    }
}

pub fn walk_pipeline(spy: Arc<SpyGenerator>) -> Pipeline {
    let repo = Repository::in_memory(RepoConfig::default(), Arc::new(HashingEmbedder::default()));
    let mut backends = Backends::mock(MockGenerator::new());
    backends.text_to_3d = spy.clone();
    backends.image_to_3d = spy;
    let config = PipelineConfig {
        simplify: SimplifyConfig::with_target(40),
        ..PipelineConfig::default()
    };
    Pipeline::new(Arc::new(repo), backends, config)
}

fn lasso() -> LassoPolygon {
    LassoPolygon::new(vec![Point::new(150.0, 100.0), Point::new(480.0, 100.0), Point::new(480.0, 300.0), Point::new(150.0, 300.0)]).unwrap()
}

fn random_event(rng: &mut ChaCha8Rng, s: &Session) -> Event {
    const PHRASES: [&str; 4] = ["Create a red apple and a banana", "make a wooden chair", "a blue cup", "please"];
    match rng.gen_range(0..8) {
        0 => Event::Wake,
        1 => Event::Transcript {
            text: PHRASES[rng.gen_range(0..PHRASES.len())].into(),
        },
        2 => Event::Stop,
        3 => Event::Capture {
            image: None,
            lasso: rng.gen_bool(0.5).then(lasso),
            client_time: None,
        },
        4 => Event::Lasso { points: lasso() },
        5 => Event::Reset,
        _ => {
            let sel = s.menus.as_ref().and_then(|m| match rng.gen_range(0..3) {
                0 if !m.detected.is_empty() => Some(Selection::Detected {
                    label: m.detected[rng.gen_range(0..m.detected.len())].clone(),
                }),
                1 if !m.repository.is_empty() => Some(Selection::Repository {
                    asset_id: m.repository[rng.gen_range(0..m.repository.len())].asset_id.clone(),
                }),
                2 if !m.recommended.is_empty() => Some(Selection::Recommended {
                    name: m.recommended[rng.gen_range(0..m.recommended.len())].suggestion.name.clone(),
                }),
                _ => None,
            });
            Event::Selection(sel.unwrap_or(Selection::Detected { label: "nothing".into() }))
        }
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct WalkStats {
    pub events: usize,
    pub rejected: usize,
    pub presented: usize,
    pub failed: usize,
    pub generator_calls: usize,
}

/// One walk of `steps` random events on a fresh pipeline.
pub async fn random_walk(seed: u64, steps: usize) -> Result<WalkStats, String> {
    let spy = Arc::new(SpyGenerator::new(MockGenerator::new().with_fixed_vertices(60), 4));
    let pipeline = walk_pipeline(spy.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = Session::new("en");
    let mut stats = WalkStats::default();
    for step in 0..steps {
        let event = random_event(&mut rng, &s);
        let before_state = s.state;
        let before_len = s.state_history.len();
        let before_calls = spy.calls();
        let snapshot = serde_json::to_string(&s).unwrap();
        let is_selection = matches!(event, Event::Selection(_));
        stats.events += 1;
        match pipeline.handle(&mut s, event).await {
            Err(_) => {
                stats.rejected += 1;
                if serde_json::to_string(&s).unwrap() != snapshot {
                    return Err(format!("seed {seed} step {step}: rejected event changed the session"));
                }
            }
            Ok(()) => {
                let entered = &s.state_history[before_len..];
                if entered.contains(&SessionState::Presenting) {
                    stats.presented += 1;
                }
                if entered.contains(&SessionState::Failed) {
                    stats.failed += 1;
                }
                if spy.calls() > before_calls {
                    let from_menus = matches!(before_state, SessionState::Offers | SessionState::Suggestions);
                    if !is_selection || !from_menus || entered.first() != Some(&SessionState::Baking) {
                        return Err(format!("seed {seed} step {step}: generator ran outside Baking ({before_state} -> {entered:?})"));
                    }
                }
            }
        }
        for w in s.state_history.windows(2) {
            if w[1] == SessionState::Presenting && w[0] != SessionState::Baking {
                return Err(format!("seed {seed}: Presenting entered from {}", w[0]));
            }
        }
        s.check_invariants().map_err(|e| format!("seed {seed} step {step}: {e}"))?;
    }
    if !is_legal_path(&s.state_history) {
        return Err(format!("seed {seed}: illegal path {:?}", s.state_history));
    }
    stats.generator_calls = spy.calls();
    Ok(stats)
}
