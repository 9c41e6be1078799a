//! HTTP API and command-line front end for the meshforge pipeline.
//!
//! [`serve`] runs the versioned REST/SSE service described in [`api`];
//! [`cli`] holds the `meshforge` subcommands.

pub mod api;
pub mod bench;
pub mod cli;
pub mod config;
pub mod store;

use std::future::Future;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::Context;
use meshforge::backends::mock::MockGenerator;
use meshforge::pipeline::{Backends, Pipeline};
use meshforge::repo::{HashingEmbedder, RepoConfig, Repository};
use tokio::net::TcpListener;

pub use api::{router, ApiError, AppState};
pub use config::{ApiConfig, ConfigError};

/// Opens (or creates) a repository directory with the default embedder.
pub fn open_repo(dir: &Path) -> anyhow::Result<Repository> {
    Repository::open(dir, RepoConfig::default(), Arc::new(HashingEmbedder::default()))
        .with_context(|| format!("opening repository {}", dir.display()))
}

pub fn build_state(config: &ApiConfig) -> anyhow::Result<Arc<AppState>> {
    config.check()?;
    let repo = open_repo(&config.repo_path)?;
    let backends = Backends::with_descriptors(MockGenerator::new(), &config.backends);
    let pipeline = Pipeline::new(Arc::new(repo), backends, config.pipeline_config());
    Ok(AppState::new(pipeline, config.token.clone()))
}

/// Serves until `shutdown` resolves, then waits for running events to
/// finish (bounded by the generation deadline).
pub async fn serve(config: ApiConfig, shutdown: impl Future<Output = ()> + Send + 'static) -> anyhow::Result<()> {
    let state = build_state(&config)?;
    let listener = TcpListener::bind(config.bind)
        .await
        .with_context(|| format!("binding {}", config.bind))?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    serve_on(listener, state, config.console_dir.as_deref(), shutdown).await
}

pub async fn serve_on(
    listener: TcpListener,
    state: Arc<AppState>,
    console_dir: Option<&Path>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> anyhow::Result<()> {
    let app = router(state.clone(), console_dir);
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await?;
    let limit = Duration::from_millis(state.pipeline.config().generation_deadline_ms);
    let start = Instant::now();
    while state.sessions.in_flight() > 0 && start.elapsed() < limit {
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    tracing::info!(left = state.sessions.in_flight(), "stopped");
    Ok(())
}
