use std::net::SocketAddr;
use std::path::PathBuf;

use meshforge::backends::BackendDescriptor;
use meshforge::pipeline::PipelineConfig;
use meshforge::simplify::{SimplifyConfig, DEFAULT_TARGET_VERTICES, MIN_TARGET_VERTICES};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("simplify target {0} is below the minimum of {MIN_TARGET_VERTICES}")]
    TargetTooSmall(usize),
    #[error("auth token must not be empty")]
    EmptyToken,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiConfig {
    pub bind: SocketAddr,
    pub repo_path: PathBuf,
    pub simplify_target: usize,
    /// Kinds listed here use HTTP; the rest stay on mocks.
    #[serde(default)]
    pub backends: Vec<BackendDescriptor>,
    /// Shared secret expected as `Authorization: Bearer <token>`.
    #[serde(default)]
    pub token: Option<String>,
    /// Built console assets, served at `/`.
    #[serde(default)]
    pub console_dir: Option<PathBuf>,
}

impl ApiConfig {
    pub fn new(repo_path: impl Into<PathBuf>) -> Self {
        Self {
            bind: DEFAULT_BIND.parse().expect("default bind address"),
            repo_path: repo_path.into(),
            simplify_target: DEFAULT_TARGET_VERTICES,
            backends: Vec::new(),
            token: None,
            console_dir: None,
        }
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if self.simplify_target < MIN_TARGET_VERTICES {
            return Err(ConfigError::TargetTooSmall(self.simplify_target));
        }
        if self.token.as_deref() == Some("") {
            return Err(ConfigError::EmptyToken);
        }
        Ok(())
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            simplify: SimplifyConfig::with_target(self.simplify_target),
            ..PipelineConfig::default()
        }
    }
}
