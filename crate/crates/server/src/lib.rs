//! Session-based recommendation service over pre-trained per-task models.
//!
//! Models are loaded once at startup and never modified. Each session
//! walks the design space one applied edit at a time; chart states always
//! travel as chart specs, never as indices.

mod config;
mod routes;
mod state;

use std::path::Path;

use thiserror::Error;

pub use config::{ServiceConfig, ENV_MODEL_DIR, ENV_PORT};
pub use routes::router;
pub use state::{ApiError, AppState, HistoryEntry, LoadedModel, RecommendResponse, RecommendationView, SessionView, TaskInfo};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error("model {path}: {reason}")]
    Model { path: String, reason: String },
    #[error("session log line {line}: {reason}")]
    Log { line: usize, reason: String },
    #[error(transparent)]
    Space(#[from] chartseq_core::design_space::SpaceError),
    #[error(transparent)]
    Reward(#[from] chartseq_core::reward::RewardError),
    #[error(transparent)]
    Plan(#[from] chartseq_core::planner::PlanError),
}

impl ServiceError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ServiceError::Io { path: path.display().to_string(), source }
    }
}

/// Binds the configured port and serves until the process is stopped.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let state = AppState::load(&config)?;
    let addr = std::net::SocketAddr::from(([127, 0, 0, 1], config.port));
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| ServiceError::Io { path: addr.to_string(), source: e })?;
    eprintln!("listening on http://{addr} with {} task model(s)", state.task_names().len());
    axum::serve(listener, router(state))
        .await
        .map_err(|e| ServiceError::Io { path: addr.to_string(), source: e })
}
