use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chartseq_core::demonstrations::Task;
use chartseq_core::design_space::{ChartSpec, EditAction};
use serde::Deserialize;
use serde_json::json;

use crate::state::{ApiError, AppState};

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.code, "message": self.message }))).into_response()
    }
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid-request", e.body_text()))
}

/// Rejects requests whose `Accept` header rules out JSON.
async fn require_json(req: Request, next: Next) -> Response {
    if let Some(accept) = req.headers().get(header::ACCEPT) {
        let ok = accept.to_str().is_ok_and(|v| {
            v.split(',').any(|part| {
                let media = part.split(';').next().unwrap_or("").trim();
                matches!(media, "" | "*/*" | "application/*" | "application/json")
            })
        });
        if !ok {
            return ApiError::new(StatusCode::NOT_ACCEPTABLE, "not-acceptable", "responses are application/json")
                .into_response();
        }
    }
    next.run(req).await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    task: Task,
    #[serde(default)]
    start: Option<ChartSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecommendRequest {
    #[serde(default = "default_k")]
    k: usize,
}

fn default_k() -> usize {
    10
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ApplyRequest {
    action: EditAction,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RankRequest {
    task: Task,
    source: ChartSpec,
    actions: Vec<EditAction>,
}

type AppResult = Result<Response, ApiError>;

async fn tasks(State(app): State<Arc<AppState>>) -> AppResult {
    Ok(Json(app.tasks()).into_response())
}

async fn create_session(State(app): State<Arc<AppState>>, payload: Result<Json<CreateSession>, JsonRejection>) -> AppResult {
    let req = body(payload)?;
    let view = app.create_session(&req.task, req.start.as_ref())?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn get_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> AppResult {
    Ok(Json(app.get_session(&id).await?).into_response())
}

async fn recommend(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    payload: Result<Json<RecommendRequest>, JsonRejection>,
) -> AppResult {
    let req = body(payload)?;
    Ok(Json(app.recommend(&id, req.k).await?).into_response())
}

async fn apply(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    payload: Result<Json<ApplyRequest>, JsonRejection>,
) -> AppResult {
    let req = body(payload)?;
    Ok(Json(app.apply(&id, &req.action).await?).into_response())
}

async fn rank_sequences(State(app): State<Arc<AppState>>, payload: Result<Json<RankRequest>, JsonRejection>) -> AppResult {
    let req = body(payload)?;
    Ok(Json(app.rank_sequences(&req.task, &req.source, &req.actions)?).into_response())
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/tasks", get(tasks))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/recommend", post(recommend))
        .route("/api/sessions/{id}/apply", post(apply))
        .route("/api/rank-sequences", post(rank_sequences))
        .layer(middleware::from_fn(require_json))
        .with_state(state)
}
