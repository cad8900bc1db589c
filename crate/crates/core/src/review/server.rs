use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use super::{ReviewError, ReviewStore, ScoreSheet};

type Shared = Arc<ReviewStore>;

impl IntoResponse for ReviewError {
    fn into_response(self) -> Response {
        let status = match &self {
            ReviewError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ReviewError::UnknownItem(_)
            | ReviewError::UnknownRater(_)
            | ReviewError::NotAssigned { .. }
            | ReviewError::ScoreOutOfRange { .. }
            | ReviewError::MissingCriterion(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ReviewError::Log { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        (status, Json(json!({ "error": self.to_string(), "field": self.field() }))).into_response()
    }
}

#[derive(Deserialize)]
struct RaterQuery {
    rater: String,
}

async fn queue(State(store): State<Shared>, Path(id): Path<String>, Query(q): Query<RaterQuery>) -> Response {
    match store.queue(&id, &q.rater) {
        Ok(v) => Json(v).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn submit(State(store): State<Shared>, Path(id): Path<String>, Json(sheet): Json<ScoreSheet>) -> Response {
    let result = tokio::task::spawn_blocking(move || store.submit_score(&id, sheet)).await;
    match result {
        Ok(Ok(ack)) => Json(ack).into_response(),
        Ok(Err(e)) => e.into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({ "error": e.to_string() }))).into_response(),
    }
}

async fn aggregate(State(store): State<Shared>, Path(id): Path<String>) -> Response {
    match store.aggregate(&id) {
        Ok(v) => Json(v).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn progress(State(store): State<Shared>, Path(id): Path<String>) -> Response {
    match store.progress(&id) {
        Ok(v) => Json(v).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn sessions(State(store): State<Shared>) -> Response {
    Json(store.session_ids()).into_response()
}

/// API routes, plus the UI bundle from `ui_dir` for every other path.
pub fn router(store: Shared, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/sessions", get(sessions))
        .route("/sessions/{id}/queue", get(queue))
        .route("/sessions/{id}/scores", post(submit))
        .route("/sessions/{id}/aggregate", get(aggregate))
        .route("/sessions/{id}/progress", get(progress))
        .with_state(store);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until the process is stopped.
pub async fn serve(store: Shared, addr: SocketAddr, ui_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(store, ui_dir)).await
}
