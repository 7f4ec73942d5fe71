//! Axum routes over [`SurveyService`].
//!
//! Operator routes take `Authorization: Bearer <token>`; session routes take
//! the token returned at enrollment in `x-session-token`.

use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::model::*;
use crate::service::{ServiceError, SurveyService};

pub const SESSION_TOKEN_HEADER: &str = "x-session-token";

type Shared = Arc<SurveyService>;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            Self::Unauthorized | Self::InvalidSessionToken => StatusCode::UNAUTHORIZED,
            Self::UnknownSurvey(_) | Self::UnknownSession(_) | Self::UnknownSubmission { .. } => StatusCode::NOT_FOUND,
            Self::SurveyExists(_)
            | Self::AlreadyEnrolled { .. }
            | Self::PoolExhausted { .. }
            | Self::SessionComplete
            | Self::OutOfOrder { .. } => StatusCode::CONFLICT,
            Self::SessionExpired(_) => StatusCode::GONE,
            Self::InvalidDefinition(_) | Self::ValidationFailed { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            Self::Storage(_) | Self::Replay(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("{self}");
        }
        let field = match &self {
            Self::ValidationFailed { field, .. } => Some(field.clone()),
            _ => None,
        };
        (status, Json(json!({"error": self.code(), "message": self.to_string(), "field": field}))).into_response()
    }
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers.get("authorization")?.to_str().ok()?.strip_prefix("Bearer ")
}

fn session_token(headers: &HeaderMap) -> Option<&str> {
    headers.get(SESSION_TOKEN_HEADER)?.to_str().ok()
}

async fn create_survey(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Json(req): Json<CreateSurveyRequest>,
) -> Result<(StatusCode, Json<SurveyCreated>), ServiceError> {
    svc.check_operator(bearer(&headers))?;
    Ok((StatusCode::CREATED, Json(svc.create_survey(req)?)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionProgress {
    pub session_id: String,
    pub annotator_id: String,
    pub completed: usize,
    pub total: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SurveyStatus {
    pub definition: SurveyDefinition,
    pub sessions: Vec<SessionProgress>,
}

async fn survey_status(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Json<SurveyStatus>, ServiceError> {
    svc.check_operator(bearer(&headers))?;
    let sessions = svc
        .progress(&id)?
        .into_iter()
        .map(|(session_id, annotator_id, completed, total)| SessionProgress {
            session_id,
            annotator_id,
            completed,
            total,
        })
        .collect();
    Ok(Json(SurveyStatus { definition: svc.survey(&id)?, sessions }))
}

async fn create_session(
    State(svc): State<Shared>,
    Json(req): Json<CreateSessionRequest>,
) -> Result<(StatusCode, Json<SessionCreated>), ServiceError> {
    Ok((StatusCode::CREATED, Json(svc.create_session(req)?)))
}

async fn next_task(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Json<TaskPayload>, ServiceError> {
    Ok(Json(svc.next_task(&id, session_token(&headers))?))
}

async fn submit(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Json(req): Json<SubmissionRequest>,
) -> Result<Json<SubmitAck>, ServiceError> {
    Ok(Json(svc.submit(&id, session_token(&headers), req)?))
}

#[derive(Debug, Default, Deserialize)]
struct ExportQuery {
    #[serde(default)]
    include_flagged: bool,
}

async fn export(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Query(q): Query<ExportQuery>,
) -> Result<Json<SurveyExport>, ServiceError> {
    svc.check_operator(bearer(&headers))?;
    Ok(Json(svc.export(&id, q.include_flagged)?))
}

async fn flags(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Json<Vec<FlaggedSubmission>>, ServiceError> {
    svc.check_operator(bearer(&headers))?;
    Ok(Json(svc.flagged(&id)?))
}

async fn audit(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Json(req): Json<AuditRequest>,
) -> Result<Json<AuditEntry>, ServiceError> {
    svc.check_operator(bearer(&headers))?;
    Ok(Json(svc.record_audit(&id, req)?))
}

pub fn router(service: Shared) -> Router {
    Router::new()
        .route("/surveys", post(create_survey))
        .route("/surveys/{id}", get(survey_status))
        .route("/surveys/{id}/export", get(export))
        .route("/surveys/{id}/flags", get(flags))
        .route("/surveys/{id}/audit", post(audit))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/task", get(next_task))
        .route("/sessions/{id}/submissions", post(submit))
        .with_state(service)
}

/// Serves the API on `listener` until the future is dropped or fails.
pub async fn serve(listener: tokio::net::TcpListener, service: Shared) -> std::io::Result<()> {
    axum::serve(listener, router(service)).await
}

/// Like [`serve`], but returns once `shutdown` resolves and in-flight
/// requests have finished.
pub async fn serve_until<F>(listener: tokio::net::TcpListener, service: Shared, shutdown: F) -> std::io::Result<()>
where
    F: std::future::Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(service)).with_graceful_shutdown(shutdown).await
}
