//! HTTP/JSON routes over [`SessionStore`].

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use super::{CreateSessionRequest, OutcomeRequest, ProposeRequest, SessionStore};
use crate::error::Error;

/// Error body: a stable machine code, a human message and optional detail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub detail: Option<String>,
}

/// An error on its way to becoming a response.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>, detail: Option<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message: message.into(),
                detail,
            },
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match &e {
            Error::NotFound { .. } => ApiError::new(StatusCode::NOT_FOUND, "not_found", msg, None),
            Error::Conflict(_) => ApiError::new(StatusCode::CONFLICT, "conflict", msg, None),
            Error::Validation(_) | Error::Config(_) | Error::Core(_) => ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "validation_error",
                msg,
                None,
            ),
            Error::Json(_) => ApiError::new(StatusCode::BAD_REQUEST, "bad_request", msg, None),
            Error::Io { .. } | Error::CorruptLog { .. } | Error::Csv(_) | Error::Dataset { .. } => {
                ApiError::new(
                    StatusCode::INTERNAL_SERVER_ERROR,
                    "storage_error",
                    "session storage failed",
                    Some(msg),
                )
            }
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "bad_request",
            "request body is not valid JSON for this endpoint",
            Some(r.body_text()),
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// The service router; all handlers share `store`.
pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/proposals", post(propose))
        .route("/sessions/{id}/proposals/{pid}/outcome", post(record_outcome))
        .route("/sessions/{id}/proposals/{pid}/skip", post(skip))
        .route("/sessions/{id}/history", get(history))
        .fallback(|| async {
            ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route", None)
        })
        .with_state(store)
}

async fn create_session(
    State(store): State<Arc<SessionStore>>,
    body: Option<Json<CreateSessionRequest>>,
) -> Result<(StatusCode, Json<super::SessionSummary>), ApiError> {
    let req = body.map(|Json(r)| r).unwrap_or_default();
    let s = store.create(&req).await?;
    Ok((StatusCode::CREATED, Json(s)))
}

async fn get_session(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
) -> ApiResult<super::SessionSummary> {
    Ok(Json(store.summary(&id).await?))
}

async fn propose(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
    body: Result<Json<ProposeRequest>, JsonRejection>,
) -> ApiResult<super::ProposalResponse> {
    let Json(req) = body?;
    Ok(Json(store.propose(&id, &req).await?))
}

async fn record_outcome(
    State(store): State<Arc<SessionStore>>,
    Path((id, pid)): Path<(String, String)>,
    body: Result<Json<OutcomeRequest>, JsonRejection>,
) -> ApiResult<super::OutcomeResponse> {
    let Json(req) = body?;
    Ok(Json(store.record_outcome(&id, &pid, &req).await?))
}

async fn skip(
    State(store): State<Arc<SessionStore>>,
    Path((id, pid)): Path<(String, String)>,
) -> ApiResult<super::SkipResponse> {
    Ok(Json(store.skip(&id, &pid).await?))
}

async fn history(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
) -> ApiResult<super::HistoryResponse> {
    Ok(Json(store.history(&id).await?))
}

/// Serves `router(store)` on `addr` until Ctrl-C.
pub async fn serve(store: Arc<SessionStore>, addr: std::net::SocketAddr) -> crate::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|source| Error::Io {
        path: addr.to_string().into(),
        source,
    })?;
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|source| Error::Io {
            path: addr.to_string().into(),
            source,
        })
}
