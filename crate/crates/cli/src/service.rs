//! HTTP ask-service.
//!
//! - `GET /health` returns `{"status":"ok"}`.
//! - `POST /ask` takes `{"question": "...", "k": 3}` (`k` optional) and
//!   returns the same `{answer, context, prompt}` object `xar ask` prints.
//!
//! Malformed requests get 400, an empty knowledge base 409, and backend
//! failures 502. Requests share the store behind a reader-writer lock.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::RwLock;
use xar_core::rag;
use xar_core::vector_store::VectorStore;

use crate::config::AppConfig;
use crate::error::AppError;
use crate::pipeline::Backends;

pub struct AppState {
    pub store: RwLock<VectorStore>,
    pub config: AppConfig,
    pub backends: Backends,
}

pub type SharedState = Arc<AppState>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AskRequest {
    question: String,
    #[serde(default)]
    k: Option<usize>,
}

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/ask", post(ask))
        .with_state(state)
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

fn error_response(status: StatusCode, message: impl std::fmt::Display) -> Response {
    (status, Json(json!({"error": message.to_string()}))).into_response()
}

async fn ask(State(state): State<SharedState>, body: Bytes) -> Response {
    let req: AskRequest = match serde_json::from_slice(&body) {
        Ok(req) => req,
        Err(e) => return error_response(StatusCode::BAD_REQUEST, e),
    };
    if req.question.trim().is_empty() {
        return error_response(StatusCode::BAD_REQUEST, "question must not be empty");
    }
    let mut rag_cfg = state.config.rag.clone();
    if let Some(k) = req.k {
        if k == 0 {
            return error_response(StatusCode::BAD_REQUEST, "k must be at least 1");
        }
        rag_cfg.k = k;
    }

    let store = state.store.read().await;
    if store.is_empty() {
        return error_response(StatusCode::CONFLICT, AppError::EmptyStore);
    }
    let result = rag::answer(
        &req.question,
        &store,
        &rag_cfg,
        &state.backends.embedder,
        &state.backends.llm,
    )
    .await;
    drop(store);

    match result.map_err(AppError::from) {
        Ok(explanation) => Json(explanation).into_response(),
        Err(AppError::EmptyStore) => error_response(StatusCode::CONFLICT, AppError::EmptyStore),
        Err(e @ AppError::Backend(_)) => error_response(StatusCode::BAD_GATEWAY, e),
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

pub async fn bind(port: u16) -> Result<TcpListener, AppError> {
    let addr = format!("0.0.0.0:{port}");
    TcpListener::bind(&addr)
        .await
        .map_err(|source| AppError::Bind { addr, source })
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    listener: TcpListener,
    state: SharedState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), AppError> {
    let addr = listener
        .local_addr()
        .map(|a| a.to_string())
        .unwrap_or_default();
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|source| AppError::Bind { addr, source })
}
