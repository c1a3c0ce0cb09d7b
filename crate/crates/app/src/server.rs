//! HTTP scoring service: `POST /v1/score` and `GET /health`.
//!
//! The model, config and backends are immutable shared state. Each request
//! runs extraction on the blocking pool; requests beyond the in-flight cap
//! are rejected with 429 instead of queueing.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pcib_core::signals::SignalExtractor;
use pcib_core::QcaTriple;
use serde::Serialize;
use serde_json::{json, Value};
use tokio::sync::Semaphore;

use crate::backend::Backends;
use crate::scoring::Scorer;

pub struct ServiceState {
    pub extractor: SignalExtractor,
    pub backends: Backends,
    pub scorer: Scorer,
    pub threshold: f64,
    slots: Arc<Semaphore>,
}

impl ServiceState {
    pub fn new(extractor: SignalExtractor, backends: Backends, scorer: Scorer, threshold: f64, max_in_flight: usize) -> Self {
        Self { extractor, backends, scorer, threshold, slots: Arc::new(Semaphore::new(max_in_flight)) }
    }
}

#[derive(Debug, Serialize)]
struct FieldError {
    field: &'static str,
    message: String,
}

fn error(status: StatusCode, body: Value) -> Response {
    (status, Json(body)).into_response()
}

/// Field-level validation of a score request body; errors are 400 bodies.
fn parse_request(body: &[u8]) -> Result<QcaTriple, Value> {
    let value: Value = serde_json::from_slice(body)
        .map_err(|e| json!({"error": format!("malformed JSON body: {e}")}))?;
    let Some(obj) = value.as_object() else {
        return Err(json!({"error": "body must be a JSON object"}));
    };
    let mut errors = Vec::new();
    let mut text = |field: &'static str, allow_empty: bool| -> String {
        match obj.get(field) {
            None | Some(Value::Null) => {
                errors.push(FieldError { field, message: "missing".into() });
                String::new()
            }
            Some(Value::String(s)) if !allow_empty && s.trim().is_empty() => {
                errors.push(FieldError { field, message: "must not be empty".into() });
                String::new()
            }
            Some(Value::String(s)) => s.clone(),
            Some(_) => {
                errors.push(FieldError { field, message: "must be a string".into() });
                String::new()
            }
        }
    };
    let question = text("question", false);
    let context = text("context", true);
    let answer = text("answer", false);
    if !errors.is_empty() {
        return Err(json!({"error": "invalid request", "fields": errors}));
    }
    Ok(QcaTriple { id: "request".into(), question, context, answer })
}

async fn score(State(state): State<Arc<ServiceState>>, body: Bytes) -> Response {
    let triple = match parse_request(&body) {
        Ok(t) => t,
        Err(body) => return error(StatusCode::BAD_REQUEST, body),
    };
    let Ok(permit) = state.slots.clone().try_acquire_owned() else {
        return error(StatusCode::TOO_MANY_REQUESTS, json!({"error": "too many requests in flight"}));
    };
    let worker = state.clone();
    let outcome = tokio::task::spawn_blocking(move || {
        let _permit = permit;
        let v = worker
            .extractor
            .extract(&triple, worker.backends.llm.as_ref(), worker.backends.nli.as_ref());
        v.map(|v| worker.scorer.respond(v, worker.threshold))
    })
    .await;
    match outcome {
        Ok(Ok(Ok(resp))) => (StatusCode::OK, Json(resp)).into_response(),
        Ok(Ok(Err(msg))) => error(StatusCode::INTERNAL_SERVER_ERROR, json!({"error": msg})),
        Ok(Err(e)) if e.backend_error().is_some() => {
            error(StatusCode::BAD_GATEWAY, json!({"error": "backend failure", "detail": e.to_string()}))
        }
        Ok(Err(e)) => error(StatusCode::UNPROCESSABLE_ENTITY, json!({"error": e.to_string()})),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, json!({"error": format!("worker failed: {e}")})),
    }
}

async fn health(State(state): State<Arc<ServiceState>>) -> Response {
    Json(json!({"status": "ok", "model": state.scorer.info()})).into_response()
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/v1/score", post(score))
        .route("/health", get(health))
        .with_state(state)
}

/// Serves until the listener fails or ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<ServiceState>) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
