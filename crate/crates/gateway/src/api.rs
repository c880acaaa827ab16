use std::convert::Infallible;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use henry_core::acl::UserAttributes;
use henry_core::code::ErrorCode;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;

use crate::error::ApiError;
use crate::sessions::Gateway;

type Shared = State<Arc<Gateway>>;

pub fn router(gateway: Arc<Gateway>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/integrations", post(post_integration))
        .route("/sessions/{id}/trace", get(get_trace))
        .route("/sessions/{id}/agora/{agora_id}", get(get_agora))
        .route("/sessions/{id}/events", get(events))
        .with_state(gateway)
}

/// Parses a JSON body; any failure becomes `code`. An empty body reads as `{}`.
fn body<T: DeserializeOwned>(bytes: &Bytes, code: ErrorCode) -> Result<T, ApiError> {
    let bytes: &[u8] = if bytes.iter().all(u8::is_ascii_whitespace) { b"{}" } else { bytes };
    serde_json::from_slice(bytes).map_err(|e| ApiError {
        code,
        message: e.to_string(),
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    #[serde(default)]
    attributes: UserAttributes,
}

async fn create_session(State(gw): Shared, bytes: Bytes) -> Result<impl IntoResponse, ApiError> {
    let req: CreateSession = body(&bytes, ErrorCode::BadAttributes)?;
    let handle = gw.create_session(req.attributes)?;
    Ok((StatusCode::CREATED, Json(handle)))
}

async fn get_session(State(gw): Shared, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(gw.handle(&id)?))
}

#[derive(Deserialize)]
struct PostMessage {
    #[serde(default)]
    text: String,
}

async fn post_message(State(gw): Shared, Path(id): Path<String>, bytes: Bytes) -> Result<impl IntoResponse, ApiError> {
    gw.handle(&id)?;
    let req: PostMessage = body(&bytes, ErrorCode::EmptyMessage)?;
    let request_id = gw.post_message(&id, &req.text)?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "request_id": request_id }))))
}

#[derive(Deserialize)]
struct PostIntegration {
    #[serde(default)]
    request_id: String,
    #[serde(default)]
    text: String,
}

async fn post_integration(State(gw): Shared, Path(id): Path<String>, bytes: Bytes) -> Result<impl IntoResponse, ApiError> {
    gw.handle(&id)?;
    let req: PostIntegration = body(&bytes, ErrorCode::NoOutstandingIntegration)?;
    if req.text.trim().is_empty() {
        return Err(ApiError::new(ErrorCode::EmptyMessage));
    }
    gw.post_integration(&id, &req.request_id, &req.text)?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "accepted": true }))))
}

#[derive(Deserialize)]
struct TraceQuery {
    request: Option<String>,
}

async fn get_trace(
    State(gw): Shared,
    Path(id): Path<String>,
    Query(q): Query<TraceQuery>,
) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(gw.trace(&id, q.request.as_deref())?))
}

async fn get_agora(State(gw): Shared, Path((id, agora_id)): Path<(String, String)>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(gw.agora(&id, &agora_id)?))
}

/// Server-sent events: every event the session has emitted, then live ones.
/// Each frame's id is its position, so `Last-Event-ID` resumes after it.
async fn events(
    State(gw): Shared,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let (slot, rx) = gw.subscribe(&id)?;
    let start = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse::<usize>().ok())
        .map_or(0, |last| last + 1);
    let batches = stream::unfold((slot, rx, start, true), |(slot, mut rx, cursor, first)| async move {
        if !first && rx.changed().await.is_err() {
            return None;
        }
        rx.borrow_and_update();
        let fresh = Gateway::events_since(&slot, cursor);
        let frames: Vec<Event> = fresh
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let kind = serde_json::to_value(e.kind).ok().and_then(|v| v.as_str().map(str::to_owned));
                Event::default()
                    .id((cursor + i).to_string())
                    .event(kind.unwrap_or_default())
                    .json_data(e)
                    .expect("events serialize")
            })
            .collect();
        Some((frames, (slot, rx, cursor + fresh.len(), false)))
    });
    let frames = batches.flat_map(|batch| stream::iter(batch.into_iter().map(Ok)));
    Ok(Sse::new(frames).keep_alive(KeepAlive::default()))
}
