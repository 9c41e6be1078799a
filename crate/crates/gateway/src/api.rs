//! REST and SSE surface, version 1.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/v1/sessions` | `{"language": "en"}`, 201 with the session |
//! | GET | `/v1/sessions/{id}` | last settled session plus `live_state` |
//! | POST | `/v1/sessions/{id}/events` | an [`Event`] with optional `client_event_id` |
//! | GET | `/v1/sessions/{id}/menus` | the three offer lists |
//! | GET | `/v1/sessions/{id}/stream` | `state` events as they are entered |
//! | GET | `/v1/assets/{id}?format=binary\|obj` | mesh bytes |
//! | GET | `/v1/metrics/report` | aggregate report over all sessions |
//!
//! Errors are `{"error": {"code": ..., "message": ...}}`.

use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use meshforge::mesh::{read_mesh, write_mesh, MeshFormat};
use meshforge::pipeline::{report_metrics, Event, Pipeline, PipelineError, Session};
use meshforge::repo::RepoError;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::broadcast;
use tower_http::services::ServeDir;

use crate::store::{Reply, SessionStore};

pub struct AppState {
    pub pipeline: Arc<Pipeline>,
    pub sessions: SessionStore,
    pub token: Option<String>,
}

impl AppState {
    pub fn new(pipeline: Pipeline, token: Option<String>) -> Arc<Self> {
        Arc::new(Self {
            pipeline: Arc::new(pipeline),
            sessions: SessionStore::default(),
            token,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn body(&self) -> Value {
        json!({"error": {"code": self.code, "message": self.message}})
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body())).into_response()
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let status = match e {
            PipelineError::IllegalTransition { .. } => StatusCode::CONFLICT,
            PipelineError::UnknownSelection(_) => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

fn session_not_found(id: &str) -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "session_not_found", format!("no session {id}"))
}

fn invalid_request(message: impl Into<String>) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", message)
}

fn session_json(s: &Session) -> Value {
    serde_json::to_value(s).expect("session serializes")
}

/// All routes; `console_dir`, when given, is served for everything outside `/v1`.
pub fn router(state: Arc<AppState>, console_dir: Option<&std::path::Path>) -> Router {
    let api = Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/events", post(post_event))
        .route("/v1/sessions/{id}/menus", get(get_menus))
        .route("/v1/sessions/{id}/stream", get(stream))
        .route("/v1/assets/{id}", get(get_asset))
        .route("/v1/metrics/report", get(get_report))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state);
    match console_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") }),
    }
}

async fn require_token(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    let Some(expected) = &state.token else {
        return next.run(req).await;
    };
    let bearer = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    // EventSource cannot set headers, so the stream also takes `?access_token=`.
    let query = req.uri().query().unwrap_or("").split('&').find_map(|kv| kv.strip_prefix("access_token="));
    if bearer == Some(expected.as_str()) || query == Some(expected.as_str()) {
        next.run(req).await
    } else {
        ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token").into_response()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    #[serde(default = "english")]
    language: String,
}

fn english() -> String {
    "en".into()
}

fn valid_language(tag: &str) -> bool {
    !tag.is_empty()
        && tag.len() <= 35
        && tag.split('-').all(|part| !part.is_empty() && part.len() <= 8 && part.bytes().all(|b| b.is_ascii_alphanumeric()))
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateSession = if body.iter().all(u8::is_ascii_whitespace) {
        CreateSession { language: english() }
    } else {
        serde_json::from_slice(&body).map_err(|e| invalid_request(e.to_string()))?
    };
    if !valid_language(&req.language) {
        return Err(invalid_request(format!("{:?} is not a language tag", req.language)));
    }
    let slot = state.sessions.create(&req.language);
    Ok((StatusCode::CREATED, Json(session_json(&slot.snapshot()))).into_response())
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let slot = state.sessions.get(&id).ok_or_else(|| session_not_found(&id))?;
    let mut body = session_json(&slot.snapshot());
    body["live_state"] = json!(slot.live_state());
    Ok(Json(body))
}

#[derive(Deserialize)]
struct EventRequest {
    #[serde(default)]
    client_event_id: Option<String>,
    #[serde(flatten)]
    event: Event,
}

async fn post_event(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let slot = state.sessions.get(&id).ok_or_else(|| session_not_found(&id))?;
    let req: EventRequest = serde_json::from_slice(&body).map_err(|e| invalid_request(e.to_string()))?;
    // Detached so a dropped connection cannot abort a generation half way.
    let task = tokio::spawn({
        let state = state.clone();
        async move {
            let _guard = state.sessions.begin();
            let mut work = slot.work.lock().await;
            if let Some(key) = &req.client_event_id {
                if let Some(reply) = work.replies.get(key) {
                    return reply.clone();
                }
            }
            let reply = match state.pipeline.handle(&mut work.session, req.event).await {
                Ok(()) => Reply {
                    status: 200,
                    body: session_json(&work.session),
                },
                Err(e) => {
                    let e = ApiError::from(e);
                    Reply {
                        status: e.status.as_u16(),
                        body: e.body(),
                    }
                }
            };
            slot.publish(&work.session);
            if let Some(key) = req.client_event_id {
                work.replies.insert(key, reply.clone());
            }
            reply
        }
    });
    let reply = task
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    let status = StatusCode::from_u16(reply.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    Ok((status, Json(reply.body)).into_response())
}

async fn get_menus(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let slot = state.sessions.get(&id).ok_or_else(|| session_not_found(&id))?;
    let s = slot.snapshot();
    let menus = s
        .menus
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "menus_not_ready", format!("no menus in state {}", s.state)))?;
    Ok(Json(serde_json::to_value(menus).expect("menus serialize")))
}

async fn stream(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Sse<impl Stream<Item = Result<SseEvent, Infallible>>>, ApiError> {
    let slot = state.sessions.get(&id).ok_or_else(|| session_not_found(&id))?;
    let rx = slot.subscribe();
    let first = state_event(&slot.id, slot.live_state());
    let session_id = slot.id.clone();
    let rest = stream::unfold(rx, move |mut rx| {
        let session_id = session_id.clone();
        async move {
            loop {
                match rx.recv().await {
                    Ok(s) => return Some((state_event(&session_id, s), rx)),
                    Err(broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(broadcast::error::RecvError::Closed) => return None,
                }
            }
        }
    });
    let events = stream::once(async move { first }).chain(rest).map(Ok);
    Ok(Sse::new(events).keep_alive(KeepAlive::new().interval(Duration::from_secs(15))))
}

fn state_event(session_id: &str, state: meshforge::pipeline::SessionState) -> SseEvent {
    SseEvent::default()
        .event("state")
        .data(json!({"session_id": session_id, "state": state}).to_string())
}

#[derive(Deserialize)]
struct AssetQuery {
    format: Option<String>,
}

async fn get_asset(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<AssetQuery>,
) -> Result<Response, ApiError> {
    let format = match q.format.as_deref() {
        None | Some("binary") => MeshFormat::Binary,
        Some("obj") => MeshFormat::Obj,
        Some(other) => {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "invalid_format", format!("unknown format {other:?}; use binary or obj")))
        }
    };
    let repo = state.pipeline.repo();
    let record = repo
        .get(&id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "asset_not_found", format!("no asset {id}")))?;
    let storage = |e: RepoError| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_error", e.to_string());
    let bytes = repo.blob_bytes(&record.mesh_ref).map_err(storage)?;
    let (bytes, content_type) = match format {
        MeshFormat::Binary => (bytes, "application/octet-stream"),
        MeshFormat::Obj => {
            let mesh = read_mesh(&bytes, MeshFormat::Binary).map_err(|e| storage(e.into()))?;
            (write_mesh(&mesh, MeshFormat::Obj), "model/obj")
        }
    };
    let mut headers = HeaderMap::new();
    headers.insert(header::CONTENT_TYPE, content_type.parse().expect("static header"));
    Ok((headers, bytes).into_response())
}

async fn get_report(State(state): State<Arc<AppState>>) -> Json<Value> {
    let report = report_metrics(&state.sessions.snapshots());
    Json(serde_json::to_value(report).expect("report serializes"))
}
