//! REST and push endpoints.
//!
//! | method | path                     | body                | response          |
//! |--------|--------------------------|---------------------|-------------------|
//! | POST   | `/sessions`              | `CreateRequest`     | `SessionState`    |
//! | POST   | `/sessions/{id}/captures`| `CaptureRequest`    | `SessionState`    |
//! | POST   | `/sessions/{id}/suggest` | `SuggestRequest`    | `Suggestion`      |
//! | GET    | `/sessions/{id}`         |                     | `SessionState`    |
//! | GET    | `/sessions/{id}/events`  |                     | event stream      |
//!
//! The events endpoint speaks server-sent events when the client accepts
//! `text/event-stream` (resuming after `Last-Event-ID` or `?after=`), and
//! otherwise long-polls: it answers with the JSON array of envelopes after
//! `after`, waiting up to `timeout_ms` for the first one.

use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use tokio::sync::broadcast;

use crate::error::ServiceError;
use crate::session::Envelope;
use crate::store::Store;

const DEFAULT_POLL_MS: u64 = 25_000;
const MAX_POLL_MS: u64 = 60_000;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::SessionNotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::InvalidRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Engine(
                calibguide::Error::InvalidConfig(_) | calibguide::Error::InvalidModel(_),
            ) => StatusCode::BAD_REQUEST,
            ServiceError::Engine(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Storage(_) | ServiceError::CorruptLog(_) | ServiceError::Internal(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        (status, Json(self.body())).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ServiceError>;

/// JSON body that reports parse failures in the service's error format.
/// An empty body reads as `{}`.
fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ServiceError> {
    let text: &[u8] = if body.iter().all(u8::is_ascii_whitespace) {
        b"{}"
    } else {
        body
    };
    serde_json::from_slice(text).map_err(|e| ServiceError::InvalidRequest(e.to_string()))
}

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(state))
        .route("/sessions/{id}/captures", post(capture))
        .route("/sessions/{id}/suggest", post(suggest))
        .route("/sessions/{id}/events", get(events))
        .with_state(store)
}

async fn create(
    State(store): State<Arc<Store>>,
    body: Bytes,
) -> Result<(StatusCode, Json<crate::SessionState>), ServiceError> {
    let state = store.create(parse(&body)?).await?;
    Ok((StatusCode::CREATED, Json(state)))
}

async fn state(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
) -> ApiResult<crate::SessionState> {
    Ok(Json(store.state(&id).await?))
}

async fn capture(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<crate::SessionState> {
    Ok(Json(store.capture(&id, parse(&body)?).await?))
}

async fn suggest(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<crate::Suggestion> {
    Ok(Json(store.suggest(&id, parse(&body)?).await?))
}

#[derive(Debug, Default, Deserialize)]
struct EventsQuery {
    /// Only envelopes with a larger sequence number.
    after: Option<usize>,
    timeout_ms: Option<u64>,
}

async fn events(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> Result<Response, ServiceError> {
    let wants_sse = headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.contains("text/event-stream"));
    let last_id = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<usize>().ok());
    let from = last_id.or(q.after).map_or(0, |a| a + 1);
    let (backlog, mut rx) = store.subscribe(&id, from).await?;

    if wants_sse {
        return Ok(Sse::new(sse_stream(backlog, rx, from))
            .keep_alive(KeepAlive::default())
            .into_response());
    }
    if !backlog.is_empty() {
        return Ok(Json(backlog).into_response());
    }
    let wait = Duration::from_millis(q.timeout_ms.unwrap_or(DEFAULT_POLL_MS).min(MAX_POLL_MS));
    let mut out = Vec::new();
    let _ = tokio::time::timeout(wait, async {
        while let Ok(env) = rx.recv().await {
            if env.seq >= from {
                out.push(env);
                break;
            }
        }
    })
    .await;
    Ok(Json(out).into_response())
}

fn to_sse(env: &Envelope) -> SseEvent {
    let kind = match env.event {
        crate::Event::Created { .. } => "created",
        crate::Event::Captured { .. } => "captured",
        crate::Event::Suggested { .. } => "suggested",
    };
    SseEvent::default()
        .id(env.seq.to_string())
        .event(kind)
        .json_data(env)
        .expect("envelope serializes")
}

fn sse_stream(
    backlog: Vec<Envelope>,
    rx: broadcast::Receiver<Envelope>,
    from: usize,
) -> impl Stream<Item = Result<SseEvent, Infallible>> {
    let next = backlog.last().map_or(from, |e| e.seq + 1);
    let live = stream::unfold((rx, next), |(mut rx, next)| async move {
        loop {
            match rx.recv().await {
                Ok(env) if env.seq < next => continue,
                Ok(env) => {
                    let seq = env.seq;
                    return Some((env, (rx, seq + 1)));
                }
                // A lagging client reconnects with Last-Event-ID.
                Err(_) => return None,
            }
        }
    });
    stream::iter(backlog)
        .chain(live)
        .map(|env| Ok(to_sse(&env)))
}

/// Environment-driven settings of [`serve`].
#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub data_dir: std::path::PathBuf,
    pub port: u16,
}

impl ServeConfig {
    /// `CALIBGUIDE_DATA_DIR` (default `./calibguide-data`) and
    /// `CALIBGUIDE_PORT` (default 8080).
    pub fn from_env() -> Result<Self, ServiceError> {
        let data_dir = std::env::var_os("CALIBGUIDE_DATA_DIR")
            .map_or_else(|| "calibguide-data".into(), Into::into);
        let port = match std::env::var("CALIBGUIDE_PORT") {
            Ok(p) => p.parse().map_err(|_| {
                ServiceError::InvalidRequest(format!("CALIBGUIDE_PORT is not a port: '{p}'"))
            })?,
            Err(_) => 8080,
        };
        Ok(Self { data_dir, port })
    }
}

pub async fn serve(cfg: ServeConfig) -> Result<(), ServiceError> {
    let store = Arc::new(Store::open(&cfg.data_dir)?);
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", cfg.port)).await?;
    axum::serve(listener, router(store)).await?;
    Ok(())
}
