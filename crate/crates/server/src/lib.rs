//! HTTP+JSON facade over the workflow engine.
//!
//! Every mutating endpoint maps to exactly one workflow operation. Errors
//! use the envelope in [`error::ErrorBody`]. Mutations carrying an
//! `x-request-id` header are executed once; replays return the stored
//! response. All endpoints except `/healthz` require a bearer token when
//! one is configured: either the shared token or a session token issued by
//! `POST /sessions`.

pub mod error;
mod routes;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex};

use axum::body::{to_bytes, Body};
use axum::extract::{Request, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode};
use axum::middleware::{from_fn_with_state, Next};
use axum::response::{IntoResponse, Response};
use axum::Router;
use chrono::{DateTime, Duration, Utc};
use medos_core::store::RecordStore;
use medos_core::workflow::Workflow;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::net::TcpListener;

pub use error::{ApiError, ErrorBody};

pub const REQUEST_ID_HEADER: &str = "x-request-id";
pub const REPLAY_HEADER: &str = "x-idempotent-replay";
pub const TOKEN_ENV: &str = "MEDOS_API_TOKEN";

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("port already in use: {0}")]
    PortInUse(SocketAddr),
    #[error("store unavailable: {0}")]
    StoreUnavailable(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Settings {
    /// Shared bearer token; `None` disables authentication.
    pub token: Option<String>,
    /// Referral, report and discharge transitions require `approved_by`.
    pub attended: bool,
    pub session_ttl_minutes: i64,
    /// "offline" or "online".
    pub mode: String,
    pub chat_backend: String,
    pub embed_model: String,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            token: None,
            attended: false,
            session_ttl_minutes: 12 * 60,
            mode: "offline".into(),
            chat_backend: String::new(),
            embed_model: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionToken {
    pub id: String,
    pub created_at: DateTime<Utc>,
    pub expires_at: DateTime<Utc>,
}

struct Stored {
    fingerprint: String,
    status: StatusCode,
    content_type: Option<HeaderValue>,
    body: axum::body::Bytes,
}

type ReplaySlot = Arc<tokio::sync::Mutex<Option<Stored>>>;

struct Inner {
    workflow: Arc<Workflow>,
    settings: Settings,
    sessions: Mutex<HashMap<String, SessionToken>>,
    replays: Mutex<HashMap<String, ReplaySlot>>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(workflow: Arc<Workflow>, settings: Settings) -> Self {
        Self(Arc::new(Inner {
            workflow,
            settings,
            sessions: Mutex::default(),
            replays: Mutex::default(),
        }))
    }

    pub fn workflow(&self) -> &Arc<Workflow> {
        &self.0.workflow
    }

    pub fn settings(&self) -> &Settings {
        &self.0.settings
    }

    pub fn issue_session(&self) -> SessionToken {
        let now = Utc::now();
        let token = SessionToken {
            id: uuid::Uuid::new_v4().simple().to_string(),
            created_at: now,
            expires_at: now + Duration::minutes(self.0.settings.session_ttl_minutes),
        };
        self.0.sessions.lock().unwrap().insert(token.id.clone(), token.clone());
        token
    }

    fn authorized(&self, headers: &HeaderMap) -> bool {
        let Some(shared) = &self.0.settings.token else { return true };
        let Some(presented) = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
        else {
            return false;
        };
        if presented == shared {
            return true;
        }
        let mut sessions = self.0.sessions.lock().unwrap();
        let now = Utc::now();
        sessions.retain(|_, s| s.expires_at > now);
        sessions.contains_key(presented)
    }

    fn replay_slot(&self, id: &str) -> ReplaySlot {
        self.0.replays.lock().unwrap().entry(id.to_string()).or_default().clone()
    }
}

async fn auth(State(app): State<AppState>, req: Request, next: Next) -> Response {
    if app.authorized(req.headers()) {
        next.run(req).await
    } else {
        ApiError::new(StatusCode::UNAUTHORIZED, "Unauthorized", "missing, invalid or expired bearer token")
            .into_response()
    }
}

async fn idempotency(State(app): State<AppState>, req: Request, next: Next) -> Response {
    if matches!(*req.method(), Method::GET | Method::HEAD) {
        return next.run(req).await;
    }
    let Some(id) = req
        .headers()
        .get(REQUEST_ID_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(str::to_string)
    else {
        return next.run(req).await;
    };
    let fingerprint = format!("{} {}", req.method(), req.uri().path());
    let slot = app.replay_slot(&id);
    let mut stored = slot.lock().await;
    if let Some(s) = stored.as_ref() {
        if s.fingerprint != fingerprint {
            return ApiError::new(StatusCode::CONFLICT, "RequestIdReused", "request id was used for another request")
                .with_detail(serde_json::json!({ "request_id": id, "original": s.fingerprint }))
                .into_response();
        }
        let mut resp = Response::new(Body::from(s.body.clone()));
        *resp.status_mut() = s.status;
        if let Some(ct) = &s.content_type {
            resp.headers_mut().insert(header::CONTENT_TYPE, ct.clone());
        }
        resp.headers_mut().insert(REPLAY_HEADER, HeaderValue::from_static("true"));
        return resp;
    }
    let resp = next.run(req).await;
    let (parts, body) = resp.into_parts();
    let bytes = match to_bytes(body, usize::MAX).await {
        Ok(b) => b,
        Err(e) => return ApiError::internal(e.to_string()).into_response(),
    };
    // Server-side failures may be transient; let the client retry them.
    if !parts.status.is_server_error() {
        *stored = Some(Stored {
            fingerprint,
            status: parts.status,
            content_type: parts.headers.get(header::CONTENT_TYPE).cloned(),
            body: bytes.clone(),
        });
    }
    Response::from_parts(parts, Body::from(bytes))
}

pub fn router(state: AppState) -> Router {
    let protected = routes::protected()
        .layer(from_fn_with_state(state.clone(), idempotency))
        .layer(from_fn_with_state(state.clone(), auth));
    routes::public().merge(protected).with_state(state)
}

pub fn open_store(root: &Path) -> Result<RecordStore, ServeError> {
    RecordStore::open(root).map_err(|e| ServeError::StoreUnavailable(format!("{}: {e}", root.display())))
}

pub async fn bind(addr: SocketAddr) -> Result<TcpListener, ServeError> {
    TcpListener::bind(addr).await.map_err(|e| match e.kind() {
        std::io::ErrorKind::AddrInUse => ServeError::PortInUse(addr),
        _ => ServeError::Io(e),
    })
}

/// Serves until Ctrl-C.
pub async fn serve(listener: TcpListener, state: AppState) -> Result<(), ServeError> {
    tracing::info!(addr = ?listener.local_addr().ok(), mode = %state.settings().mode, "serving");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
