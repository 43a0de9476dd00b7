//! HTTP+JSON front end for personalized minimization sessions.
//!
//! ```text
//! POST /sessions                  -> {session_id, offers, finalizable}
//! GET  /sessions/{id}             -> {offers, finalizable}
//! POST /sessions/{id}/answers     {feature, option_id | value | decline} -> {offers, finalizable}
//! POST /sessions/{id}/finalize    -> {label, transcript}
//! GET  /healthz
//! ```
//!
//! Errors come back as `{code, message}` with `code` one of `not_found`,
//! `protocol_error` or `bad_request`. Sessions live in memory and expire
//! after an idle timeout; a finalized session is dropped.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use uuid::Uuid;

use dmin_core::generalization::{FeatureStatus, GeneralizationModel};
use dmin_core::session::{Answer, FeatureOffer, Session, SessionError, TranscriptEntry};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub idle_timeout: Duration,
    /// Append-only NDJSON log of session events. Off by default.
    pub session_log: Option<PathBuf>,
    /// Directory of static assets served for any other path.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            idle_timeout: Duration::from_secs(30 * 60),
            session_log: None,
            static_dir: None,
        }
    }
}

struct Entry {
    session: Arc<tokio::sync::Mutex<Session>>,
    last_used: Instant,
}

pub struct AppState {
    model: Arc<GeneralizationModel>,
    config: ServiceConfig,
    sessions: Mutex<HashMap<Uuid, Entry>>,
    log: Option<Mutex<File>>,
}

impl AppState {
    pub fn new(model: GeneralizationModel, config: ServiceConfig) -> std::io::Result<Arc<Self>> {
        let log = match &config.session_log {
            Some(path) => Some(Mutex::new(OpenOptions::new().create(true).append(true).open(path)?)),
            None => None,
        };
        Ok(Arc::new(AppState {
            model: Arc::new(model),
            config,
            sessions: Mutex::new(HashMap::new()),
            log,
        }))
    }

    pub fn live_sessions(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    fn record(&self, event: serde_json::Value) {
        if let Some(log) = &self.log {
            let mut f = log.lock().unwrap();
            if let Err(e) = writeln!(f, "{event}") {
                log::warn!("session log write failed: {e}");
            }
        }
    }

    fn sweep(&self, sessions: &mut HashMap<Uuid, Entry>) {
        let timeout = self.config.idle_timeout;
        sessions.retain(|_, e| e.last_used.elapsed() <= timeout);
    }

    fn lookup(&self, id: &str) -> Result<(Uuid, Arc<tokio::sync::Mutex<Session>>), ApiError> {
        let uuid = Uuid::parse_str(id).map_err(|_| ApiError::not_found(id))?;
        let mut sessions = self.sessions.lock().unwrap();
        self.sweep(&mut sessions);
        let entry = sessions.get_mut(&uuid).ok_or_else(|| ApiError::not_found(id))?;
        entry.last_used = Instant::now();
        Ok((uuid, entry.session.clone()))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn not_found(id: &str) -> Self {
        ApiError {
            status: StatusCode::NOT_FOUND,
            code: "not_found",
            message: format!("no live session `{id}`"),
        }
    }

    fn protocol(message: String) -> Self {
        ApiError {
            status: StatusCode::CONFLICT,
            code: "protocol_error",
            message,
        }
    }

    fn bad_request(message: String) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code: "bad_request",
            message,
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::UnknownFeature(_) => ApiError::bad_request(e.to_string()),
            SessionError::Protocol(m) => ApiError::protocol(m),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"code": self.code, "message": self.message}))).into_response()
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Offers {
    pub offers: Vec<FeatureOffer>,
    /// Every surviving cluster agrees on the label.
    pub finalizable: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
    #[serde(flatten)]
    pub offers: Offers,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnswerBody {
    pub feature: String,
    #[serde(default)]
    pub option_id: Option<String>,
    #[serde(default)]
    pub value: Option<serde_json::Value>,
    #[serde(default)]
    pub decline: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FinalizeResponse {
    pub label: String,
    pub transcript: Vec<TranscriptEntry>,
}

fn offers(session: &Session) -> Offers {
    Offers {
        offers: session.offers(),
        finalizable: session.is_resolved(),
    }
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

async fn create(State(state): State<Arc<AppState>>) -> (StatusCode, Json<Created>) {
    let session = Session::new(state.model.clone());
    let body = offers(&session);
    let id = Uuid::new_v4();
    {
        let mut sessions = state.sessions.lock().unwrap();
        state.sweep(&mut sessions);
        sessions.insert(
            id,
            Entry {
                session: Arc::new(tokio::sync::Mutex::new(session)),
                last_used: Instant::now(),
            },
        );
    }
    state.record(json!({"event": "created", "session": id.to_string()}));
    (
        StatusCode::CREATED,
        Json(Created {
            session_id: id.to_string(),
            offers: body,
        }),
    )
}

async fn show(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Offers>, ApiError> {
    let (_, session) = state.lookup(&id)?;
    let session = session.lock().await;
    Ok(Json(offers(&session)))
}

async fn answer(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    payload: Result<Json<AnswerBody>, JsonRejection>,
) -> Result<Json<Offers>, ApiError> {
    let Json(body) = payload.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let (uuid, session) = state.lookup(&id)?;
    // Requests to one session queue here; a losing duplicate answer then
    // fails the already-answered check.
    let mut session = session.lock().await;
    let feature = session.feature_index(&body.feature)?;
    let chosen = [body.option_id.is_some(), body.value.is_some(), body.decline];
    if chosen.iter().filter(|c| **c).count() != 1 {
        return Err(ApiError::bad_request(
            "give exactly one of `option_id`, `value` or `decline: true`".into(),
        ));
    }
    let answer = if let Some(option) = body.option_id {
        Answer::Option(option)
    } else if let Some(value) = body.value {
        let f = &session.model().schema.features[feature];
        if session.model().generalization.status(feature) != FeatureStatus::Untouched {
            return Err(ApiError::protocol(format!(
                "`{}` is not collected exactly; raw values are not accepted",
                f.name
            )));
        }
        Answer::Value(f.cell_from_json(&value).map_err(|e| ApiError::bad_request(e.to_string()))?)
    } else {
        Answer::Decline
    };
    session.answer(feature, answer)?;
    let disclosed = session.finalize().transcript.pop();
    state.record(json!({"event": "answered", "session": uuid.to_string(), "disclosed": disclosed}));
    Ok(Json(offers(&session)))
}

async fn finalize(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<FinalizeResponse>, ApiError> {
    let (uuid, session) = state.lookup(&id)?;
    let result = session.lock().await.finalize();
    state.sessions.lock().unwrap().remove(&uuid);
    state.record(json!({"event": "finalized", "session": uuid.to_string(), "label": result.label}));
    Ok(Json(FinalizeResponse {
        label: result.label,
        transcript: result.transcript,
    }))
}

pub fn router(state: Arc<AppState>) -> Router {
    let static_dir = state.config.static_dir.clone();
    let router = Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(show))
        .route("/sessions/{id}/answers", post(answer))
        .route("/sessions/{id}/finalize", post(finalize))
        .with_state(state);
    match static_dir {
        Some(dir) => router.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => router,
    }
}

/// Serves until the process is stopped.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
