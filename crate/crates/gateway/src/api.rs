//! REST routes.
//!
//! Turns on one session are serialized by a per-session async mutex held
//! for the whole request, so posts apply in the order they acquire it.
//! Requests for different sessions never wait on each other. Any POST
//! body may carry `client_msg_id`; it is echoed back, and a repeated id on
//! the same session returns the stored reply instead of a second turn.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::serve::ListenerExt;
use axum::{Json, Router};
use docent_core::corpus::Artwork;
use docent_core::framework::{sample_flow, StageId};
use docent_core::orchestrator::{
    handle_student_turn, start_session, DocentPolicy, DocentReply, PolicyOverrides, SessionError, SessionState,
    StoreError, TurnClass,
};
use docent_core::pipeline::Turn;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::{AllowOrigin, CorsLayer};
use uuid::Uuid;

use crate::jobs::{run_job, DatasetJob, JobParams, JobStatus};
use crate::state::{AppState, SessionSlot};

const MAX_JOB_WORKERS: usize = 64;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }

    fn internal(message: impl ToString) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.code, "message": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "InvalidRequest", e.to_string()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtworkSummary {
    pub id: String,
    pub artwork_name: String,
    pub artist_name: String,
    pub year: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

impl From<&Artwork> for ArtworkSummary {
    fn from(a: &Artwork) -> Self {
        ArtworkSummary {
            id: a.id.clone(),
            artwork_name: a.artwork_name.clone(),
            artist_name: a.artist_name.clone(),
            year: a.year.clone(),
            image: a.image.clone(),
        }
    }
}

/// Client view of a session; always a projection of the stored state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiSession {
    pub session_id: String,
    pub artwork: ArtworkSummary,
    pub current_stage: StageId,
    pub stage_title: String,
    pub exchanges_used: usize,
    pub max_exchanges: usize,
    pub completed: bool,
    pub transcript: Vec<Turn>,
}

impl From<&SessionState> for ApiSession {
    fn from(s: &SessionState) -> Self {
        ApiSession {
            session_id: s.session_id.clone(),
            artwork: ArtworkSummary::from(&s.artwork),
            current_stage: s.current_stage,
            stage_title: s.current_stage.title(),
            exchanges_used: s.exchanges_used,
            max_exchanges: s.policy.max_exchanges(),
            completed: s.completed,
            transcript: s.transcript.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocentMessage {
    pub text: String,
    pub stage: StageId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class: Option<TurnClass>,
    pub fallback: bool,
}

impl DocentMessage {
    fn new(reply: DocentReply, stage: StageId) -> Self {
        DocentMessage { text: reply.text, stage, class: reply.class, fallback: reply.fallback }
    }
}

#[derive(Debug, Deserialize)]
struct CreateSession {
    artwork_id: String,
    #[serde(default)]
    policy: Option<Value>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    client_msg_id: Option<String>,
}

#[derive(Debug, Deserialize)]
struct PostMessage {
    text: String,
    #[serde(default)]
    client_msg_id: Option<String>,
}

#[derive(Debug, Deserialize)]
struct JobRequest {
    n: i64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    backend: Option<String>,
    #[serde(default)]
    workers: Option<usize>,
    #[serde(default)]
    fill_to_n: bool,
    #[serde(default)]
    client_msg_id: Option<String>,
}

fn with_msg_id(mut body: Value, id: &Option<String>) -> Value {
    if let Some(id) = id {
        body["client_msg_id"] = Value::String(id.clone());
    }
    body
}

fn session_policy(raw: Option<Value>) -> ApiResult<DocentPolicy> {
    let invalid = |m: String| ApiError::new(StatusCode::BAD_REQUEST, "InvalidPolicy", m);
    let Some(raw) = raw else {
        return Ok(DocentPolicy::default());
    };
    let overrides: PolicyOverrides = serde_json::from_value(raw).map_err(|e| invalid(e.to_string()))?;
    DocentPolicy::default().with_overrides(&overrides).map_err(|e| invalid(e.to_string()))
}

async fn create_session(State(app): State<Arc<AppState>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: CreateSession = parse_body(&body)?;
    let artwork = app.corpus().get(&req.artwork_id).cloned().ok_or_else(|| {
        ApiError::new(StatusCode::NOT_FOUND, "UnknownArtwork", format!("no artwork {:?}", req.artwork_id))
    })?;
    let policy = session_policy(req.policy)?;
    let id = Uuid::new_v4();
    let seed = req.seed.unwrap_or_else(|| id.as_u64_pair().0);
    let flow = sample_flow(&app.framework, seed);
    let worker = app.clone();
    let session_id = id.simple().to_string();
    let (session, reply) = blocking(move || {
        let (session, reply) = start_session(session_id, artwork, policy, flow, worker.session_backend.as_ref());
        worker.store.save(&session).map(|_| (session, reply))
    })
    .await?
    .map_err(ApiError::internal)?;
    let body = json!({
        "session": ApiSession::from(&session),
        "message": DocentMessage::new(reply, session.current_stage),
    });
    app.insert_slot(session);
    Ok((StatusCode::CREATED, Json(with_msg_id(body, &req.client_msg_id))))
}

async fn session_slot(app: &Arc<AppState>, id: &str) -> ApiResult<Arc<tokio::sync::Mutex<SessionSlot>>> {
    if let Some(slot) = app.cached_slot(id) {
        return Ok(slot);
    }
    let unknown = || ApiError::new(StatusCode::NOT_FOUND, "UnknownSession", format!("no session {id:?}"));
    let store = app.store.clone();
    let key = id.to_owned();
    match blocking(move || store.load(&key)).await? {
        Ok(Some(state)) => Ok(app.insert_slot(state)),
        Ok(None) | Err(StoreError::InvalidId(_)) => Err(unknown()),
        Err(e) => Err(ApiError::internal(e)),
    }
}

async fn get_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<ApiSession>> {
    let slot = session_slot(&app, &id).await?;
    let slot = slot.lock().await;
    Ok(Json(ApiSession::from(&slot.state)))
}

async fn post_message(State(app): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: PostMessage = parse_body(&body)?;
    let slot = session_slot(&app, &id).await?;
    let mut slot = slot.lock_owned().await;
    if let Some(previous) = req.client_msg_id.as_ref().and_then(|k| slot.replies.get(k)) {
        return Ok(Json(previous.clone()));
    }
    if slot.state.completed {
        return Err(ApiError::new(StatusCode::CONFLICT, "SessionCompleted", "the session has already finished"));
    }
    let current = slot.state.clone();
    let worker = app.clone();
    let text = req.text;
    let outcome = blocking(move || {
        let (reply, next) = handle_student_turn(&current, &text, worker.session_backend.as_ref())?;
        worker.store.save(&next).map_err(|e| TurnFailure::Store(e.to_string()))?;
        Ok::<_, TurnFailure>((reply, next))
    })
    .await?;
    let (reply, next) = outcome.map_err(|e| match e {
        TurnFailure::Session(SessionError::SessionCompleted) => {
            ApiError::new(StatusCode::CONFLICT, "SessionCompleted", "the session has already finished")
        }
        TurnFailure::Session(SessionError::EmptyText) => {
            ApiError::new(StatusCode::BAD_REQUEST, "EmptyText", "message text is empty")
        }
        TurnFailure::Store(m) => ApiError::internal(m),
    })?;
    let body = with_msg_id(
        json!({
            "reply": DocentMessage::new(reply, next.current_stage),
            "session": ApiSession::from(&next),
        }),
        &req.client_msg_id,
    );
    slot.state = next;
    if let Some(key) = req.client_msg_id {
        slot.replies.insert(key, body.clone());
    }
    Ok(Json(body))
}

enum TurnFailure {
    Session(SessionError),
    Store(String),
}

impl From<SessionError> for TurnFailure {
    fn from(e: SessionError) -> Self {
        TurnFailure::Session(e)
    }
}

async fn list_artworks(State(app): State<Arc<AppState>>) -> Json<Vec<Artwork>> {
    Json(app.corpus().artworks().to_vec())
}

async fn create_job(State(app): State<Arc<AppState>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: JobRequest = parse_body(&body)?;
    let invalid = |m: String| ApiError::new(StatusCode::BAD_REQUEST, "InvalidParams", m);
    let max = app.config.max_job_n;
    let n = usize::try_from(req.n)
        .ok()
        .filter(|n| (1..=max).contains(n))
        .ok_or_else(|| invalid(format!("n must be between 1 and {max}, got {}", req.n)))?;
    let configured = app.config.backend.name();
    let backend = req.backend.unwrap_or_else(|| configured.to_owned());
    if backend != configured {
        return Err(invalid(format!("backend {backend:?} is not configured; this server runs {configured:?}")));
    }
    let workers = req.workers.unwrap_or(4);
    if !(1..=MAX_JOB_WORKERS).contains(&workers) {
        return Err(invalid(format!("workers must be between 1 and {MAX_JOB_WORKERS}")));
    }
    let params = JobParams { n, seed: req.seed, backend, workers, fill_to_n: req.fill_to_n };
    let job_id = Uuid::new_v4().simple().to_string();
    let job = DatasetJob {
        job_id: job_id.clone(),
        params: params.clone(),
        status: JobStatus::Queued,
        summary: None,
        output: None,
        error: None,
    };
    app.jobs.lock().expect("job map lock").insert(job_id.clone(), job.clone());
    tokio::spawn(run_job(app.clone(), job_id, params));
    let body = serde_json::to_value(&job).map_err(ApiError::internal)?;
    Ok((StatusCode::ACCEPTED, Json(with_msg_id(body, &req.client_msg_id))))
}

async fn get_job(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<DatasetJob>> {
    app.jobs
        .lock()
        .expect("job map lock")
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UnknownJob", format!("no job {id:?}")))
}

fn cors(origins: &[String]) -> CorsLayer {
    let layer = CorsLayer::new().allow_methods([Method::GET, Method::POST]).allow_headers([header::CONTENT_TYPE]);
    if origins.is_empty() {
        return layer.allow_origin(AllowOrigin::any());
    }
    let list: Vec<HeaderValue> = origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()).collect();
    layer.allow_origin(list)
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/artworks", get(list_artworks))
        .route("/jobs/dataset", post(create_job))
        .route("/jobs/{id}", get(get_job))
        .layer(cors(&app.config.cors_origins))
        .with_state(app)
}

/// Serves until the listener fails.
pub async fn serve(app: Arc<AppState>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    let listener = listener.tap_io(|tcp| {
        if let Err(err) = tcp.set_nodelay(true) {
            tracing::debug!(%err, "could not set TCP_NODELAY");
        }
    });
    axum::serve(listener, router(app)).await
}
