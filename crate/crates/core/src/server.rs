//! JSON-over-HTTP API for training, scoring and percentile lookup.
//!
//! Error bodies are `{"code": ..., "message": ...}` with `code` drawn from
//! [`ErrorCode`].

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::corpus::{self, Backlog, CorpusError, PatternFields};
use crate::interpret::{PercentileBands, QualityReport};
use crate::pipeline::{self, validate_project_id, BundleStore, ModelBundle, PipelineError, ProjectConfig, StoryInput};

const MAX_UPLOAD_BYTES: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    InvalidRequest,
    InvalidProjectId,
    MalformedCsv,
    MissingBacklog,
    ProjectNotFound,
    EmptyText,
    TrainingInProgress,
    BundleUnavailable,
    Internal,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 9] = [
        ErrorCode::InvalidRequest,
        ErrorCode::InvalidProjectId,
        ErrorCode::MalformedCsv,
        ErrorCode::MissingBacklog,
        ErrorCode::ProjectNotFound,
        ErrorCode::EmptyText,
        ErrorCode::TrainingInProgress,
        ErrorCode::BundleUnavailable,
        ErrorCode::Internal,
    ];

    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::InvalidRequest | ErrorCode::InvalidProjectId | ErrorCode::MalformedCsv | ErrorCode::MissingBacklog => {
                StatusCode::BAD_REQUEST
            }
            ErrorCode::ProjectNotFound => StatusCode::NOT_FOUND,
            ErrorCode::EmptyText => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::TrainingInProgress => StatusCode::CONFLICT,
            ErrorCode::BundleUnavailable => StatusCode::SERVICE_UNAVAILABLE,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<u64>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into(), line: None }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}

impl From<CorpusError> for ApiError {
    fn from(e: CorpusError) -> Self {
        let line = match &e {
            CorpusError::MalformedCsv { line, .. } => Some(*line),
            _ => None,
        };
        let code = match &e {
            CorpusError::InvalidMapping(_) => ErrorCode::InvalidRequest,
            _ => ErrorCode::MalformedCsv,
        };
        Self { code, message: e.to_string(), line }
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Corpus(c) => c.into(),
            PipelineError::InvalidProjectId(_) => ApiError::new(ErrorCode::InvalidProjectId, e.to_string()),
            PipelineError::BundleMissing(_) => ApiError::new(ErrorCode::ProjectNotFound, e.to_string()),
            PipelineError::Config(_) => ApiError::new(ErrorCode::InvalidRequest, e.to_string()),
            other => ApiError::new(ErrorCode::Internal, other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingState {
    Idle,
    Pending,
    Ready,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingStatus {
    pub project_id: String,
    pub status: TrainingState,
    /// Version being trained, or the last one trained.
    pub bundle_version: Option<u64>,
    /// Version currently used for scoring.
    pub active_version: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
struct ProjectSlot {
    bundle: Option<Arc<ModelBundle>>,
    state: TrainingState,
    training_version: Option<u64>,
    error: Option<String>,
}

impl ProjectSlot {
    fn empty() -> Self {
        Self { bundle: None, state: TrainingState::Idle, training_version: None, error: None }
    }
}

type TrainingHook = Arc<dyn Fn(&str) + Send + Sync>;

/// Shared server state: the bundle store plus one in-memory slot per project.
pub struct AppState {
    store: BundleStore,
    config: ProjectConfig,
    projects: RwLock<BTreeMap<String, ProjectSlot>>,
    training_hook: Option<TrainingHook>,
}

impl AppState {
    pub fn new(store: BundleStore, config: ProjectConfig) -> Self {
        Self { store, config, projects: RwLock::new(BTreeMap::new()), training_hook: None }
    }

    /// Runs `hook` on the training thread before each training job starts.
    pub fn with_training_hook(mut self, hook: impl Fn(&str) + Send + Sync + 'static) -> Self {
        self.training_hook = Some(Arc::new(hook));
        self
    }

    /// Loads the latest bundle of every stored project.
    pub fn load_existing(&self) -> Result<usize, PipelineError> {
        let mut loaded = 0;
        for id in self.store.projects()? {
            let bundle = self.store.load(&id)?;
            let mut projects = self.projects.write().expect("project map poisoned");
            projects.entry(id).or_insert_with(ProjectSlot::empty).bundle = Some(Arc::new(bundle));
            loaded += 1;
        }
        Ok(loaded)
    }

    pub fn store(&self) -> &BundleStore {
        &self.store
    }

    /// Active bundle snapshot, loading it from the store on first use.
    pub fn bundle(&self, project_id: &str) -> Result<Option<Arc<ModelBundle>>, PipelineError> {
        if let Some(bundle) = self.projects.read().expect("project map poisoned").get(project_id).and_then(|s| s.bundle.clone()) {
            return Ok(Some(bundle));
        }
        match self.store.load(project_id) {
            Ok(bundle) => {
                let bundle = Arc::new(bundle);
                let mut projects = self.projects.write().expect("project map poisoned");
                let slot = projects.entry(project_id.to_owned()).or_insert_with(ProjectSlot::empty);
                // a concurrent training may have installed a newer bundle meanwhile
                if slot.bundle.as_ref().is_none_or(|b| b.bundle_version < bundle.bundle_version) {
                    slot.bundle = Some(bundle);
                }
                Ok(slot.bundle.clone())
            }
            Err(PipelineError::BundleMissing(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn is_training(&self, project_id: &str) -> bool {
        self.projects
            .read()
            .expect("project map poisoned")
            .get(project_id)
            .is_some_and(|s| s.state == TrainingState::Pending)
    }

    pub fn status(&self, project_id: &str) -> Result<Option<TrainingStatus>, PipelineError> {
        let active = self.bundle(project_id)?;
        let projects = self.projects.read().expect("project map poisoned");
        let Some(slot) = projects.get(project_id) else {
            return Ok(None);
        };
        let active_version = active.map(|b| b.bundle_version);
        Ok(Some(TrainingStatus {
            project_id: project_id.to_owned(),
            status: if slot.state == TrainingState::Idle && active_version.is_some() { TrainingState::Ready } else { slot.state },
            bundle_version: slot.training_version.or(active_version),
            active_version,
            error: slot.error.clone(),
        }))
    }

    /// Claims the per-project training lock and reserves the next version.
    fn begin_training(&self, project_id: &str) -> Result<u64, ApiError> {
        let mut projects = self.projects.write().expect("project map poisoned");
        let slot = projects.entry(project_id.to_owned()).or_insert_with(ProjectSlot::empty);
        if slot.state == TrainingState::Pending {
            return Err(ApiError::new(ErrorCode::TrainingInProgress, format!("project `{project_id}` is already training")));
        }
        let stored = self.store.latest_version(project_id).map_err(ApiError::from)?;
        let active = slot.bundle.as_ref().map(|b| b.bundle_version);
        let version = stored.max(active).map_or(1, |v| v + 1);
        slot.state = TrainingState::Pending;
        slot.training_version = Some(version);
        slot.error = None;
        Ok(version)
    }

    fn finish_training(&self, project_id: &str, result: Result<ModelBundle, PipelineError>) {
        let mut projects = self.projects.write().expect("project map poisoned");
        let slot = projects.entry(project_id.to_owned()).or_insert_with(ProjectSlot::empty);
        match result {
            Ok(bundle) => {
                slot.bundle = Some(Arc::new(bundle));
                slot.state = TrainingState::Ready;
            }
            Err(e) => {
                tracing::warn!(project = project_id, error = %e, "training failed");
                slot.state = TrainingState::Failed;
                slot.error = Some(e.to_string());
            }
        }
    }

    fn run_training(self: &Arc<Self>, backlog: Backlog, config: ProjectConfig, version: u64) {
        let state = Arc::clone(self);
        tokio::task::spawn_blocking(move || {
            let project_id = backlog.project_id.clone();
            if let Some(hook) = &state.training_hook {
                hook(&project_id);
            }
            let result = pipeline::train(&backlog, &config).and_then(|mut bundle| {
                bundle.bundle_version = version;
                state.store.save(&bundle)?;
                Ok(bundle)
            });
            state.finish_training(&project_id, result);
        });
    }
}

/// Listener and store settings read from the environment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerConfig {
    pub listen: SocketAddr,
    pub store_dir: PathBuf,
    pub cors_origin: Option<String>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { listen: SocketAddr::from(([127, 0, 0, 1], 8080)), store_dir: PathBuf::from("store"), cors_origin: None }
    }
}

impl ServerConfig {
    /// Reads `STORYGAUGE_LISTEN`, `STORYGAUGE_STORE` and `STORYGAUGE_CORS_ORIGIN`.
    pub fn from_env() -> Result<Self, String> {
        let mut config = Self::default();
        if let Ok(listen) = std::env::var("STORYGAUGE_LISTEN") {
            config.listen = listen.parse().map_err(|e| format!("STORYGAUGE_LISTEN `{listen}`: {e}"))?;
        }
        if let Ok(dir) = std::env::var("STORYGAUGE_STORE") {
            config.store_dir = PathBuf::from(dir);
        }
        config.cors_origin = std::env::var("STORYGAUGE_CORS_ORIGIN").ok().filter(|o| !o.is_empty());
        Ok(config)
    }
}

fn cors_layer(origin: &str) -> Result<CorsLayer, String> {
    let allow = if origin == "*" {
        AllowOrigin::any()
    } else {
        AllowOrigin::exact(HeaderValue::from_str(origin).map_err(|e| format!("CORS origin `{origin}`: {e}"))?)
    };
    Ok(CorsLayer::new()
        .allow_origin(allow)
        .allow_methods([axum::http::Method::GET, axum::http::Method::POST])
        .allow_headers([header::CONTENT_TYPE]))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/projects/{id}/train", post(train))
        .route("/projects/{id}/train/status", get(train_status))
        .route("/projects/{id}/score", post(score))
        .route("/projects/{id}/percentiles", get(percentiles))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(state)
}

pub fn router_with_cors(state: Arc<AppState>, cors_origin: Option<&str>) -> Result<Router, String> {
    let app = router(state);
    Ok(match cors_origin {
        Some(origin) => app.layer(cors_layer(origin)?),
        None => app,
    })
}

pub async fn serve(config: ServerConfig, project_config: ProjectConfig) -> std::io::Result<()> {
    let state = AppState::new(BundleStore::new(&config.store_dir), project_config);
    match state.load_existing() {
        Ok(n) => tracing::info!(projects = n, store = %config.store_dir.display(), "loaded bundles"),
        Err(e) => tracing::warn!(error = %e, "could not load stored bundles"),
    }
    let app = router_with_cors(Arc::new(state), config.cors_origin.as_deref())
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e))?;
    let listener = tokio::net::TcpListener::bind(config.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app).await
}

fn checked_id(id: &str) -> Result<(), ApiError> {
    validate_project_id(id).map_err(ApiError::from)
}

#[derive(Debug, Serialize)]
struct HealthProject {
    project_id: String,
    bundle_version: u64,
}

#[derive(Debug, Serialize)]
struct Health {
    status: &'static str,
    projects: Vec<HealthProject>,
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    let projects = state
        .projects
        .read()
        .expect("project map poisoned")
        .iter()
        .filter_map(|(id, slot)| {
            slot.bundle.as_ref().map(|b| HealthProject { project_id: id.clone(), bundle_version: b.bundle_version })
        })
        .collect();
    Json(Health { status: "ok", projects })
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainBody {
    #[serde(default)]
    config: Option<ProjectConfig>,
}

#[derive(Debug, Serialize)]
struct TrainAccepted {
    project_id: String,
    bundle_version: u64,
    status: TrainingState,
    imported: usize,
    skipped: usize,
    rejected: Vec<corpus::RejectedRow>,
}

async fn read_csv_field(request: Request, state: &Arc<AppState>) -> Result<Option<Bytes>, ApiError> {
    let mut multipart = Multipart::from_request(request, state)
        .await
        .map_err(|e| ApiError::new(ErrorCode::InvalidRequest, e.body_text()))?;
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::new(ErrorCode::InvalidRequest, e.body_text()))?
    {
        if field.name() == Some("csv") {
            let bytes = field.bytes().await.map_err(|e| ApiError::new(ErrorCode::InvalidRequest, e.body_text()))?;
            return Ok(Some(bytes));
        }
    }
    Ok(None)
}

async fn train(State(state): State<Arc<AppState>>, Path(id): Path<String>, request: Request) -> Result<Response, ApiError> {
    checked_id(&id)?;
    let is_multipart = request
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));

    let config = state.config.clone();
    let (backlog, skipped, rejected) = if is_multipart {
        let csv = read_csv_field(request, &state)
            .await?
            .ok_or_else(|| ApiError::new(ErrorCode::InvalidRequest, "multipart field `csv` is missing"))?;
        let outcome = corpus::import_csv(&csv, &config.mapping, &id)?;
        (outcome.backlog, outcome.skipped_count, outcome.rejected)
    } else {
        let bytes = axum::body::to_bytes(request.into_body(), MAX_UPLOAD_BYTES)
            .await
            .map_err(|e| ApiError::new(ErrorCode::InvalidRequest, e.to_string()))?;
        let body: TrainBody = if bytes.iter().all(u8::is_ascii_whitespace) {
            TrainBody::default()
        } else {
            serde_json::from_slice(&bytes).map_err(|e| ApiError::new(ErrorCode::InvalidRequest, e.to_string()))?
        };
        let backlog = state.store.load_backlog(&id)?.ok_or_else(|| {
            ApiError::new(ErrorCode::MissingBacklog, format!("no stored backlog for project `{id}`; upload a CSV"))
        })?;
        return start_training(&state, backlog, body.config.unwrap_or(config), 0, Vec::new());
    };
    start_training(&state, backlog, config, skipped, rejected)
}

fn start_training(
    state: &Arc<AppState>,
    backlog: Backlog,
    config: ProjectConfig,
    skipped: usize,
    rejected: Vec<corpus::RejectedRow>,
) -> Result<Response, ApiError> {
    config.validate()?;
    let project_id = backlog.project_id.clone();
    let version = state.begin_training(&project_id)?;
    if let Err(e) = state.store.save_backlog(&backlog) {
        state.finish_training(&project_id, Err(e));
        return Err(ApiError::new(ErrorCode::Internal, "could not persist backlog"));
    }
    let imported = backlog.len();
    state.run_training(backlog, config, version);
    let body = TrainAccepted { project_id, bundle_version: version, status: TrainingState::Pending, imported, skipped, rejected };
    Ok((StatusCode::ACCEPTED, Json(body)).into_response())
}

async fn train_status(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<TrainingStatus>, ApiError> {
    checked_id(&id)?;
    state
        .status(&id)?
        .map(Json)
        .ok_or_else(|| ApiError::new(ErrorCode::ProjectNotFound, format!("unknown project `{id}`")))
}

/// Score request: either free `text` or structured `patterns`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRequest {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub patterns: Option<PatternFields>,
}

impl ScoreRequest {
    fn into_input(self) -> Result<StoryInput, ApiError> {
        let input = match (self.text, self.patterns) {
            (Some(text), None) => StoryInput::Text { id: self.id, text },
            (None, Some(patterns)) => StoryInput::from_patterns(self.id.unwrap_or_default(), &patterns),
            _ => return Err(ApiError::new(ErrorCode::InvalidRequest, "provide exactly one of `text` or `patterns`")),
        };
        if input.is_blank() {
            return Err(ApiError::new(ErrorCode::EmptyText, "story text is empty"));
        }
        Ok(input)
    }
}

async fn active_bundle(state: &AppState, id: &str) -> Result<Arc<ModelBundle>, ApiError> {
    match state.bundle(id)? {
        Some(bundle) => Ok(bundle),
        None if state.is_training(id) => Err(ApiError::new(
            ErrorCode::BundleUnavailable,
            format!("project `{id}` is training its first bundle"),
        )),
        None => Err(ApiError::new(ErrorCode::ProjectNotFound, format!("unknown project `{id}`"))),
    }
}

async fn score(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> Result<Json<QualityReport>, ApiError> {
    checked_id(&id)?;
    let bundle = active_bundle(&state, &id).await?;
    let request: ScoreRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::new(ErrorCode::InvalidRequest, e.to_string()))?;
    let input = request.into_input()?;
    Ok(Json(pipeline::score(&bundle, &input)))
}

#[derive(Debug, Serialize)]
struct PercentilesResponse<'a> {
    project_id: &'a str,
    bundle_version: u64,
    #[serde(flatten)]
    bands: &'a PercentileBands,
}

async fn percentiles(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    checked_id(&id)?;
    let bundle = active_bundle(&state, &id).await?;
    let body = PercentilesResponse { project_id: &id, bundle_version: bundle.bundle_version, bands: &bundle.bands };
    Ok(Json(body).into_response())
}
