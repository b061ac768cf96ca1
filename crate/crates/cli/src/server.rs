//! JSON-over-HTTP API for interactive sessions.
//!
//! Each session sits behind its own mutex, so mutations are serialized per
//! session while different sessions proceed independently. Fits run on a
//! blocking worker against a copy of the model and are installed when they
//! finish, which keeps every read answerable during a fit.
//!
//! | method | path | body / query | response |
//! |---|---|---|---|
//! | POST | `/sessions` | CSV; `label_column`, `standardize`, `seed`, `method`, `time_budget_ms` | `SessionCreated` |
//! | GET | `/sessions/{id}/view` | `method=pca\|ica` recomputes; omitted returns the current view | `ViewPayload` |
//! | POST | `/sessions/{id}/selection` | `SelectionRequest` | `{count}` |
//! | GET | `/sessions/{id}/selection/stats` | `level` (ellipse probability, default 0.95) | `StatsResponse` |
//! | POST | `/sessions/{id}/constraints` | `{"variant": "margin"\|"one_cluster"\|"cluster"\|"two_d"}` | `AddOutcome` |
//! | POST | `/sessions/{id}/fit` | `wait=true` blocks until done | `FitStatusResponse` (202, or 200 when waited) |
//! | GET | `/sessions/{id}/fit/status` | | `FitStatusResponse` |
//! | POST | `/sessions/{id}/fit/cancel` | | `FitStatusResponse` |
//! | POST | `/sessions/{id}/groupings` | `{name, row_ids}` | `{name, version}` |
//! | GET | `/sessions/{id}/groupings/{name}` | | `{name, row_ids}` |
//! | GET | `/sessions/{id}/export` | | session archive JSON |
//!
//! Errors come back as `{"error": kind, "message": text}` with a 4xx status.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use backdrop_core::maxent::{FitObserver, FitStatus, SweepReport};
use backdrop_core::projection::ProjectionMethod;
use backdrop_core::session::{AddOutcome, ConstraintRequest, SelectionEllipses, SelectionStats, ViewPayload};
use backdrop_core::{Error, Session, SessionSettings};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

const MAX_UPLOAD_BYTES: usize = 512 * 1024 * 1024;

#[derive(Default)]
pub struct AppState {
    sessions: RwLock<HashMap<String, Arc<Entry>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }
}

struct Entry {
    session: Mutex<Session>,
    job: Mutex<Job>,
}

#[derive(Default)]
enum Job {
    #[default]
    Idle,
    Running {
        cancel: Arc<AtomicBool>,
        progress: Arc<Mutex<Option<SweepReport>>>,
    },
    Finished(FitOutcome),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOutcome {
    pub status: FitStatus,
    pub sweeps: usize,
    pub max_residual: f64,
    pub elapsed_ms: f64,
    /// The fitted model replaced the session model. False when the
    /// constraints changed while fitting.
    pub installed: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitStatusResponse {
    /// `idle`, `running` or `finished`.
    pub state: String,
    pub model_version: u64,
    pub sweeps: Option<usize>,
    pub max_residual: Option<f64>,
    pub outcome: Option<FitOutcome>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionCreated {
    pub id: String,
    pub rows: usize,
    pub columns: Vec<String>,
    pub labels: Vec<String>,
    pub model_version: u64,
    pub view: Option<ViewPayload>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct CreateParams {
    pub label_column: Option<String>,
    pub standardize: Option<bool>,
    pub seed: Option<u64>,
    pub method: Option<String>,
    pub time_budget_ms: Option<u64>,
}

/// Exactly one of `row_ids`, `label` and `grouping`. With `add`, the rows
/// are united with the current selection.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SelectionRequest {
    pub row_ids: Option<Vec<u64>>,
    pub label: Option<String>,
    pub grouping: Option<String>,
    #[serde(default)]
    pub add: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintBody {
    pub variant: ConstraintRequest,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupingBody {
    pub name: String,
    pub row_ids: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsResponse {
    pub stats: SelectionStats,
    /// Present when a view exists and at least 3 rows are selected.
    pub ellipses: Option<SelectionEllipses>,
}

#[derive(Debug, Deserialize)]
struct ViewParams {
    method: Option<String>,
}

#[derive(Debug, Deserialize)]
struct StatsParams {
    level: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct FitParams {
    #[serde(default)]
    wait: bool,
}

pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        Self { status, kind, message: message.into() }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session `{id}`"))
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, kind) = match &e {
            Error::InvalidData(_) | Error::Csv(_) | Error::Json(_) => (StatusCode::BAD_REQUEST, "invalid_data"),
            Error::Parse { .. } => (StatusCode::BAD_REQUEST, "parse"),
            Error::InvalidConstraint(_) => (StatusCode::BAD_REQUEST, "invalid_constraint"),
            Error::DimensionMismatch { .. } => (StatusCode::BAD_REQUEST, "dimension_mismatch"),
            Error::Degenerate(_) => (StatusCode::UNPROCESSABLE_ENTITY, "degenerate"),
            Error::EmptySelection => (StatusCode::BAD_REQUEST, "empty_selection"),
            Error::UnknownGrouping(_) => (StatusCode::NOT_FOUND, "unknown_grouping"),
            Error::StaleModel(_) => (StatusCode::CONFLICT, "stale_model"),
            Error::FitInProgress => (StatusCode::CONFLICT, "fit_in_progress"),
            Error::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "io"),
        };
        Self::new(status, kind, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.kind, "message": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/view", get(view))
        .route("/sessions/{id}/selection", post(select))
        .route("/sessions/{id}/selection/stats", get(selection_stats))
        .route("/sessions/{id}/constraints", post(add_constraint))
        .route("/sessions/{id}/fit", post(start_fit))
        .route("/sessions/{id}/fit/status", get(fit_status))
        .route("/sessions/{id}/fit/cancel", post(cancel_fit))
        .route("/sessions/{id}/groupings", post(save_grouping))
        .route("/sessions/{id}/groupings/{name}", get(load_grouping))
        .route("/sessions/{id}/export", get(export))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(state)
}

fn entry(state: &AppState, id: &str) -> ApiResult<Arc<Entry>> {
    state.sessions.read().get(id).cloned().ok_or_else(|| ApiError::not_found(id))
}

fn parse_method(s: &str) -> ApiResult<ProjectionMethod> {
    s.parse().map_err(ApiError::from)
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    Query(params): Query<CreateParams>,
    body: String,
) -> ApiResult<(StatusCode, Json<SessionCreated>)> {
    let mut settings = SessionSettings::default();
    if let Some(s) = params.standardize {
        settings.standardize = s;
    }
    if let Some(seed) = params.seed {
        settings.seed = seed;
    }
    if let Some(m) = &params.method {
        settings.method = parse_method(m)?;
    }
    if let Some(ms) = params.time_budget_ms {
        settings.fit.time_budget = Duration::from_millis(ms);
    }
    let label_column = params.label_column.clone();
    let session = tokio::task::spawn_blocking(move || Session::from_csv(body.as_bytes(), label_column, settings))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;

    let id = format!("s{}", state.next_id.fetch_add(1, Ordering::Relaxed) + 1);
    let created = SessionCreated {
        id: id.clone(),
        rows: session.data().nrows(),
        columns: session.data().column_names().to_vec(),
        labels: session.data().distinct_labels(),
        model_version: session.model_version(),
        view: session.view_payload(),
    };
    let entry = Entry { session: Mutex::new(session), job: Mutex::new(Job::Idle) };
    state.sessions.write().insert(id, Arc::new(entry));
    Ok((StatusCode::CREATED, Json(created)))
}

async fn view(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(params): Query<ViewParams>,
) -> ApiResult<Json<ViewPayload>> {
    let entry = entry(&state, &id)?;
    match params.method {
        Some(m) => {
            let method = parse_method(&m)?;
            tokio::task::spawn_blocking(move || {
                let mut session = entry.session.lock();
                session.compute_view(method)?;
                Ok(Json(session.view_payload().expect("view was just computed")))
            })
            .await
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        }
        None => entry
            .session
            .lock()
            .view_payload()
            .map(Json)
            .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "no_view", "no view computed yet")),
    }
}

async fn select(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<SelectionRequest>,
) -> ApiResult<Json<serde_json::Value>> {
    let entry = entry(&state, &id)?;
    let mut session = entry.session.lock();
    let given = [req.row_ids.is_some(), req.label.is_some(), req.grouping.is_some()];
    if given.iter().filter(|&&g| g).count() != 1 {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "invalid_selection",
            "give exactly one of `row_ids`, `label` and `grouping`",
        ));
    }
    let mut ids = match (req.row_ids, req.label, req.grouping) {
        (Some(ids), _, _) => ids,
        (_, Some(label), _) => {
            let rows = session.data().rows_with_label(&label);
            if rows.is_empty() {
                return Err(Error::UnknownGrouping(label).into());
            }
            rows.iter().map(|&i| session.data().row_ids()[i]).collect()
        }
        (_, _, Some(name)) => session.load_grouping(&name)?,
        _ => unreachable!(),
    };
    if req.add {
        ids.extend(session.selection_ids());
    }
    let count = session.set_selection(&ids)?;
    Ok(Json(serde_json::json!({ "count": count })))
}

async fn selection_stats(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(params): Query<StatsParams>,
) -> ApiResult<Json<StatsResponse>> {
    let entry = entry(&state, &id)?;
    let session = entry.session.lock();
    let stats = session.selection_stats()?;
    let level = params.level.unwrap_or(0.95);
    let ellipses = if session.current_view().is_some() && session.selection().len() >= 3 {
        Some(session.selection_ellipses(level)?)
    } else {
        None
    };
    Ok(Json(StatsResponse { stats, ellipses }))
}

async fn add_constraint(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(body): Json<ConstraintBody>,
) -> ApiResult<Json<AddOutcome>> {
    let entry = entry(&state, &id)?;
    if matches!(*entry.job.lock(), Job::Running { .. }) {
        return Err(Error::FitInProgress.into());
    }
    let outcome = entry.session.lock().add_constraint(body.variant)?;
    Ok(Json(outcome))
}

struct JobObserver {
    cancel: Arc<AtomicBool>,
    progress: Arc<Mutex<Option<SweepReport>>>,
}

impl FitObserver for JobObserver {
    fn on_sweep(&mut self, report: &SweepReport) {
        *self.progress.lock() = Some(report.clone());
    }

    fn should_stop(&self) -> bool {
        self.cancel.load(Ordering::Relaxed)
    }
}

fn status_response(entry: &Entry) -> FitStatusResponse {
    let model_version = entry.session.lock().model_version();
    match &*entry.job.lock() {
        Job::Idle => FitStatusResponse {
            state: "idle".into(),
            model_version,
            sweeps: None,
            max_residual: None,
            outcome: None,
        },
        Job::Running { progress, .. } => {
            let p = progress.lock().clone();
            FitStatusResponse {
                state: "running".into(),
                model_version,
                sweeps: p.as_ref().map(|r| r.sweep),
                max_residual: p.as_ref().map(|r| r.max_residual),
                outcome: None,
            }
        }
        Job::Finished(outcome) => FitStatusResponse {
            state: "finished".into(),
            model_version,
            sweeps: Some(outcome.sweeps),
            max_residual: Some(outcome.max_residual),
            outcome: Some(outcome.clone()),
        },
    }
}

async fn start_fit(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(params): Query<FitParams>,
) -> ApiResult<(StatusCode, Json<FitStatusResponse>)> {
    let entry = entry(&state, &id)?;
    let cancel = Arc::new(AtomicBool::new(false));
    let progress = Arc::new(Mutex::new(None));
    let (mut model, base, config) = {
        let mut job = entry.job.lock();
        if matches!(*job, Job::Running { .. }) {
            return Err(Error::FitInProgress.into());
        }
        let session = entry.session.lock();
        let (model, base) = session.fit_snapshot();
        *job = Job::Running { cancel: cancel.clone(), progress: progress.clone() };
        (model, base, session.settings().fit.clone())
    };

    let worker = entry.clone();
    let handle = tokio::task::spawn_blocking(move || {
        let mut observer = JobObserver { cancel, progress };
        let status = model.fit(&config, &mut observer);
        let diag = model.diagnostics();
        let mut outcome = FitOutcome {
            status,
            sweeps: diag.sweeps,
            max_residual: diag.max_residual(),
            elapsed_ms: diag.elapsed.as_secs_f64() * 1e3,
            installed: false,
            error: None,
        };
        match worker.session.lock().install_fit(base, model) {
            Ok(()) => outcome.installed = true,
            Err(e) => outcome.error = Some(e.to_string()),
        }
        *worker.job.lock() = Job::Finished(outcome);
    });

    if params.wait {
        handle.await.map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
        Ok((StatusCode::OK, Json(status_response(&entry))))
    } else {
        Ok((StatusCode::ACCEPTED, Json(status_response(&entry))))
    }
}

async fn fit_status(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<FitStatusResponse>> {
    let entry = entry(&state, &id)?;
    Ok(Json(status_response(&entry)))
}

async fn cancel_fit(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<(StatusCode, Json<FitStatusResponse>)> {
    let entry = entry(&state, &id)?;
    if let Job::Running { cancel, .. } = &*entry.job.lock() {
        cancel.store(true, Ordering::Relaxed);
    }
    Ok((StatusCode::ACCEPTED, Json(status_response(&entry))))
}

async fn save_grouping(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(body): Json<GroupingBody>,
) -> ApiResult<Json<serde_json::Value>> {
    let entry = entry(&state, &id)?;
    let version = entry.session.lock().save_grouping(&body.name, &body.row_ids)?;
    Ok(Json(serde_json::json!({ "name": body.name, "version": version })))
}

async fn load_grouping(
    State(state): State<Arc<AppState>>,
    Path((id, name)): Path<(String, String)>,
) -> ApiResult<Json<GroupingBody>> {
    let entry = entry(&state, &id)?;
    let row_ids = entry.session.lock().load_grouping(&name)?;
    Ok(Json(GroupingBody { name, row_ids }))
}

async fn export(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let entry = entry(&state, &id)?;
    let bytes = entry.session.lock().export_json()?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}
