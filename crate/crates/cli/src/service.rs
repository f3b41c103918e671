//! JSON API over a workspace, with one server-held exploration session.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use percent_encoding::{utf8_percent_encode, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tower_http::services::ServeDir;
use traceview_core::diff::DiffReport;
use traceview_core::host::Context;
use traceview_core::projection::{LabelMode, LayoutDocument};
use traceview_core::scenario::Player;
use traceview_core::viewpoint::Summary;
use traceview_core::{ApplicationState, Error, Scenario};

use crate::engine::{self, StateSummary};
use crate::workspace::Workspace;

pub struct Service {
    ws: Workspace,
    /// The session state; also held across file writes so they never interleave.
    exclusive: Mutex<ApplicationState>,
}

type Shared = Arc<Service>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    reason: &'static str,
    message: String,
    step: Option<usize>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    reason: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    step: Option<usize>,
}

impl ApiError {
    fn new(status: StatusCode, reason: &'static str, message: impl ToString) -> Self {
        ApiError {
            status,
            reason,
            message: message.to_string(),
            step: None,
        }
    }

    fn not_found(what: impl ToString) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not-found", format!("{} not found", what.to_string()))
    }
}

fn status_of(e: &Error) -> (StatusCode, &'static str) {
    match e {
        Error::Step { source, .. } => status_of(source),
        Error::Io { .. } | Error::MissingDataset { .. } => (StatusCode::INTERNAL_SERVER_ERROR, "io"),
        Error::NotFound(_) => (StatusCode::NOT_FOUND, "not-found"),
        Error::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
        Error::Parse { .. } => (StatusCode::BAD_REQUEST, "parse"),
        Error::Csv { .. } => (StatusCode::BAD_REQUEST, "csv"),
        Error::Validation { .. } => (StatusCode::BAD_REQUEST, "validation"),
        Error::FormatVersion { .. } => (StatusCode::BAD_REQUEST, "format-version"),
        Error::UnknownPreference(_) => (StatusCode::BAD_REQUEST, "unknown-preference"),
        Error::ScopeNotApplicable { .. } => (StatusCode::BAD_REQUEST, "scope-not-applicable"),
        Error::TypeMismatch { .. } => (StatusCode::BAD_REQUEST, "type-mismatch"),
        Error::OutOfRange { .. } | Error::EndOfScenario | Error::StartOfScenario => {
            (StatusCode::BAD_REQUEST, "out-of-range")
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, reason) = status_of(&e);
        let step = match &e {
            Error::Step { index, .. } => Some(*index),
            _ => None,
        };
        ApiError {
            status,
            reason,
            message: e.to_string(),
            step,
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "body", r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: &self.message,
            reason: self.reason,
            step: self.step,
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

impl Service {
    pub fn new(ws: Workspace) -> traceview_core::Result<Service> {
        let session = ws.session()?;
        Ok(Service {
            ws,
            exclusive: Mutex::new(session),
        })
    }

    fn lock(&self) -> MutexGuard<'_, ApplicationState> {
        self.exclusive.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Path of an existing file named by a workspace id.
    fn existing(&self, id: &str, what: &str) -> ApiResult<PathBuf> {
        let path = self.ws.resolve(id)?;
        if !path.is_file() {
            return Err(ApiError::not_found(format!("{what} `{id}`")));
        }
        Ok(path)
    }
}

pub fn router(service: Service) -> Router {
    let ui = service.ws.root().join("ui");
    Router::new()
        .route("/viewpoints", get(list_viewpoints))
        .route("/viewpoints/{id}", get(get_viewpoint))
        .route("/diff", post(post_diff))
        .route("/layout", post(post_layout))
        .route("/scenarios", get(list_scenarios).post(create_scenario))
        .route("/scenarios/{id}", get(get_scenario).put(update_scenario))
        .route("/scenarios/{id}/goto", post(goto_step))
        .route("/session", get(get_session))
        .fallback_service(ServeDir::new(ui))
        .with_state(Arc::new(service))
}

/// Serves the workspace on localhost until the process is stopped.
pub fn serve(ws: Workspace, port: u16) -> traceview_core::Result<()> {
    let app = router(Service::new(ws)?);
    let address = format!("127.0.0.1:{port}");
    let io = |source| Error::Io {
        path: address.clone().into(),
        source,
    };
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(io)?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&address).await.map_err(io)?;
        axum::serve(listener, app).await.map_err(io)
    })
}

pub fn href(prefix: &str, id: &str) -> String {
    format!("{prefix}/{}", utf8_percent_encode(id, NON_ALPHANUMERIC))
}

fn etag(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    format!("\"{hex}\"")
}

fn file_etag(path: &Path) -> ApiResult<String> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    Ok(etag(&bytes))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ViewpointEntry {
    id: String,
    href: String,
    #[serde(flatten)]
    summary: Option<Summary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

async fn list_viewpoints(State(s): State<Shared>) -> ApiResult<Json<Vec<ViewpointEntry>>> {
    let mut entries = Vec::new();
    for id in s.ws.viewpoint_ids()? {
        let path = s.ws.resolve(&id)?;
        let (summary, error) = match engine::summary_of(&s.ws, &path) {
            Ok(summary) => (Some(summary), None),
            Err(e) => (None, Some(e.to_string())),
        };
        entries.push(ViewpointEntry {
            href: href("/viewpoints", &id),
            id,
            summary,
            error,
        });
    }
    Ok(Json(entries))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct PreferenceEntry {
    id: String,
    scope: String,
    instance: String,
    category: String,
    kind: String,
    value: String,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ViewpointDocument {
    id: String,
    format_version: u32,
    summary: Summary,
    context: Context,
    preferences: Vec<PreferenceEntry>,
}

async fn get_viewpoint(State(s): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<ViewpointDocument>> {
    let path = s.existing(&id, "viewpoint")?;
    let vp = engine::load_viewpoint(&s.ws, &path)?;
    let mut preferences = Vec::new();
    for (key, value) in &vp.assignments {
        let def = s.ws.schema().get(&key.pref_id)?;
        preferences.push(PreferenceEntry {
            id: key.pref_id.clone(),
            scope: key.scope.to_string(),
            instance: key.instance.clone(),
            category: def.category.clone(),
            kind: def.kind.to_string(),
            value: value.canonical(),
        });
    }
    Ok(Json(ViewpointDocument {
        id,
        format_version: vp.format_version,
        summary: vp.summary(Some(s.ws.areas())),
        context: vp.context.clone(),
        preferences,
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DiffRequest {
    left: String,
    right: String,
}

async fn post_diff(State(s): State<Shared>, body: Result<Json<DiffRequest>, JsonRejection>) -> ApiResult<Json<DiffReport>> {
    let Json(req) = body?;
    let left = s.existing(&req.left, "viewpoint")?;
    let right = s.existing(&req.right, "viewpoint")?;
    Ok(Json(engine::diff_files(&s.ws, (&req.left, &left), (&req.right, &right))?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LayoutRequest {
    ids: Vec<String>,
    #[serde(default)]
    label: Option<LabelMode>,
}

async fn post_layout(State(s): State<Shared>, body: Result<Json<LayoutRequest>, JsonRejection>) -> ApiResult<Json<LayoutDocument>> {
    let Json(req) = body?;
    let entries = req
        .ids
        .iter()
        .map(|id| Ok((id.clone(), s.existing(id, "viewpoint")?)))
        .collect::<ApiResult<Vec<_>>>()?;
    let cmp = engine::compare_files(&s.ws, &entries)?;
    Ok(Json(cmp.export(req.label.unwrap_or(LabelMode::Computed))))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ScenarioEntry {
    id: String,
    href: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

async fn list_scenarios(State(s): State<Shared>) -> ApiResult<Json<Vec<ScenarioEntry>>> {
    let mut entries = Vec::new();
    for id in s.ws.scenario_ids()? {
        let path = s.ws.resolve(&id)?;
        let (name, steps, error) = match Scenario::load_xml(&path) {
            Ok(scn) => (Some(scn.name().to_owned()), Some(scn.len()), None),
            Err(e) => (None, None, Some(e.to_string())),
        };
        entries.push(ScenarioEntry {
            href: href("/scenarios", &id),
            id,
            name,
            steps,
            error,
        });
    }
    Ok(Json(entries))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct StepDocument {
    order: usize,
    #[serde(rename = "ref")]
    reference: String,
    broken: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    summary: Option<Summary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ScenarioDocument {
    id: String,
    name: String,
    etag: String,
    steps: Vec<StepDocument>,
}

fn scenario_response(s: &Service, id: &str, path: &Path, status: StatusCode) -> ApiResult<Response> {
    let scenario = Scenario::load_xml(path)?;
    let tag = file_etag(path)?;
    let steps = scenario
        .preview(s.ws.schema(), Some(s.ws.areas()))
        .into_iter()
        .map(|p| StepDocument {
            order: p.order,
            reference: s.ws.id_of(&p.reference),
            broken: p.broken,
            summary: p.summary,
            error: p.error,
        })
        .collect();
    let doc = ScenarioDocument {
        id: id.to_owned(),
        name: scenario.name().to_owned(),
        etag: tag.clone(),
        steps,
    };
    let mut headers = HeaderMap::new();
    headers.insert(header::ETAG, HeaderValue::from_str(&tag).expect("hex etag is a valid header"));
    Ok((status, headers, Json(doc)).into_response())
}

async fn get_scenario(State(s): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let path = s.existing(&id, "scenario")?;
    scenario_response(&s, &id, &path, StatusCode::OK)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateScenario {
    name: String,
    refs: Vec<String>,
    /// Workspace id of the new file; derived from the name when absent.
    #[serde(default)]
    id: Option<String>,
}

fn slug(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    let out = out.trim_matches('-');
    if out.is_empty() {
        "scenario".to_owned()
    } else {
        out.to_owned()
    }
}

fn ref_paths(s: &Service, refs: &[String]) -> ApiResult<Vec<PathBuf>> {
    refs.iter().map(|r| s.existing(r, "viewpoint")).collect()
}

async fn create_scenario(State(s): State<Shared>, body: Result<Json<CreateScenario>, JsonRejection>) -> ApiResult<Response> {
    let Json(req) = body?;
    let id = match req.id {
        Some(id) => id,
        None => s.ws.id_of(&s.ws.scenario_dir().join(format!("{}.xml", slug(&req.name)))),
    };
    let path = s.ws.resolve(&id)?;
    let refs = ref_paths(&s, &req.refs)?;
    let mut scenario = Scenario::from_refs(&req.name, &refs)?;
    {
        let _guard = s.lock();
        if path.exists() {
            return Err(Error::Conflict(format!("scenario `{id}` already exists")).into());
        }
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|source| Error::Io {
                path: dir.to_owned(),
                source,
            })?;
        }
        scenario.save_xml(&path)?;
    }
    scenario_response(&s, &id, &path, StatusCode::CREATED)
}

#[derive(Deserialize)]
#[serde(tag = "op", rename_all = "lowercase", deny_unknown_fields)]
enum Edit {
    Insert {
        at: usize,
        #[serde(rename = "ref")]
        reference: String,
    },
    Move {
        from: usize,
        to: usize,
    },
    Remove {
        at: usize,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct UpdateScenario {
    #[serde(default)]
    name: Option<String>,
    /// Replaces the whole step list.
    #[serde(default)]
    refs: Option<Vec<String>>,
    /// Applied in order after `refs`.
    #[serde(default)]
    ops: Vec<Edit>,
}

async fn update_scenario(
    State(s): State<Shared>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
    body: Result<Json<UpdateScenario>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(req) = body?;
    let path = s.existing(&id, "scenario")?;
    {
        let _guard = s.lock();
        if let Some(expected) = headers.get(header::IF_MATCH) {
            let current = file_etag(&path)?;
            if expected.as_bytes() != current.as_bytes() && expected.as_bytes() != b"*" {
                return Err(ApiError::new(
                    StatusCode::CONFLICT,
                    "stale",
                    format!("scenario `{id}` changed since it was read"),
                ));
            }
        }
        let mut scenario = Scenario::load_xml(&path)?;
        if let Some(name) = &req.name {
            scenario.rename(name)?;
        }
        if let Some(refs) = &req.refs {
            scenario = Scenario::from_refs(scenario.name(), &ref_paths(&s, refs)?)?;
        }
        for op in &req.ops {
            match op {
                Edit::Insert { at, reference } => {
                    let target = s.existing(reference, "viewpoint")?;
                    scenario.insert_step(*at, &target)?;
                }
                Edit::Move { from, to } => scenario.move_step(*from, *to)?,
                Edit::Remove { at } => {
                    scenario.remove_step(*at)?;
                }
            }
        }
        scenario.save_xml(&path)?;
    }
    scenario_response(&s, &id, &path, StatusCode::OK)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GotoRequest {
    step: usize,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct GotoResponse {
    scenario: String,
    step: usize,
    steps: usize,
    viewpoint: String,
    summary: Summary,
    state: StateSummary,
}

async fn goto_step(
    State(s): State<Shared>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<GotoRequest>, JsonRejection>,
) -> ApiResult<Json<GotoResponse>> {
    let Json(req) = body?;
    let path = s.existing(&id, "scenario")?;
    let scenario = Scenario::load_xml(&path)?;
    let steps = scenario.len();
    let reference = s.ws.id_of(scenario.step(req.step)?);
    let mut player = Player::new(scenario);
    let mut state = s.lock();
    let vp = player.goto(req.step, &mut state)?;
    Ok(Json(GotoResponse {
        scenario: id,
        step: req.step,
        steps,
        viewpoint: reference,
        summary: vp.summary(Some(s.ws.areas())),
        state: engine::state_summary(&state),
    }))
}

async fn get_session(State(s): State<Shared>) -> Json<StateSummary> {
    Json(engine::state_summary(&s.lock()))
}
