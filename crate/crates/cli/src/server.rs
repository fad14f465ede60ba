// Copyright 2020 Alibaba Group Holding Limited.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! HTTP/JSON service over persistent sessions.
//!
//! Every engine call runs on the blocking pool. Requests against different
//! sessions proceed concurrently; derives within one session serialize on
//! its write lock. Errors come back as `{"error": {"code", "message"}}`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hyperbi_core::analysis::AnalysisSpec;
use hyperbi_core::join::JoinCondition;
use hyperbi_core::rng::fresh_seed;
use hyperbi_core::session::{NodeId, Operator, Session, SESSION_FILE};
use hyperbi_core::view::full_columns;
use hyperbi_core::{load_graph, Error, ErrorKind, GraphFiles, PropertyGraph, QueryGraph};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::Config;

const DEFAULT_PAGE: usize = 100;
const MAX_PAGE: usize = 10_000;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code: "bad_request".into(),
            message: message.into(),
        }
    }

    fn not_found(code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::NOT_FOUND,
            code: code.into(),
            message: message.into(),
        }
    }

    fn conflict(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::CONFLICT,
            code: "conflict".into(),
            message: message.into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "internal".into(),
            message: message.into(),
        }
    }

    fn body(&self) -> Value {
        json!({ "error": { "code": self.code, "message": self.message } })
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e.kind() {
            ErrorKind::Validation => StatusCode::BAD_REQUEST,
            ErrorKind::NotFound => StatusCode::NOT_FOUND,
            ErrorKind::Conflict => StatusCode::CONFLICT,
            ErrorKind::Engine => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError {
            status,
            code: e.code().into(),
            message: e.to_string(),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body())).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

#[derive(Debug, Clone)]
enum Job {
    Running,
    Done(Value),
    Failed(Value),
}

pub struct AppState {
    pub config: Config,
    catalog: RwLock<BTreeMap<String, Arc<PropertyGraph>>>,
    sessions: RwLock<BTreeMap<String, Arc<RwLock<Session>>>>,
    jobs: Mutex<HashMap<u64, Job>>,
    next_job: AtomicU64,
}

pub type SharedState = Arc<AppState>;

fn sessions_dir(config: &Config) -> PathBuf {
    config.persistence_root.join("sessions")
}

/// State with every session found under the persistence root reloaded;
/// their graphs seed the catalog.
pub fn open_state(config: Config) -> hyperbi_core::Result<SharedState> {
    let mut catalog = BTreeMap::new();
    let mut sessions = BTreeMap::new();
    let dir = sessions_dir(&config);
    if dir.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::Io {
                path: dir.clone(),
                source: e,
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(SESSION_FILE).exists())
            .collect();
        entries.sort();
        for path in entries {
            let s = Session::load_with(&path, config.session_config())?;
            for name in s.graph_names() {
                catalog.entry(name.to_string()).or_insert_with(|| s.graph(name).expect("listed").clone());
            }
            sessions.insert(s.id().to_string(), Arc::new(RwLock::new(s)));
        }
    }
    Ok(Arc::new(AppState {
        config,
        catalog: RwLock::new(catalog),
        sessions: RwLock::new(sessions),
        jobs: Mutex::new(HashMap::new()),
        next_job: AtomicU64::new(1),
    }))
}

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/graphs", post(create_graph).get(list_graphs))
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}/tree", get(get_tree))
        .route("/sessions/{id}/source", post(post_source))
        .route("/sessions/{id}/join", post(post_join))
        .route("/sessions/{id}/dedup", post(post_dedup))
        .route("/sessions/{id}/nodes/{node}/view", get(get_view))
        .route("/sessions/{id}/nodes/{node}/analyze", post(post_analyze))
        .route("/jobs/{id}", get(get_job))
        .with_state(state)
}

/// Binds `0.0.0.0:<port>` and serves until interrupted.
pub async fn serve(config: Config) -> std::io::Result<()> {
    let port = config.port;
    let state = open_state(config).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> ApiResult<T> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn lookup_session(state: &AppState, id: &str) -> ApiResult<Arc<RwLock<Session>>> {
    state
        .sessions
        .read()
        .unwrap_or_else(|p| p.into_inner())
        .get(id)
        .cloned()
        .ok_or_else(|| ApiError::not_found("unknown_session", format!("unknown session `{id}`")))
}

fn parse_node(raw: &str) -> ApiResult<NodeId> {
    raw.parse()
        .map_err(|_| ApiError::bad_request(format!("node id `{raw}` is not a non-negative integer")))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphRequest {
    name: String,
    vertex_files: Vec<PathBuf>,
    #[serde(default)]
    edge_files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct GraphInfo {
    name: String,
    vertex_count: usize,
    edge_count: usize,
    labels: BTreeMap<String, usize>,
}

fn graph_info(g: &PropertyGraph) -> GraphInfo {
    GraphInfo {
        name: g.name().to_string(),
        vertex_count: g.vertex_count(),
        edge_count: g.edge_count(),
        labels: g.vertex_labels().map(|(l, n)| (l.to_string(), n)).collect(),
    }
}

async fn create_graph(
    State(state): State<SharedState>,
    body: Result<Json<GraphRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<GraphInfo>)> {
    let Json(req) = body?;
    if req.vertex_files.is_empty() {
        return Err(ApiError::bad_request("vertex_files must not be empty"));
    }
    blocking(move || {
        let files = GraphFiles {
            vertex_files: req.vertex_files,
            edge_files: req.edge_files,
        };
        if let Some(g) = state.catalog.read().unwrap_or_else(|p| p.into_inner()).get(&req.name) {
            if g.files() == &files {
                return Ok((StatusCode::OK, Json(graph_info(g))));
            }
            return Err(ApiError::conflict(format!("graph `{}` is already loaded from other files", req.name)));
        }
        let g = Arc::new(load_graph(&req.name, &files)?);
        let mut catalog = state.catalog.write().unwrap_or_else(|p| p.into_inner());
        let g = catalog.entry(req.name.clone()).or_insert(g);
        Ok((StatusCode::CREATED, Json(graph_info(g))))
    })
    .await
}

async fn list_graphs(State(state): State<SharedState>) -> Json<Value> {
    let catalog = state.catalog.read().unwrap_or_else(|p| p.into_inner());
    let graphs: Vec<GraphInfo> = catalog.values().map(|g| graph_info(g)).collect();
    Json(json!({ "graphs": graphs }))
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SessionRequest {
    #[serde(default)]
    id: Option<String>,
}

fn valid_session_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

async fn create_session(State(state): State<SharedState>, body: Bytes) -> ApiResult<(StatusCode, Json<Value>)> {
    let req: SessionRequest = if body.iter().all(u8::is_ascii_whitespace) {
        SessionRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?
    };
    let id = req.id.unwrap_or_else(|| format!("s{:013x}", fresh_seed()));
    if !valid_session_id(&id) {
        return Err(ApiError::bad_request("session ids use 1-64 characters from [A-Za-z0-9_-]"));
    }
    blocking(move || {
        let mut sessions = state.sessions.write().unwrap_or_else(|p| p.into_inner());
        if sessions.contains_key(&id) {
            return Err(ApiError::conflict(format!("session `{id}` already exists")));
        }
        let dir = sessions_dir(&state.config).join(&id);
        let s = Session::persistent(id.clone(), dir)?.with_config(state.config.session_config());
        let version = s.version();
        sessions.insert(id.clone(), Arc::new(RwLock::new(s)));
        Ok((StatusCode::CREATED, Json(json!({ "session_id": id, "version": version }))))
    })
    .await
}

async fn list_sessions(State(state): State<SharedState>) -> Json<Value> {
    let ids: Vec<String> = state.sessions.read().unwrap_or_else(|p| p.into_inner()).keys().cloned().collect();
    Json(json!({ "sessions": ids }))
}

async fn get_tree(State(state): State<SharedState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let session = lookup_session(&state, &id)?;
    let s = session.read().unwrap_or_else(|p| p.into_inner());
    Ok(Json(json!({
        "session_id": id,
        "version": s.version(),
        "nodes": s.list_tree(),
    })))
}

#[derive(Serialize)]
struct DeriveResponse {
    node_id: NodeId,
    reused: bool,
    hyperedge_count: usize,
    scale_factor: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    exact: bool,
    version: u64,
}

/// Runs one derive, synchronously or as a polled job.
async fn run_derive(
    state: SharedState,
    id: String,
    op: Operator,
    parents: Vec<NodeId>,
    if_version: Option<u64>,
    run_async: bool,
) -> ApiResult<Response> {
    let session = lookup_session(&state, &id)?;
    let catalog_state = state.clone();
    let work = move || -> ApiResult<(bool, DeriveResponse)> {
        let mut s = session.write().unwrap_or_else(|p| p.into_inner());
        if let Operator::Source { graph, .. } = &op {
            if s.graph(graph).is_err() {
                let g = catalog_state.catalog.read().unwrap_or_else(|p| p.into_inner()).get(graph).cloned();
                s.register_graph(g.ok_or_else(|| Error::UnknownGraph(graph.clone()))?)?;
            }
        }
        let sampled = op.is_sampled();
        let out = s.derive_if_version(op, &parents, if_version)?;
        let node = s.node(out.node_id)?;
        let resp = DeriveResponse {
            node_id: out.node_id,
            reused: out.reused,
            hyperedge_count: node.hyperedge_count,
            scale_factor: node.scale_factor,
            seed: out.seed,
            exact: !sampled,
            version: s.version(),
        };
        Ok((out.reused, resp))
    };
    if !run_async {
        let (reused, resp) = blocking(work).await?;
        let status = if reused { StatusCode::OK } else { StatusCode::CREATED };
        return Ok((status, Json(resp)).into_response());
    }
    let job = state.next_job.fetch_add(1, Ordering::Relaxed);
    state.jobs.lock().unwrap_or_else(|p| p.into_inner()).insert(job, Job::Running);
    let jobs_state = state.clone();
    tokio::spawn(async move {
        let outcome = match blocking(work).await {
            Ok((_, resp)) => Job::Done(serde_json::to_value(resp).expect("derive responses serialize")),
            Err(e) => Job::Failed(json!({ "status": e.status.as_u16(), "code": e.code, "message": e.message })),
        };
        jobs_state.jobs.lock().unwrap_or_else(|p| p.into_inner()).insert(job, outcome);
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": job, "status": "running" }))).into_response())
}

#[derive(Deserialize)]
#[serde(rename_all = "lowercase")]
enum Mode {
    Exact,
    Sampled,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceRequest {
    graph: String,
    query: QueryGraph,
    #[serde(default)]
    mode: Option<Mode>,
    #[serde(default)]
    trials: Option<u64>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    dedup: bool,
    #[serde(default)]
    if_version: Option<u64>,
    #[serde(default, rename = "async")]
    run_async: bool,
}

async fn post_source(
    State(state): State<SharedState>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<SourceRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(req) = body?;
    let trials = match (req.mode, req.trials) {
        (Some(Mode::Exact), Some(_)) => return Err(ApiError::bad_request("exact mode takes no trials")),
        (Some(Mode::Exact), None) | (None, None) => None,
        (_, Some(0)) => return Err(ApiError::bad_request("trials must be positive")),
        (_, Some(t)) => Some(t),
        (Some(Mode::Sampled), None) => Some(state.config.default_trials),
    };
    let op = Operator::Source {
        graph: req.graph,
        query: req.query,
        trials,
        seed: req.seed,
        dedup: req.dedup,
    };
    run_derive(state, id, op, Vec::new(), req.if_version, req.run_async).await
}

/// A join condition given as `"a.k=b.k;..."` or as `[{"left","right"}]`.
#[derive(Deserialize)]
#[serde(untagged)]
enum ConditionSpec {
    Text(String),
    Pairs(JoinCondition),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JoinRequest {
    left: NodeId,
    right: NodeId,
    #[serde(default)]
    condition: Option<ConditionSpec>,
    #[serde(default)]
    r: Option<u64>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    if_version: Option<u64>,
    #[serde(default, rename = "async")]
    run_async: bool,
}

async fn post_join(
    State(state): State<SharedState>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<JoinRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(req) = body?;
    let condition = match req.condition {
        None => JoinCondition::default(),
        Some(ConditionSpec::Text(t)) => JoinCondition::parse(&t)?,
        Some(ConditionSpec::Pairs(c)) => c,
    };
    if req.r == Some(0) {
        return Err(ApiError::bad_request("r must be positive"));
    }
    let op = Operator::Join {
        condition,
        r: req.r,
        seed: req.seed,
    };
    run_derive(state, id, op, vec![req.left, req.right], req.if_version, req.run_async).await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DedupRequest {
    parent: NodeId,
    #[serde(default)]
    if_version: Option<u64>,
    #[serde(default, rename = "async")]
    run_async: bool,
}

async fn post_dedup(
    State(state): State<SharedState>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<DedupRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(req) = body?;
    run_derive(state, id, Operator::Dedup, vec![req.parent], req.if_version, req.run_async).await
}

#[derive(Deserialize)]
struct ViewParams {
    limit: Option<usize>,
    offset: Option<usize>,
    /// Comma-separated column names, or `full`.
    columns: Option<String>,
}

async fn get_view(
    State(state): State<SharedState>,
    UrlPath((id, node)): UrlPath<(String, String)>,
    params: Result<Query<ViewParams>, QueryRejection>,
) -> ApiResult<Json<Value>> {
    let Query(p) = params?;
    let node = parse_node(&node)?;
    let limit = p.limit.unwrap_or(DEFAULT_PAGE).min(MAX_PAGE);
    let offset = p.offset.unwrap_or(0);
    let session = lookup_session(&state, &id)?;
    blocking(move || {
        let s = session.read().unwrap_or_else(|p| p.into_inner());
        let columns: Option<Vec<String>> = match p.columns.as_deref() {
            None | Some("") => None,
            Some("full") => Some(full_columns(&*s.hypergraph(node)?)),
            Some(c) => Some(c.split(',').map(|x| x.trim().to_string()).collect()),
        };
        let v = s.view(node, columns.as_deref(), offset, limit)?;
        Ok(Json(json!({
            "node_id": node,
            "offset": offset,
            "limit": limit,
            "total_rows": v.total_rows,
            "scale_factor": v.scale_factor,
            "columns": v.columns,
            "rows": v.rows,
        })))
    })
    .await
}

/// Body is an analysis spec; the response body is the result table JSON,
/// byte for byte what the script runner writes to a `.json` target.
async fn post_analyze(
    State(state): State<SharedState>,
    UrlPath((id, node)): UrlPath<(String, String)>,
    body: Result<Json<AnalysisSpec>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(spec) = body?;
    let node = parse_node(&node)?;
    let session = lookup_session(&state, &id)?;
    let text = blocking(move || {
        let s = session.read().unwrap_or_else(|p| p.into_inner());
        Ok(s.analyze(node, &spec)?.to_json())
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], text).into_response())
}

async fn get_job(State(state): State<SharedState>, UrlPath(job): UrlPath<String>) -> ApiResult<Json<Value>> {
    let job: u64 = job
        .parse()
        .map_err(|_| ApiError::bad_request(format!("job id `{job}` is not an integer")))?;
    let jobs = state.jobs.lock().unwrap_or_else(|p| p.into_inner());
    let body = match jobs.get(&job) {
        None => return Err(ApiError::not_found("unknown_job", format!("unknown job {job}"))),
        Some(Job::Running) => json!({ "job_id": job, "status": "running" }),
        Some(Job::Done(v)) => json!({ "job_id": job, "status": "done", "result": v }),
        Some(Job::Failed(e)) => json!({ "job_id": job, "status": "failed", "error": e }),
    };
    Ok(Json(body))
}

/// Session directory for `id` under the configured root.
pub fn session_dir(config: &Config, id: &str) -> PathBuf {
    sessions_dir(config).join(id)
}
