//! HTTP API over read-only datasets loaded at startup.

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::fs;
use std::io::BufReader;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::{Body, Bytes};
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use futures::channel::mpsc;
use futures::StreamExt;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::{OwnedSemaphorePermit, Semaphore};
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::ahp::AffinityMatrix;
use crate::bip::{CostMode, SolverConfig};
use crate::cluster::similarity_tree;
use crate::domain::{EvaluationRecordStore, TaskDictionary, TaskId};
use crate::engine::{normalize, significance_test_with_progress, solve_affinity};
use crate::error::{Error, ErrorCode, Result};
use crate::sampler::SamplerConfig;
use crate::FORMAT_VERSION;

#[derive(Debug)]
pub struct SessionDataset {
    pub id: String,
    pub dict: TaskDictionary,
    pub affinity: AffinityMatrix,
    pub records: Option<EvaluationRecordStore>,
    /// Seconds since the Unix epoch.
    pub loaded_at: u64,
}

impl SessionDataset {
    /// Reads `dict.json` plus `affinity.json`, or `records.ndjson` to be
    /// normalized at every order it contains.
    pub fn load(id: impl Into<String>, dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))
        };
        let dict = TaskDictionary::from_json(&read("dict.json")?)?;
        let records_path = dir.join("records.ndjson");
        let records = if records_path.exists() {
            let file = fs::File::open(&records_path)
                .map_err(|e| Error::io(records_path.display().to_string(), e))?;
            Some(EvaluationRecordStore::read_ndjson(&dict, BufReader::new(file), false)?)
        } else {
            None
        };
        let affinity = if dir.join("affinity.json").exists() {
            AffinityMatrix::from_json(&read("affinity.json")?)?
        } else if let Some(store) = &records {
            let order = store.max_order().max(1);
            normalize(store, &dict, &SamplerConfig::with_max_order(order))?
        } else {
            AffinityMatrix::default()
        };
        if !affinity.is_empty() {
            affinity.validate(&dict)?;
        }
        let loaded_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Ok(SessionDataset {
            id: id.into(),
            dict,
            affinity,
            records,
            loaded_at,
        })
    }

    pub fn available_orders(&self) -> Vec<usize> {
        (1..=self.affinity.max_order().max(1)).collect()
    }

    fn summary(&self) -> serde_json::Value {
        json!({
            "id": self.id,
            "task_count": self.dict.len(),
            "source_count": self.dict.sources().count(),
            "target_count": self.dict.targets().count(),
            "available_orders": self.available_orders(),
        })
    }

    fn metadata(&self) -> serde_json::Value {
        let tasks: Vec<_> = self
            .dict
            .tasks()
            .iter()
            .map(|t| json!({"name": t.id, "source": t.is_source, "target": t.is_target}))
            .collect();
        let mut per_order: BTreeMap<usize, usize> = BTreeMap::new();
        let mut best = serde_json::Map::new();
        for (target, row) in self.affinity.targets() {
            for e in row {
                *per_order.entry(e.edge.order()).or_default() += 1;
            }
            if let Some(top) = row.iter().max_by(|a, b| a.p.total_cmp(&b.p)) {
                best.insert(
                    target.to_string(),
                    json!({"sources": top.edge.sources(), "p": top.p}),
                );
            }
        }
        let per_order: BTreeMap<String, usize> =
            per_order.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        json!({
            "format_version": FORMAT_VERSION,
            "id": self.id,
            "loaded_at": self.loaded_at,
            "tasks": tasks,
            "available_orders": self.available_orders(),
            "has_records": self.records.is_some(),
            "affinity": {
                "edge_count": self.affinity.edge_count(),
                "edges_per_order": per_order,
                "best_edge": best,
            },
        })
    }
}

/// Every subdirectory of `data_dir` holding a `dict.json`, keyed by its name.
pub fn load_datasets(data_dir: &Path) -> Result<BTreeMap<String, Arc<SessionDataset>>> {
    let entries = fs::read_dir(data_dir).map_err(|e| Error::io(data_dir.display().to_string(), e))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(data_dir.display().to_string(), e))?;
        let path = entry.path();
        if !path.join("dict.json").is_file() {
            continue;
        }
        let id = entry.file_name().to_string_lossy().into_owned();
        let dataset = SessionDataset::load(id.clone(), &path)?;
        log::info!("loaded dataset `{id}` ({} tasks)", dataset.dict.len());
        out.insert(id, Arc::new(dataset));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveRequest {
    pub budget: f64,
    #[serde(default = "one")]
    pub max_order: usize,
    #[serde(default)]
    pub importance: BTreeMap<TaskId, f64>,
    #[serde(default)]
    pub costs: BTreeMap<TaskId, f64>,
    #[serde(default)]
    pub cost_mode: CostMode,
}

fn one() -> usize {
    1
}

impl SolveRequest {
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            budget: self.budget,
            importance: self.importance.clone(),
            costs: self.costs.clone(),
            cost_mode: self.cost_mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignificanceRequest {
    pub budget: f64,
    #[serde(default = "one")]
    pub max_order: usize,
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub importance: BTreeMap<TaskId, f64>,
    #[serde(default)]
    pub costs: BTreeMap<TaskId, f64>,
    #[serde(default)]
    pub cost_mode: CostMode,
    /// Stream newline-delimited progress lines before the report.
    #[serde(default)]
    pub stream: bool,
}

#[derive(Clone)]
pub struct AppState {
    datasets: Arc<BTreeMap<String, Arc<SessionDataset>>>,
    solves: Arc<Semaphore>,
}

impl AppState {
    pub fn new(datasets: BTreeMap<String, Arc<SessionDataset>>, max_concurrent: usize) -> Self {
        AppState {
            datasets: Arc::new(datasets),
            solves: Arc::new(Semaphore::new(max_concurrent.max(1))),
        }
    }

    /// Takes a solve slot if one is free. It is released when the permit drops.
    pub fn try_reserve_solve(&self) -> Option<OwnedSemaphorePermit> {
        self.solves.clone().try_acquire_owned().ok()
    }

    fn dataset(&self, id: &str) -> Result<Arc<SessionDataset>, ApiError> {
        self.datasets.get(id).cloned().ok_or_else(|| ApiError {
            status: StatusCode::NOT_FOUND,
            code: "NOT_FOUND",
            message: format!("unknown dataset `{id}`"),
        })
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let code = e.code();
        let status = match code {
            ErrorCode::Infeasible => StatusCode::CONFLICT,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError {
            status,
            code: code.as_str(),
            message: e.to_string(),
        }
    }
}

fn error_body(code: &str, message: &str) -> serde_json::Value {
    json!({
        "format_version": FORMAT_VERSION,
        "error": {"code": code, "message": format!("E:{code}: {message}")},
    })
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        json_response(self.status, error_body(self.code, &self.message).to_string() + "\n")
    }
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::from(Error::json("request body", e)))
}

async fn run_limited<T: Send + 'static>(
    state: &AppState,
    job: impl FnOnce() -> Result<T> + Send + 'static,
) -> Result<T, ApiError> {
    let permit = state.solves.clone().try_acquire_owned().map_err(|_| ApiError {
        status: StatusCode::SERVICE_UNAVAILABLE,
        code: "BUSY",
        message: "too many concurrent solves".into(),
    })?;
    let out = tokio::task::spawn_blocking(move || {
        let _permit = permit;
        job()
    })
    .await
    .map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        code: "INTERNAL",
        message: e.to_string(),
    })?;
    out.map_err(ApiError::from)
}

async fn list_datasets(State(state): State<AppState>) -> Response {
    let list: Vec<_> = state.datasets.values().map(|d| d.summary()).collect();
    let body = json!({"format_version": FORMAT_VERSION, "datasets": list});
    json_response(StatusCode::OK, serde_json::to_string_pretty(&body).unwrap() + "\n")
}

async fn dataset_metadata(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Response, ApiError> {
    let d = state.dataset(&id)?;
    Ok(json_response(StatusCode::OK, serde_json::to_string_pretty(&d.metadata()).unwrap() + "\n"))
}

async fn dataset_affinity(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Response, ApiError> {
    let d = state.dataset(&id)?;
    Ok(json_response(StatusCode::OK, d.affinity.to_json()))
}

async fn dataset_tree(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Response, ApiError> {
    let d = state.dataset(&id)?;
    let tree = similarity_tree(&d.affinity)?;
    let body = json!({
        "format_version": FORMAT_VERSION,
        "newick": tree.to_newick().trim_end(),
        "dendrogram": tree,
    });
    Ok(json_response(StatusCode::OK, serde_json::to_string_pretty(&body).unwrap() + "\n"))
}

async fn solve_dataset(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let d = state.dataset(&id)?;
    let req: SolveRequest = parse_body(&body)?;
    let text = run_limited(&state, move || {
        solve_affinity(&d.affinity, &d.dict, req.max_order, &req.solver_config()).map(|t| t.to_json())
    })
    .await?;
    Ok(json_response(StatusCode::OK, text))
}

async fn significance_dataset(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let d = state.dataset(&id)?;
    let req: SignificanceRequest = parse_body(&body)?;
    let cfg = SolverConfig {
        budget: req.budget,
        importance: req.importance.clone(),
        costs: req.costs.clone(),
        cost_mode: req.cost_mode,
    };
    if !req.stream {
        let text = run_limited(&state, move || {
            significance_test_with_progress(&d.affinity, &d.dict, req.max_order, &cfg, req.samples, req.seed, |_| {})
                .map(|r| r.to_json())
        })
        .await?;
        return Ok(json_response(StatusCode::OK, text));
    }

    // Fail fast on parameters and feasibility before committing to a 200.
    let check = (d.clone(), cfg.clone(), req.max_order);
    run_limited(&state, move || solve_affinity(&check.0.affinity, &check.0.dict, check.2, &check.1).map(|_| ()))
        .await?;
    let permit = state.solves.clone().try_acquire_owned().map_err(|_| ApiError {
        status: StatusCode::SERVICE_UNAVAILABLE,
        code: "BUSY",
        message: "too many concurrent solves".into(),
    })?;
    let (tx, rx) = mpsc::unbounded::<String>();
    tokio::task::spawn_blocking(move || {
        let _permit = permit;
        let total = req.samples;
        let progress_tx = tx.clone();
        let result = significance_test_with_progress(
            &d.affinity,
            &d.dict,
            req.max_order,
            &cfg,
            req.samples,
            req.seed,
            |done| {
                let _ = progress_tx.unbounded_send(json!({"progress": done, "total": total}).to_string() + "\n");
            },
        );
        let last = match result {
            Ok(report) => json!({"report": report}),
            Err(e) => error_body(e.code().as_str(), &e.to_string()),
        };
        let _ = tx.unbounded_send(last.to_string() + "\n");
    });
    let stream = rx.map(|line| Ok::<_, Infallible>(Bytes::from(line)));
    Ok((
        StatusCode::OK,
        [(header::CONTENT_TYPE, "application/x-ndjson")],
        Body::from_stream(stream),
    )
        .into_response())
}

/// Routes with CORS for `cors_origin` (any origin when `None`).
pub fn router(state: AppState, cors_origin: Option<&str>) -> Result<Router> {
    let origin = match cors_origin {
        None => AllowOrigin::any(),
        Some(o) => AllowOrigin::exact(
            HeaderValue::from_str(o).map_err(|_| Error::InvalidConfig(format!("bad CORS origin `{o}`")))?,
        ),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    Ok(Router::new()
        .route("/datasets", get(list_datasets))
        .route("/datasets/{id}", get(dataset_metadata))
        .route("/datasets/{id}/affinity", get(dataset_affinity))
        .route("/datasets/{id}/tree", get(dataset_tree))
        .route("/datasets/{id}/solve", post(solve_dataset))
        .route("/datasets/{id}/significance", post(significance_dataset))
        .layer(cors)
        .with_state(state))
}

/// Loads every dataset under `data_dir` and serves until the process ends.
pub async fn serve(
    addr: SocketAddr,
    data_dir: &Path,
    max_concurrent: usize,
    cors_origin: Option<&str>,
) -> Result<()> {
    let datasets = load_datasets(data_dir)?;
    let app = router(AppState::new(datasets, max_concurrent), cors_origin)?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(addr.to_string(), e))?;
    log::info!("listening on {addr}");
    axum::serve(listener, app)
        .await
        .map_err(|e| Error::io("server", e))
}
