//! JSON HTTP service for the review UI.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::atomic::AtomicBool;
use std::sync::{Arc, Mutex};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as JsonValue};

use crate::error::Error;
use crate::lang::{ClauseError, ClauseKind, ContractClause, NormalizeError};
use crate::llm::Provider;
use crate::pipeline::{AutoApprove, Pipeline, PipelineOptions, RunState, StoreWaiting};
use crate::registry::{Actor, ContractRecord, ContractStatus, Decision, RegistryError};
use crate::store::Store;
use crate::trace::{NodeRef, Task};

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    /// Absent when no provider is configured; run requests then fail with 422.
    pub provider: Option<Arc<dyn Provider>>,
    pub options: PipelineOptions,
    active_run: Arc<Mutex<Option<String>>>,
    cancel: Arc<AtomicBool>,
}

impl AppState {
    pub fn new(store: Arc<Store>, provider: Option<Arc<dyn Provider>>, options: PipelineOptions) -> Self {
        AppState {
            store,
            provider,
            options,
            active_run: Arc::new(Mutex::new(None)),
            cancel: Arc::new(AtomicBool::new(false)),
        }
    }
}

pub struct ApiError(Error);

impl<E: Into<Error>> From<E> for ApiError {
    fn from(e: E) -> Self {
        ApiError(e.into())
    }
}

fn normalize_detail(e: &NormalizeError) -> JsonValue {
    match e {
        NormalizeError::Syntax(s) => json!({"offset": s.offset, "expected": s.expected, "found": s.found}),
        NormalizeError::Unsupported { idiom, offset } => json!({"offset": offset, "idiom": idiom}),
    }
}

fn clause_detail(e: &ClauseError) -> JsonValue {
    match e {
        ClauseError::Normalize(n) => normalize_detail(n),
        other => json!({"rule": other.to_string()}),
    }
}

/// Structured detail for validation failures, so a client can point at
/// the offending spot.
fn detail(e: &Error) -> Option<JsonValue> {
    match e {
        Error::Normalize(n) => Some(normalize_detail(n)),
        Error::Clause(c) | Error::Registry(RegistryError::Parse(c)) => Some(clause_detail(c)),
        Error::Registry(RegistryError::InvalidClause { index, source }) => {
            let mut d = clause_detail(source);
            d["index"] = json!(index);
            Some(d)
        }
        Error::Registry(RegistryError::IllegalTransition { contract_id, from, to }) => {
            Some(json!({"contract_id": contract_id, "from": from, "to": to}))
        }
        _ => None,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let mut body = json!({"error": {"class": self.0.class(), "message": self.0.to_string()}});
        if let Some(d) = detail(&self.0) {
            body["error"]["detail"] = d;
        }
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Malformed request bodies get the same error envelope as everything else.
fn json_body<T>(json: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    json.map(|Json(b)| b).map_err(|r| Error::Usage(r.body_text()).into())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/tasks", get(list_tasks))
        .route("/api/tasks/{task}/report", get(task_report))
        .route("/api/contracts", get(list_contracts))
        .route("/api/contracts/{id}", get(get_contract))
        .route("/api/contracts/{id}/review", post(review_contract))
        .route("/api/contracts/{id}/revise", post(revise_contract))
        .route("/api/validate", post(validate))
        .route("/api/lineage/{id}", get(lineage))
        .route("/api/reports/{id}", get(get_report))
        .route("/api/integrity", get(integrity))
        .route("/api/runs", get(list_runs).post(start_run))
        .route("/api/runs/{id}", get(get_run))
        .with_state(state)
}

pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

#[derive(Serialize)]
struct TaskView {
    #[serde(flatten)]
    task: Task,
    contracts: BTreeMap<String, usize>,
    pending_review: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    latest_report: Option<String>,
}

async fn list_tasks(State(s): State<AppState>) -> Json<Vec<TaskView>> {
    Json(s.store.read(|p| {
        let mut tasks: Vec<&Task> = p.tasks.iter().collect();
        tasks.sort_by_key(|t| (&t.intent_id, t.order_index));
        tasks
            .into_iter()
            .map(|t| {
                let mut contracts = BTreeMap::new();
                for c in p.contracts.iter().filter(|c| c.task_id == t.task_id) {
                    *contracts.entry(c.status.to_string()).or_insert(0) += 1;
                }
                TaskView {
                    task: t.clone(),
                    contracts,
                    pending_review: p.pending_review(Some(&t.task_id)).len(),
                    latest_report: p.latest_report(&t.task_id).map(|r| r.report_id.clone()),
                }
            })
            .collect()
    }))
}

#[derive(Serialize)]
struct ContractView {
    #[serde(flatten)]
    record: ContractRecord,
    task_title: String,
    normalized_text: String,
    superseded: bool,
}

fn contract_view(p: &crate::project::Project, record: &ContractRecord) -> ContractView {
    ContractView {
        record: record.clone(),
        task_title: p.task(&record.task_id).map(|t| t.title.clone()).unwrap_or_default(),
        normalized_text: record.clause.normalized_text(),
        superseded: p.is_superseded(&record.contract_id),
    }
}

#[derive(Deserialize)]
struct ContractFilter {
    status: Option<String>,
    task: Option<String>,
}

async fn list_contracts(
    State(s): State<AppState>,
    f: Result<Query<ContractFilter>, QueryRejection>,
) -> ApiResult<Json<Vec<ContractView>>> {
    let Query(f) = f.map_err(|r| Error::Usage(r.body_text()))?;
    let status = match f.status.as_deref() {
        None | Some("") => None,
        Some(text) => Some(
            ContractStatus::parse(text).ok_or_else(|| Error::Usage(format!("unknown status `{text}`")))?,
        ),
    };
    Ok(Json(s.store.read(|p| {
        p.contracts
            .iter()
            .filter(|c| status.is_none_or(|st| c.status == st))
            .filter(|c| f.task.as_deref().is_none_or(|t| c.task_id == t))
            .map(|c| contract_view(p, c))
            .collect()
    })))
}

async fn get_contract(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<ContractView>> {
    s.store
        .read(|p| p.contract(&id).map(|c| contract_view(p, c)))
        .map(Json)
        .ok_or_else(|| Error::Registry(RegistryError::UnknownContract(id)).into())
}

#[derive(Deserialize)]
struct ReviewBody {
    decision: Decision,
    #[serde(default)]
    note: Option<String>,
}

async fn review_contract(
    State(s): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<ReviewBody>, JsonRejection>,
) -> ApiResult<Json<ContractView>> {
    let body = json_body(body)?;
    let record = s.store.write(|p| p.review(&id, body.decision, body.note, Actor::Human).map_err(Error::from))?;
    Ok(Json(s.store.read(|p| contract_view(p, &record))))
}

#[derive(Deserialize)]
struct ReviseBody {
    text: String,
    #[serde(default)]
    note: Option<String>,
}

async fn revise_contract(
    State(s): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<ReviseBody>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<ContractView>)> {
    let body = json_body(body)?;
    let record = s.store.write(|p| p.revise(&id, &body.text, body.note).map_err(Error::from))?;
    Ok((StatusCode::CREATED, Json(s.store.read(|p| contract_view(p, &record)))))
}

#[derive(Deserialize)]
struct ValidateBody {
    text: String,
    #[serde(default)]
    kind: Option<ClauseKind>,
    #[serde(default)]
    element: Option<String>,
}

/// Parse-checks clause text without storing anything.
async fn validate(body: Result<Json<ValidateBody>, JsonRejection>) -> ApiResult<Json<JsonValue>> {
    let body = json_body(body)?;
    let kind = body.kind.unwrap_or(ClauseKind::Postcondition);
    let clause = ContractClause::new("validate", kind, body.element.as_deref().unwrap_or("-"), &body.text)?;
    Ok(Json(json!({"ok": true, "normalized_text": clause.normalized_text()})))
}

async fn lineage(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<crate::trace::Lineage>> {
    let lineage = s.store.read(|p| {
        let node: NodeRef =
            p.resolve_node(&id).ok_or_else(|| Error::Trace(crate::trace::TraceError::UnknownNode(id.clone())))?;
        p.lineage(&node).map_err(Error::from)
    })?;
    Ok(Json(lineage))
}

async fn task_report(State(s): State<AppState>, Path(task): Path<String>) -> ApiResult<Json<crate::checker::ViolationReport>> {
    s.store.read(|p| {
        let task = p.find_task(&task).ok_or_else(|| Error::NotFound(format!("unknown task `{task}`")))?;
        p.latest_report(&task.task_id)
            .cloned()
            .map(Json)
            .ok_or_else(|| Error::NotFound(format!("no report for task `{}`", task.key)).into())
    })
}

async fn get_report(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<crate::checker::ViolationReport>> {
    s.store
        .read(|p| p.report(&id).cloned())
        .map(Json)
        .ok_or_else(|| Error::NotFound(format!("unknown report `{id}`")).into())
}

async fn integrity(State(s): State<AppState>) -> Json<JsonValue> {
    let defects = s.store.read(|p| p.check_integrity());
    Json(json!({"clean": defects.is_empty(), "defects": defects}))
}

#[derive(Serialize)]
struct RunSummary {
    run_id: String,
    intent_text: String,
    state: RunState,
    #[serde(skip_serializing_if = "Option::is_none")]
    terminal_status: Option<crate::pipeline::TerminalStatus>,
    #[serde(skip_serializing_if = "Option::is_none")]
    phase: Option<crate::pipeline::Phase>,
}

async fn list_runs(State(s): State<AppState>) -> Json<Vec<RunSummary>> {
    Json(s.store.read(|p| {
        p.runs
            .iter()
            .map(|r| RunSummary {
                run_id: r.run_id.clone(),
                intent_text: r.intent_text.clone(),
                state: r.state,
                terminal_status: r.terminal_status,
                phase: r.current_phase().map(|ph| ph.phase),
            })
            .collect()
    }))
}

async fn get_run(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<crate::pipeline::PipelineRun>> {
    s.store
        .read(|p| p.run(&id).cloned())
        .map(Json)
        .ok_or_else(|| Error::NotFound(format!("unknown run `{id}`")).into())
}

#[derive(Deserialize)]
struct RunBody {
    intent: String,
    /// Approve proposed contracts automatically instead of waiting for
    /// review through this service.
    #[serde(default)]
    auto_approve: bool,
}

/// Starts a pipeline run in the background; poll `/api/runs/{id}`.
async fn start_run(State(s): State<AppState>, body: Result<Json<RunBody>, JsonRejection>) -> ApiResult<(StatusCode, Json<JsonValue>)> {
    let body = json_body(body)?;
    let provider = s
        .provider
        .clone()
        .ok_or_else(|| Error::Usage("no provider configured for this service".into()))?;
    let mut active = s.active_run.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(run_id) = active.as_ref() {
        // The stored state turns finished just before the worker lets go.
        let running = s.store.read(|p| p.run(run_id).is_some_and(|r| r.state == RunState::Running));
        if running {
            return Err(Error::Conflict(format!("run {run_id} is still in progress")).into());
        }
    }
    let run_id = Pipeline::new(&s.store, provider.as_ref(), s.options.clone()).begin(&body.intent)?;
    *active = Some(run_id.clone());
    drop(active);

    let state = s.clone();
    let id = run_id.clone();
    std::thread::spawn(move || {
        let pipeline = Pipeline::new(&state.store, provider.as_ref(), state.options.clone());
        let result = if body.auto_approve {
            pipeline.execute(&id, &mut AutoApprove)
        } else {
            pipeline.execute(&id, &mut StoreWaiting::new(state.cancel.clone()))
        };
        if let Err(e) = result {
            eprintln!("run {id}: {e}");
        }
        let mut active = state.active_run.lock().unwrap_or_else(|e| e.into_inner());
        if active.as_deref() == Some(id.as_str()) {
            *active = None;
        }
    });
    Ok((StatusCode::ACCEPTED, Json(json!({"run_id": run_id}))))
}
