use std::cmp::Ordering;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use objevo_agents::events::EventRecord;
use objevo_agents::gates::{ApprovalGate, GateResolution};
use objevo_agents::store::{IterationRecord, RunDir};
use objevo_agents::{AgentError, RunConfig, RunState};
use objevo_core::model::{Candidate, Direction};
use objevo_core::ScoringFunctionDescriptor;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{ApiError, ApiResult};
use crate::runs::RunSummary;
use crate::SharedState;

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/runs", post(create_run).get(list_runs))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/iterations/{k}", get(get_iteration))
        .route("/runs/{id}/iterations/{k}/population", get(get_population))
        .route("/runs/{id}/gates", get(list_gates))
        .route("/runs/{id}/gates/{gate_id}", post(resolve_gate))
        .route("/runs/{id}/events", get(get_events))
        .route("/runs/{id}/abort", post(abort_run))
        .route("/registry", get(registry))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state)
}

async fn require_token(State(state): State<SharedState>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == token);
        if !ok {
            return ApiError::new(
                StatusCode::UNAUTHORIZED,
                "unauthorized",
                "missing or invalid bearer token",
            )
            .into_response();
        }
    }
    next.run(req).await
}

/// Parses a JSON body, reporting the path of the offending field.
fn parse_body<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        ApiError::bad_request(format!("invalid request body: {}", e.inner())).with_details(json!({ "field": field }))
    })
}

/// Config validation messages start with the offending field.
fn config_error(e: AgentError) -> ApiError {
    match e {
        AgentError::Config(msg) => {
            let field = msg.split_once(": ").map(|(f, _)| f.to_string()).unwrap_or_default();
            ApiError::new(StatusCode::BAD_REQUEST, "invalid_config", msg).with_details(json!({ "field": field }))
        }
        other => other.into(),
    }
}

async fn create_run(State(state): State<SharedState>, body: Bytes) -> ApiResult<(StatusCode, Json<RunSummary>)> {
    let cfg: RunConfig = parse_body(&body)?;
    cfg.validate().map_err(config_error)?;
    let summary = state.runs.create(cfg)?;
    Ok((StatusCode::CREATED, Json(summary)))
}

async fn list_runs(State(state): State<SharedState>) -> ApiResult<Json<Vec<RunSummary>>> {
    let mut out = Vec::new();
    for id in state.runs.run_ids() {
        match state.runs.summary(&id) {
            Ok(s) => out.push(s),
            Err(e) => log::warn!("skipping run {id}: {}", e.body.message),
        }
    }
    Ok(Json(out))
}

async fn get_run(State(state): State<SharedState>, Path(id): Path<String>) -> ApiResult<Json<RunSummary>> {
    Ok(Json(state.runs.summary(&id)?))
}

fn run_dir(state: &SharedState, id: &str) -> ApiResult<RunDir> {
    let handle = state.runs.handle(id)?;
    Ok(RunDir::open(&handle.root)?)
}

async fn get_iteration(
    State(state): State<SharedState>,
    Path((id, k)): Path<(String, u32)>,
) -> ApiResult<Json<IterationRecord>> {
    let dir = run_dir(&state, &id)?;
    if !dir.root().join(format!("iterations/iter_{k}.json")).is_file() {
        return Err(ApiError::not_found(format!("iteration {k} of run `{id}` not recorded")));
    }
    Ok(Json(dir.load_iteration(k)?))
}

#[derive(Debug, Deserialize)]
pub struct PageQuery {
    pub limit: Option<usize>,
    #[serde(default)]
    pub offset: usize,
    pub sort: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PopulationPage {
    pub iteration: u32,
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub sort: String,
    pub candidates: Vec<Candidate>,
}

/// Best first; candidates without the sort value go last, ties by id.
fn sort_candidates(cands: &mut [Candidate], key: impl Fn(&Candidate) -> Option<f64>, maximize: bool) {
    cands.sort_by(|a, b| match (key(a), key(b)) {
        (Some(x), Some(y)) => {
            let ord = if maximize { y.total_cmp(&x) } else { x.total_cmp(&y) };
            ord.then_with(|| a.id.cmp(&b.id))
        }
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.id.cmp(&b.id),
    });
}

async fn get_population(
    State(state): State<SharedState>,
    Path((id, k)): Path<(String, u32)>,
    Query(q): Query<PageQuery>,
) -> ApiResult<Json<PopulationPage>> {
    let dir = run_dir(&state, &id)?;
    if !dir.root().join(RunDir::population_snapshot_rel(k)).is_file() {
        return Err(ApiError::not_found(format!(
            "no population snapshot for iteration {k} of run `{id}`"
        )));
    }
    let limit = q.limit.unwrap_or(100);
    if limit == 0 || limit > state.max_page {
        return Err(
            ApiError::bad_request(format!("limit must be in 1..={}", state.max_page))
                .with_details(json!({ "field": "limit" })),
        );
    }
    let sort = q.sort.unwrap_or_else(|| "aggregate".into());
    let mut cands = dir.load_population(k)?.candidates;
    if sort == "aggregate" {
        sort_candidates(&mut cands, |c| c.aggregate, true);
    } else {
        let st: Option<RunState> = dir.load_state()?;
        let direction = st.as_ref().and_then(|s| {
            s.summaries
                .iter()
                .filter(|sum| sum.iteration == k)
                .flat_map(|sum| sum.objectives.iter())
                .chain(s.objectives.iter())
                .find(|o| o.id == sort)
                .map(|o| o.direction)
        });
        if direction.is_none() && !cands.iter().any(|c| c.scores.contains_key(&sort)) {
            return Err(
                ApiError::bad_request(format!("unknown sort key `{sort}`")).with_details(json!({ "field": "sort" }))
            );
        }
        let maximize = direction != Some(Direction::Minimize);
        sort_candidates(&mut cands, |c| c.scores.get(&sort).copied(), maximize);
    }
    let total = cands.len();
    let page: Vec<Candidate> = cands.into_iter().skip(q.offset).take(limit).collect();
    Ok(Json(PopulationPage {
        iteration: k,
        total,
        offset: q.offset,
        limit,
        sort,
        candidates: page,
    }))
}

#[derive(Debug, Deserialize)]
pub struct GateQuery {
    pub status: Option<String>,
}

async fn list_gates(
    State(state): State<SharedState>,
    Path(id): Path<String>,
    Query(q): Query<GateQuery>,
) -> ApiResult<Json<Vec<ApprovalGate>>> {
    let dir = run_dir(&state, &id)?;
    let want_open = match q.status.as_deref() {
        None => None,
        Some("open") => Some(true),
        Some("resolved") => Some(false),
        Some(other) => {
            return Err(ApiError::bad_request(format!("unknown gate status `{other}`"))
                .with_details(json!({ "field": "status" })))
        }
    };
    let gates = dir
        .gates()?
        .into_iter()
        .filter(|g| want_open.is_none_or(|o| g.is_open() == o))
        .collect();
    Ok(Json(gates))
}

async fn resolve_gate(
    State(state): State<SharedState>,
    Path((id, gate_id)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<Json<ApprovalGate>> {
    let res: GateResolution = parse_body(&body)?;
    Ok(Json(state.runs.resolve(&id, &gate_id, res).await?))
}

#[derive(Debug, Deserialize)]
pub struct EventQuery {
    #[serde(default)]
    pub since: u64,
    /// Seconds to wait for new events; capped by the service setting.
    pub wait: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EventPage {
    pub events: Vec<EventRecord>,
    /// Value of `since` for the next request.
    pub next: u64,
}

async fn get_events(
    State(state): State<SharedState>,
    Path(id): Path<String>,
    Query(q): Query<EventQuery>,
) -> ApiResult<Json<EventPage>> {
    let handle = state.runs.handle(&id)?;
    let dir = RunDir::open(&handle.root)?;
    let wait = q
        .wait
        .map(Duration::from_secs)
        .unwrap_or(state.long_poll)
        .min(state.long_poll);
    let deadline = tokio::time::Instant::now() + wait;
    loop {
        let notified = handle.notify.notified();
        let events = dir.read_events(q.since)?;
        let now = tokio::time::Instant::now();
        if !events.is_empty() || now >= deadline {
            let next = events.last().map(|e| e.seq + 1).unwrap_or(q.since);
            return Ok(Json(EventPage { events, next }));
        }
        // also poll, in case the run is driven by another process
        let nap = (deadline - now).min(Duration::from_millis(250));
        let _ = tokio::time::timeout(nap, notified).await;
    }
}

async fn abort_run(State(state): State<SharedState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    state.runs.abort(&id)?;
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "run_id": id, "status": "aborting" })),
    ))
}

async fn registry(State(state): State<SharedState>) -> Json<Vec<ScoringFunctionDescriptor>> {
    let mut catalog = state.runs.registry.catalog();
    catalog.sort_by(|a, b| a.descriptor_id.cmp(&b.descriptor_id));
    Json(catalog)
}
