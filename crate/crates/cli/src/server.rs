//! HTTP control service over a single simulated network.
//!
//! Every state-changing request takes the session lock, so commands are
//! applied one at a time in arrival order, exactly as a scenario file would
//! apply them.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sgdns::sim::log::to_jsonl;
use sgdns::sim::metrics::RoundMetrics;
use sgdns::sim::scenario::Delivery;
use sgdns::sim::topology::HealTarget;
use sgdns::version::VvDigest;
use sgdns::{
    Error, EventKind, EventOutcome, FingerSelection, IdMode, NetworkSpec, NodeId, PartitionId,
    RingConfig, Scenario, ScheduledEvent, Simulation,
};
use tower_http::cors::CorsLayer;

/// Upper bound on rounds per `/step` request.
pub const MAX_STEP: u64 = 100_000;

#[derive(Default)]
pub struct Session {
    sim: Option<Simulation>,
    network_id: u64,
    pending: VecDeque<ScheduledEvent>,
}

impl Session {
    pub fn with_network(spec: NetworkSpec) -> sgdns::Result<Self> {
        let mut s = Session::default();
        s.install(spec, Vec::new())?;
        Ok(s)
    }

    /// Loads a scenario's network; its events fire as the rounds are stepped.
    pub fn with_scenario(scenario: &Scenario) -> sgdns::Result<Self> {
        scenario.validate()?;
        let mut s = Session::default();
        s.install(scenario.network_spec(), scenario.events.clone())?;
        Ok(s)
    }

    fn install(&mut self, spec: NetworkSpec, events: Vec<ScheduledEvent>) -> sgdns::Result<u64> {
        self.sim = Some(Simulation::new(spec)?);
        self.network_id += 1;
        self.pending = events.into();
        Ok(self.network_id)
    }

    fn sim(&mut self) -> Result<&mut Simulation, ApiError> {
        self.sim.as_mut().ok_or_else(no_network)
    }

    fn apply(&mut self, kind: &EventKind) -> Result<EventOutcome, ApiError> {
        Ok(self.sim()?.apply(kind)?)
    }

    fn step(&mut self, rounds: u64) -> Result<Vec<RoundMetrics>, ApiError> {
        let sim = self.sim.as_mut().ok_or_else(no_network)?;
        let mut out = Vec::with_capacity(rounds as usize);
        for _ in 0..rounds {
            while self.pending.front().is_some_and(|e| e.round <= sim.round()) {
                let ev = self.pending.pop_front().expect("peeked");
                sim.apply(&ev.kind)?;
            }
            out.push(sim.finish_round().clone());
        }
        Ok(out)
    }
}

fn no_network() -> ApiError {
    ApiError {
        status: StatusCode::CONFLICT,
        body: json!({ "error": "no network; POST /network first" }),
    }
}

pub type Shared = Arc<Mutex<Session>>;

fn lock(state: &Shared) -> MutexGuard<'_, Session> {
    // a panic mid-command leaves the simulator as it was between rounds
    state.lock().unwrap_or_else(|e| e.into_inner())
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let body = match &e {
            Error::Validation { field, message } => json!({ "error": message, "field": field }),
            other => json!({ "error": other.to_string() }),
        };
        ApiError {
            status: StatusCode::BAD_REQUEST,
            body,
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            body: json!({ "error": "malformed request body", "detail": r.body_text() }),
        }
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            body: json!({ "error": "malformed query", "detail": r.body_text() }),
        }
    }
}

fn bad_field(field: &str, message: &str) -> ApiError {
    ApiError {
        status: StatusCode::BAD_REQUEST,
        body: json!({ "error": message, "field": field }),
    }
}

type Body<T> = Result<Json<T>, JsonRejection>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkRequest {
    pub n: usize,
    pub m: Option<u32>,
    #[serde(default)]
    pub id_mode: IdMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub finger_selection: FingerSelection,
    #[serde(default)]
    pub delivery: Delivery,
    #[serde(default)]
    pub trace_messages: bool,
}

async fn create_network(
    State(state): State<Shared>,
    body: Body<NetworkRequest>,
) -> Result<Response, ApiError> {
    let Json(req) = body?;
    if req.n == 0 {
        return Err(bad_field("n", "must be at least 1"));
    }
    let m = NetworkSpec::resolve_bits(req.n, req.m, req.id_mode);
    let cfg = RingConfig::new(m, req.seed).map_err(|e| bad_field("m", &e.to_string()))?;
    let spec = NetworkSpec {
        cfg,
        id_mode: req.id_mode,
        finger_selection: req.finger_selection,
        delivery: req.delivery,
        trace_messages: req.trace_messages,
        ..NetworkSpec::dense(req.n, req.seed)
    };
    let id = tokio::task::spawn_blocking(move || lock(&state).install(spec, Vec::new()))
        .await
        .expect("network build task")?;
    tracing::info!(network_id = id, n = req.n, m, "network created");
    Ok((StatusCode::CREATED, Json(json!({ "network_id": id }))).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRequest {
    pub fragments: Vec<Vec<NodeId>>,
}

async fn split(
    State(state): State<Shared>,
    body: Body<SplitRequest>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let Json(req) = body?;
    match lock(&state).apply(&EventKind::Split {
        fragments: req.fragments,
    })? {
        EventOutcome::Split { partition_ids } => {
            Ok(Json(json!({ "partition_ids": partition_ids })))
        }
        other => unreachable!("split produced {other:?}"),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HealRequest {
    pub partitions: HealTarget,
}

async fn heal(
    State(state): State<Shared>,
    body: Body<HealRequest>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let Json(req) = body?;
    match lock(&state).apply(&EventKind::Heal {
        partitions: req.partitions,
    })? {
        EventOutcome::Heal { merged } => Ok(Json(json!({ "merged": merged }))),
        other => unreachable!("heal produced {other:?}"),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRequest {
    pub rounds: u64,
}

async fn step(
    State(state): State<Shared>,
    body: Body<StepRequest>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let Json(req) = body?;
    if req.rounds == 0 || req.rounds > MAX_STEP {
        return Err(bad_field("rounds", &format!("must be in 1..={MAX_STEP}")));
    }
    let metrics = tokio::task::spawn_blocking(move || lock(&state).step(req.rounds))
        .await
        .expect("step task")?;
    Ok(Json(json!({ "metrics": metrics })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PublishRequest {
    pub node: NodeId,
    pub name: String,
    pub ip: String,
    pub ttl: u64,
}

async fn publish(
    State(state): State<Shared>,
    body: Body<PublishRequest>,
) -> Result<Response, ApiError> {
    let Json(r) = body?;
    let ev = EventKind::Publish {
        node: r.node,
        name: r.name,
        ip: r.ip,
        ttl: r.ttl,
    };
    outcome(lock(&state).apply(&ev)?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LookupRequest {
    pub origin: NodeId,
    pub name: String,
}

async fn lookup(
    State(state): State<Shared>,
    body: Body<LookupRequest>,
) -> Result<Response, ApiError> {
    let Json(r) = body?;
    outcome(lock(&state).apply(&EventKind::Lookup {
        origin: r.origin,
        name: r.name,
    })?)
}

fn outcome(o: EventOutcome) -> Result<Response, ApiError> {
    Ok(Json(o).into_response())
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FingerView {
    pub k: u32,
    pub start: NodeId,
    pub target: Option<NodeId>,
    pub invalid: bool,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
pub struct NodeView {
    pub id: NodeId,
    pub active: bool,
    pub partition: PartitionId,
    pub partition_version: u64,
    pub successor: NodeId,
    pub predecessor: Option<NodeId>,
    pub fingers: Vec<FingerView>,
    pub cross_partition_links: Vec<NodeId>,
    pub known_partitions: Vec<PartitionId>,
    pub known_nodes: usize,
    pub vv: VvDigest,
    pub records: usize,
}

#[derive(Serialize)]
pub struct StateView {
    pub network_id: u64,
    pub round: u64,
    pub n: usize,
    pub m: u32,
    pub converged: bool,
    pub components: usize,
    pub nodes: Vec<NodeView>,
}

async fn get_state(State(state): State<Shared>) -> Result<Json<StateView>, ApiError> {
    let mut session = lock(&state);
    let network_id = session.network_id;
    let sim = session.sim()?;
    let nodes = sim
        .states()
        .values()
        .map(|s| NodeView {
            id: s.id,
            active: s.active,
            partition: s.partition_id,
            partition_version: s.partition_version,
            successor: s.successor,
            predecessor: s.predecessor,
            fingers: s
                .fingers
                .iter()
                .map(|f| FingerView {
                    k: f.k,
                    start: f.start,
                    target: f.target,
                    invalid: f.target.is_none(),
                })
                .collect(),
            cross_partition_links: s.cross_partition_links.iter().copied().collect(),
            known_partitions: s.known_partitions.iter().copied().collect(),
            known_nodes: s.known_nodes.len(),
            vv: s.vv.digest(),
            records: s.dns_records.len(),
        })
        .collect();
    Ok(Json(StateView {
        network_id,
        round: sim.round(),
        n: sim.spec().n,
        m: sim.cfg().m,
        converged: sim.all_converged(),
        components: sim.components().len(),
        nodes,
    }))
}

#[derive(Deserialize)]
pub struct EventsQuery {
    pub since: Option<u64>,
}

async fn events(
    State(state): State<Shared>,
    query: Result<Query<EventsQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(q) = query?;
    let mut session = lock(&state);
    let body = to_jsonl(session.sim()?.log_since(q.since));
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/network", post(create_network))
        .route("/split", post(split))
        .route("/heal", post(heal))
        .route("/step", post(step))
        .route("/publish", post(publish))
        .route("/lookup", post(lookup))
        .route("/state", get(get_state))
        .route("/events", get(events))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

pub async fn serve(session: Session, bind: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "control service listening");
    axum::serve(listener, router(Arc::new(Mutex::new(session))))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
