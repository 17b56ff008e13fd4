//! Cluster ingress: round-robin routing over healthy workers, retries on
//! unreachable or saturated nodes, periodic health probing, and the admin
//! API behind the dashboard.

mod registry;

use std::path::PathBuf;
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::Semaphore;

pub use registry::{
    transition_allowed, NodeRecord, NodeState, ProbeTarget, Registry, RegistryError, Target, Transition,
};

use crate::config::{self, ConfigError};
use crate::worker::{now_ms, WorkerStatus};
use crate::{ErrorBody, ROUTE_TRACE_HEADER};

pub const ENV_PREFIX: &str = "JUDGEBOX_GATEWAY_";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedNode {
    pub address: String,
    #[serde(default)]
    pub node_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub listen_address: String,
    pub nodes: Vec<SeedNode>,
    pub probe_interval_ms: u64,
    pub probe_timeout_ms: u64,
    pub failure_threshold: u32,
    pub recovery_threshold: u32,
    /// Extra attempts on other nodes after the first one fails.
    pub max_retries: usize,
    pub request_timeout_ms: u64,
    /// Requests of one batch routed at once.
    pub batch_fanout: usize,
    /// Static dashboard assets served under /ui.
    pub ui_dir: Option<PathBuf>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            listen_address: "127.0.0.1:8080".into(),
            nodes: Vec::new(),
            probe_interval_ms: 1000,
            probe_timeout_ms: 800,
            failure_threshold: 3,
            recovery_threshold: 2,
            max_retries: 2,
            request_timeout_ms: 600_000,
            batch_fanout: 64,
            ui_dir: None,
        }
    }
}

impl GatewayConfig {
    /// File (optional) plus `JUDGEBOX_GATEWAY_*` overrides.
    pub fn load(path: Option<&std::path::Path>) -> Result<Self, ConfigError> {
        let c: Self = config::load(path, ENV_PREFIX)?;
        c.validate().map_err(ConfigError::Invalid)?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.probe_interval_ms < 100 {
            return Err("probe_interval_ms must be at least 100".into());
        }
        if self.failure_threshold == 0 || self.recovery_threshold == 0 {
            return Err("thresholds must be at least 1".into());
        }
        if self.batch_fanout == 0 {
            return Err("batch_fanout must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub total_in_flight: usize,
    pub total_capacity: usize,
    pub requests_per_s: f64,
    pub error_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSnapshot {
    pub nodes: Vec<NodeRecord>,
    /// Over healthy and draining nodes only.
    pub aggregate: Aggregate,
    pub taken_at: u64,
}

impl ClusterSnapshot {
    pub fn from_records(nodes: Vec<NodeRecord>) -> Self {
        let counted: Vec<&NodeRecord> =
            nodes.iter().filter(|n| matches!(n.state, NodeState::Healthy | NodeState::Draining)).collect();
        let status = |n: &NodeRecord| n.last_status.clone();
        let delivered: u64 = counted.iter().map(|n| n.delivered_total).sum();
        let failed: u64 = counted.iter().map(|n| n.failed_total).sum();
        let aggregate = Aggregate {
            total_in_flight: counted.iter().filter_map(|n| status(n)).map(|s| s.in_flight).sum(),
            total_capacity: counted.iter().filter_map(|n| status(n)).map(|s| s.max_concurrent_requests).sum(),
            requests_per_s: counted.iter().map(|n| n.requests_per_s).sum(),
            error_rate: if delivered + failed == 0 { 0.0 } else { failed as f64 / (delivered + failed) as f64 },
        };
        Self { nodes, aggregate, taken_at: now_ms() }
    }
}

/// How one routing attempt ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HopOutcome {
    Ok,
    Rejected,
    Overloaded,
    Unreachable,
}

impl HopOutcome {
    fn as_str(self) -> &'static str {
        match self {
            HopOutcome::Ok => "ok",
            HopOutcome::Rejected => "rejected",
            HopOutcome::Overloaded => "overloaded",
            HopOutcome::Unreachable => "unreachable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hop {
    pub node_id: String,
    pub outcome: HopOutcome,
}

/// Parses a route trace header such as `node-1=unreachable,node-2=ok`.
pub fn parse_trace(value: &str) -> Vec<(String, String)> {
    value
        .split(',')
        .filter_map(|h| h.split_once('=').map(|(n, o)| (n.trim().to_string(), o.trim().to_string())))
        .collect()
}

fn format_trace(hops: &[Hop]) -> String {
    hops.iter().map(|h| format!("{}={}", h.node_id, h.outcome.as_str())).collect::<Vec<_>>().join(",")
}

pub struct Routed {
    pub status: StatusCode,
    pub body: Bytes,
    pub hops: Vec<Hop>,
}

pub struct Gateway {
    config: GatewayConfig,
    registry: Registry,
    http: reqwest::Client,
    probe_http: reqwest::Client,
}

fn json_error(status: StatusCode, kind: &str, message: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: kind.into(), message: message.into() })).into_response()
}

fn error_bytes(kind: &str, message: impl Into<String>) -> Bytes {
    Bytes::from(serde_json::to_vec(&ErrorBody { error: kind.into(), message: message.into() }).expect("serializes"))
}

struct Open(Arc<std::sync::atomic::AtomicUsize>);

impl Open {
    fn new(c: Arc<std::sync::atomic::AtomicUsize>) -> Self {
        c.fetch_add(1, Ordering::SeqCst);
        Self(c)
    }
}

impl Drop for Open {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

impl Gateway {
    pub fn new(config: GatewayConfig) -> Arc<Self> {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_millis(config.request_timeout_ms))
            .connect_timeout(Duration::from_millis(config.probe_timeout_ms.max(200)))
            .pool_max_idle_per_host(256)
            .build()
            .expect("http client");
        let probe_http = reqwest::Client::builder()
            .timeout(Duration::from_millis(config.probe_timeout_ms))
            .build()
            .expect("http client");
        Arc::new(Self { registry: Registry::new(config.failure_threshold, config.recovery_threshold), config, http, probe_http })
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn snapshot(&self) -> ClusterSnapshot {
        ClusterSnapshot::from_records(self.registry.records())
    }

    async fn probe(&self, address: &str) -> Result<WorkerStatus, String> {
        let resp = self.probe_http.get(format!("{address}/health")).send().await.map_err(|e| e.to_string())?;
        if !resp.status().is_success() {
            return Err(format!("health returned {}", resp.status()));
        }
        let status: WorkerStatus = resp.json().await.map_err(|e| e.to_string())?;
        if !status.healthy {
            return Err("worker reports unhealthy".into());
        }
        Ok(status)
    }

    pub async fn enroll(&self, address: &str, node_id: Option<String>) -> NodeRecord {
        let address = address.trim_end_matches('/');
        let probe = self.probe(address).await;
        self.registry.enroll(address, node_id, probe)
    }

    /// One probe round over every node, then retire drained nodes.
    pub async fn probe_all(self: &Arc<Self>) {
        let mut set = tokio::task::JoinSet::new();
        for target in self.registry.probe_targets() {
            let gw = self.clone();
            set.spawn(async move {
                let result = gw.probe(&target.address).await;
                gw.registry.record_probe_for(&target.node_id, target.epoch, result);
            });
        }
        while set.join_next().await.is_some() {}
        for id in self.registry.retire_drained() {
            tracing::info!(node = %id, "drained node removed");
        }
    }

    pub fn spawn_health_loop(self: &Arc<Self>) -> tokio::task::JoinHandle<()> {
        let gw = self.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(Duration::from_millis(gw.config.probe_interval_ms));
            tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            loop {
                tick.tick().await;
                gw.probe_all().await;
            }
        })
    }

    /// Sends one submission body to the next healthy node, trying up to
    /// `max_retries` other nodes when a node is unreachable or sheds load.
    pub async fn route(&self, body: Bytes) -> Routed {
        let mut hops = Vec::new();
        let mut tried: Vec<String> = Vec::new();
        for _ in 0..=self.config.max_retries {
            let Some(target) = self.registry.next_target(&tried) else { break };
            tried.push(target.node_id.clone());
            let open = Open::new(target.in_flight.clone());
            let sent = self
                .http
                .post(format!("{}/submit", target.address))
                .header(header::CONTENT_TYPE, "application/json")
                .body(body.clone())
                .send()
                .await;
            let outcome = match sent {
                Err(e) => {
                    tracing::warn!(node = %target.node_id, error = %e, "node unreachable");
                    self.registry.record_route_failure(&target.node_id, true);
                    HopOutcome::Unreachable
                }
                Ok(resp) if resp.status() == reqwest::StatusCode::SERVICE_UNAVAILABLE => {
                    self.registry.record_route_failure(&target.node_id, false);
                    HopOutcome::Overloaded
                }
                Ok(resp) => {
                    let status = StatusCode::from_u16(resp.status().as_u16()).unwrap_or(StatusCode::BAD_GATEWAY);
                    match resp.bytes().await {
                        Ok(bytes) => {
                            drop(open);
                            self.registry.record_delivery(&target.node_id);
                            let outcome = if status.is_success() { HopOutcome::Ok } else { HopOutcome::Rejected };
                            hops.push(Hop { node_id: target.node_id, outcome });
                            return Routed { status, body: bytes, hops };
                        }
                        Err(e) => {
                            tracing::warn!(node = %target.node_id, error = %e, "response lost");
                            self.registry.record_route_failure(&target.node_id, true);
                            HopOutcome::Unreachable
                        }
                    }
                }
            };
            hops.push(Hop { node_id: target.node_id, outcome });
        }
        let message = if hops.is_empty() {
            "no healthy node".to_string()
        } else {
            format!("all attempts failed: {}", format_trace(&hops))
        };
        Routed { status: StatusCode::SERVICE_UNAVAILABLE, body: error_bytes("no_capacity", message), hops }
    }

    /// Routes every element of a JSON array; the reply holds one report or
    /// error object per element, in input order.
    pub async fn route_batch(self: &Arc<Self>, items: Vec<serde_json::Value>) -> Vec<serde_json::Value> {
        let limit = Arc::new(Semaphore::new(self.config.batch_fanout));
        let mut set = tokio::task::JoinSet::new();
        for (i, item) in items.into_iter().enumerate() {
            let gw = self.clone();
            let limit = limit.clone();
            set.spawn(async move {
                let _permit = limit.acquire_owned().await.expect("never closed");
                let body = Bytes::from(serde_json::to_vec(&item).expect("value serializes"));
                let routed = gw.route(body).await;
                let value = serde_json::from_slice(&routed.body)
                    .unwrap_or_else(|_| serde_json::json!({"error": "bad_gateway", "message": "unparseable worker reply"}));
                (i, value)
            });
        }
        let mut out = vec![serde_json::Value::Null; set.len()];
        while let Some(joined) = set.join_next().await {
            match joined {
                Ok((i, v)) => out[i] = v,
                Err(e) => tracing::error!(error = %e, "batch item task failed"),
            }
        }
        out
    }

    async fn forward_admin(&self, node_id: &str, path: &str, post: bool) -> Result<(StatusCode, Bytes), Response> {
        let Some(node) = self.registry.get(node_id) else {
            return Err(json_error(StatusCode::NOT_FOUND, "unknown_node", format!("unknown node {node_id}")));
        };
        let url = format!("{}{path}", node.address);
        let req = if post { self.http.post(url) } else { self.http.get(url) };
        let resp = req
            .timeout(Duration::from_millis(self.config.probe_timeout_ms.max(5_000)))
            .send()
            .await
            .map_err(|e| json_error(StatusCode::BAD_GATEWAY, "node_unreachable", e.to_string()))?;
        let status = StatusCode::from_u16(resp.status().as_u16()).unwrap_or(StatusCode::BAD_GATEWAY);
        let body = resp.bytes().await.map_err(|e| json_error(StatusCode::BAD_GATEWAY, "node_unreachable", e.to_string()))?;
        Ok((status, body))
    }
}

fn registry_error(e: RegistryError) -> Response {
    match e {
        RegistryError::UnknownNode(_) => json_error(StatusCode::NOT_FOUND, "unknown_node", e.to_string()),
        RegistryError::InvalidTransition { .. } => json_error(StatusCode::CONFLICT, "invalid_transition", e.to_string()),
    }
}

fn routed_response(r: Routed) -> Response {
    let mut resp = (r.status, r.body).into_response();
    let headers = resp.headers_mut();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
    if let Ok(v) = HeaderValue::from_str(&format_trace(&r.hops)) {
        headers.insert(ROUTE_TRACE_HEADER, v);
    }
    resp
}

#[derive(Deserialize)]
struct EnrollBody {
    address: String,
    #[serde(default)]
    node_id: Option<String>,
}

#[derive(Deserialize)]
struct DrainQuery {
    #[serde(default)]
    shutdown: bool,
}

#[derive(Deserialize)]
struct TailQuery {
    tail: Option<usize>,
}

type Gw = State<Arc<Gateway>>;

async fn submit(State(gw): Gw, body: Bytes) -> Response {
    routed_response(gw.route(body).await)
}

async fn submit_batch(State(gw): Gw, body: Bytes) -> Response {
    match serde_json::from_slice::<Vec<serde_json::Value>>(&body) {
        Ok(items) => Json(gw.route_batch(items).await).into_response(),
        Err(e) => json_error(StatusCode::BAD_REQUEST, "bad_request", format!("expected a JSON array: {e}")),
    }
}

async fn enroll(State(gw): Gw, Json(body): Json<EnrollBody>) -> Response {
    let record = gw.enroll(&body.address, body.node_id).await;
    tracing::info!(node = %record.node_id, state = ?record.state, "enrolled via admin api");
    (StatusCode::CREATED, Json(gw.snapshot())).into_response()
}

async fn drain(State(gw): Gw, Path(id): Path<String>, Query(q): Query<DrainQuery>) -> Response {
    if let Err(e) = gw.registry.drain(&id) {
        return registry_error(e);
    }
    if q.shutdown {
        if let Err(resp) = gw.forward_admin(&id, "/drain", true).await {
            tracing::warn!(node = %id, "could not forward drain to worker");
            return resp;
        }
    }
    Json(gw.snapshot()).into_response()
}

async fn remove(State(gw): Gw, Path(id): Path<String>) -> Response {
    match gw.registry.remove(&id) {
        Ok(()) => Json(gw.snapshot()).into_response(),
        Err(e) => registry_error(e),
    }
}

async fn reload(State(gw): Gw, Path(id): Path<String>) -> Response {
    match gw.forward_admin(&id, "/reload", true).await {
        Ok((status, _)) if status.is_success() => Json(gw.snapshot()).into_response(),
        Ok((status, body)) => (status, [(header::CONTENT_TYPE, "application/json")], body).into_response(),
        Err(resp) => resp,
    }
}

async fn logs(State(gw): Gw, Path(id): Path<String>, Query(q): Query<TailQuery>) -> Response {
    let path = format!("/logs?tail={}", q.tail.unwrap_or(100));
    match gw.forward_admin(&id, &path, false).await {
        Ok((status, body)) => (status, [(header::CONTENT_TYPE, "application/json")], body).into_response(),
        Err(resp) => resp,
    }
}

pub fn router(gateway: Arc<Gateway>) -> Router {
    let mut app = Router::new()
        .route("/submit", post(submit))
        .route("/submit_batch", post(submit_batch))
        .route("/cluster", get(|State(gw): Gw| async move { Json(gw.snapshot()) }))
        .route("/transitions", get(|State(gw): Gw| async move { Json(gw.registry.transitions()) }))
        .route("/nodes", post(enroll).get(|State(gw): Gw| async move { Json(gw.registry.records()) }))
        .route("/nodes/{id}/drain", post(drain))
        .route("/nodes/{id}/remove", post(remove))
        .route("/nodes/{id}/reload", post(reload))
        .route("/nodes/{id}/logs", get(logs));
    if let Some(dir) = &gateway.config.ui_dir {
        app = app.nest_service("/ui", tower_http::services::ServeDir::new(dir).append_index_html_on_directories(true));
    }
    app.with_state(gateway)
}

/// Enrolls the seed nodes, starts the health loop and serves until the
/// listener fails.
pub async fn serve(gateway: Arc<Gateway>, listener: TcpListener) -> std::io::Result<()> {
    for seed in gateway.config.nodes.clone() {
        gateway.enroll(&seed.address, seed.node_id).await;
    }
    let health = gateway.spawn_health_loop();
    let result = axum::serve(listener, router(gateway)).await;
    health.abort();
    result
}

/// Binds `addr` and returns the bound address and the serving future.
pub async fn bind(
    gateway: Arc<Gateway>,
    addr: &str,
) -> std::io::Result<(std::net::SocketAddr, impl std::future::Future<Output = std::io::Result<()>>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    Ok((local, serve(gateway, listener)))
}
