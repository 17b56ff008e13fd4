//! Worker node: HTTP front of a local sandbox with admission control.
//!
//! Up to `max_concurrent_requests` submissions run at once; up to
//! `queue_capacity` more wait for a slot, and anything beyond that is shed
//! with 503 and a Retry-After hint. Health, logs and admin endpoints never
//! wait behind submissions.

mod executor;
mod logs;
mod stats;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::{watch, Semaphore};

use judgebox_core::extract::ExtractConfig;
use judgebox_core::pipeline::SubmitError;
use judgebox_core::{parse_submission, ResourceLimits};

pub use executor::{Executor, SandboxExecutor, SyntheticExecutor};
pub use logs::{now_ms, LogLine, LogRing, DEFAULT_LOG_CAPACITY};
pub use stats::{memory_used_bytes, CpuSampler};

use crate::config::{self, ConfigError};
use crate::ErrorBody;

pub const ENV_PREFIX: &str = "JUDGEBOX_WORKER_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkerConfig {
    pub listen_address: String,
    /// Requests executed at once (instance-level parallelism).
    pub max_concurrent_requests: usize,
    /// Tests of one request executed at once (unit-test level parallelism).
    pub unit_parallelism: usize,
    /// Requests allowed to wait for a slot before load is shed.
    pub queue_capacity: usize,
    pub runtime_manifest_path: Option<PathBuf>,
    pub workspace_root: PathBuf,
    pub default_limits: ResourceLimits,
    pub judge_limits: ResourceLimits,
    pub extraction: ExtractConfig,
    pub log_capacity: usize,
    pub deny_network: bool,
    /// Seconds suggested to shed clients.
    pub retry_after_s: u64,
    /// Replace the sandbox with a fixed-delay stub (load testing only).
    pub synthetic_delay_ms: Option<u64>,
}

impl Default for WorkerConfig {
    fn default() -> Self {
        Self {
            listen_address: "127.0.0.1:7070".into(),
            max_concurrent_requests: 4,
            unit_parallelism: 4,
            queue_capacity: 64,
            runtime_manifest_path: None,
            workspace_root: std::env::temp_dir().join("judgebox-ws"),
            default_limits: ResourceLimits::default(),
            judge_limits: ResourceLimits::judge_default(),
            extraction: ExtractConfig::default(),
            log_capacity: DEFAULT_LOG_CAPACITY,
            deny_network: false,
            retry_after_s: 1,
            synthetic_delay_ms: None,
        }
    }
}

impl WorkerConfig {
    /// File (optional) plus `JUDGEBOX_WORKER_*` overrides.
    pub fn load(path: Option<&std::path::Path>) -> Result<Self, ConfigError> {
        let c: Self = config::load(path, ENV_PREFIX)?;
        c.validate().map_err(ConfigError::Invalid)?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_concurrent_requests == 0 || self.unit_parallelism == 0 {
            return Err("max_concurrent_requests and unit_parallelism must be at least 1".into());
        }
        self.default_limits.validate().map_err(|e| format!("default_limits: {e}"))?;
        self.judge_limits.validate().map_err(|e| format!("judge_limits: {e}"))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerStatus {
    pub healthy: bool,
    pub in_flight: usize,
    pub queue_depth: usize,
    pub cpu_utilization: f64,
    pub memory_used_bytes: u64,
    pub uptime_s: u64,
    pub runtimes: Vec<String>,
    pub max_concurrent_requests: usize,
    pub received_total: u64,
    pub completed_total: u64,
    pub rejected_total: u64,
    pub draining: bool,
}

pub struct Worker {
    config: RwLock<WorkerConfig>,
    config_path: Option<PathBuf>,
    executor: Arc<dyn Executor>,
    permits: Arc<Semaphore>,
    max_concurrent: usize,
    in_flight: AtomicUsize,
    queued: AtomicUsize,
    /// Requests between arrival and response; drain waits for zero.
    pending: AtomicUsize,
    received: AtomicU64,
    completed: AtomicU64,
    rejected: AtomicU64,
    draining: AtomicBool,
    started: Instant,
    logs: LogRing,
    cpu: CpuSampler,
    shutdown: watch::Sender<bool>,
}

fn error(status: StatusCode, kind: &str, message: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: kind.into(), message: message.into() })).into_response()
}

impl Worker {
    /// Builds a worker around the local sandbox, or the synthetic stub when
    /// `synthetic_delay_ms` is set.
    pub fn new(config: WorkerConfig, config_path: Option<PathBuf>) -> Result<Arc<Self>, String> {
        config.validate()?;
        let executor: Arc<dyn Executor> = match config.synthetic_delay_ms {
            Some(ms) => Arc::new(SyntheticExecutor::new(Duration::from_millis(ms))),
            None => Arc::new(SandboxExecutor::new(&config)?),
        };
        Ok(Self::with_executor(config, config_path, executor))
    }

    pub fn with_executor(config: WorkerConfig, config_path: Option<PathBuf>, executor: Arc<dyn Executor>) -> Arc<Self> {
        let max = config.max_concurrent_requests.max(1);
        let (shutdown, _) = watch::channel(false);
        let w = Arc::new(Self {
            logs: LogRing::new(config.log_capacity),
            config: RwLock::new(config),
            config_path,
            executor,
            permits: Arc::new(Semaphore::new(max)),
            max_concurrent: max,
            in_flight: AtomicUsize::new(0),
            queued: AtomicUsize::new(0),
            pending: AtomicUsize::new(0),
            received: AtomicU64::new(0),
            completed: AtomicU64::new(0),
            rejected: AtomicU64::new(0),
            draining: AtomicBool::new(false),
            started: Instant::now(),
            cpu: CpuSampler::default(),
            shutdown,
        });
        w.log("info", format!("worker started; runtimes {:?}", w.executor.runtimes()));
        w
    }

    pub fn log(&self, level: &str, message: String) {
        match level {
            "error" => tracing::error!("{message}"),
            "warn" => tracing::warn!("{message}"),
            _ => tracing::info!("{message}"),
        }
        self.logs.push(level, message);
    }

    pub fn logs(&self) -> &LogRing {
        &self.logs
    }

    pub fn executor(&self) -> &Arc<dyn Executor> {
        &self.executor
    }

    pub fn status(&self) -> WorkerStatus {
        WorkerStatus {
            healthy: self.executor.healthy(),
            in_flight: self.in_flight.load(Ordering::SeqCst),
            queue_depth: self.queued.load(Ordering::SeqCst),
            cpu_utilization: self.cpu.sample(),
            memory_used_bytes: memory_used_bytes(),
            uptime_s: self.started.elapsed().as_secs(),
            runtimes: self.executor.runtimes(),
            max_concurrent_requests: self.max_concurrent,
            received_total: self.received.load(Ordering::SeqCst),
            completed_total: self.completed.load(Ordering::SeqCst),
            rejected_total: self.rejected.load(Ordering::SeqCst),
            draining: self.draining.load(Ordering::SeqCst),
        }
    }

    fn busy(&self) -> usize {
        self.pending.load(Ordering::SeqCst)
    }

    /// Stops admissions and resolves the shutdown signal once idle.
    pub fn drain(self: &Arc<Self>) {
        if self.draining.swap(true, Ordering::SeqCst) {
            return;
        }
        self.log("info", format!("drain requested with {} requests pending", self.busy()));
        let w = self.clone();
        tokio::spawn(async move {
            while w.busy() > 0 {
                tokio::time::sleep(Duration::from_millis(20)).await;
            }
            w.log("info", "drained; shutting down".into());
            let _ = w.shutdown.send(true);
        });
    }

    /// Resolves once a drain has completed.
    pub async fn drained(&self) {
        let mut rx = self.shutdown.subscribe();
        let _ = rx.wait_for(|done| *done).await;
    }

    pub fn reload(&self) -> Result<(), String> {
        let fresh = WorkerConfig::load(self.config_path.as_deref()).map_err(|e| e.to_string())?;
        if fresh.max_concurrent_requests != self.max_concurrent {
            self.log("warn", "max_concurrent_requests changes take effect after a restart".into());
        }
        self.executor.reload(&fresh)?;
        *self.config.write().unwrap_or_else(|e| e.into_inner()) = fresh;
        self.log("info", "configuration reloaded".into());
        Ok(())
    }

    async fn handle_submit(self: Arc<Self>, body: Bytes) -> Response {
        self.received.fetch_add(1, Ordering::SeqCst);
        let _pending = QueueSlot::enter(&self.pending);
        if self.draining.load(Ordering::SeqCst) {
            self.rejected.fetch_add(1, Ordering::SeqCst);
            return error(StatusCode::SERVICE_UNAVAILABLE, "draining", "worker is draining");
        }
        let text = String::from_utf8_lossy(&body);
        let request = match parse_submission(&text) {
            Ok(r) => r,
            Err(e) => return error(StatusCode::BAD_REQUEST, "bad_request", e.to_string()),
        };
        let permit = match self.permits.clone().try_acquire_owned() {
            Ok(p) => p,
            Err(_) => {
                let (capacity, retry) = {
                    let c = self.config.read().unwrap_or_else(|e| e.into_inner());
                    (c.queue_capacity, c.retry_after_s)
                };
                let waiting = QueueSlot::enter(&self.queued);
                if self.queued.load(Ordering::SeqCst) > capacity {
                    self.rejected.fetch_add(1, Ordering::SeqCst);
                    self.log("warn", format!("overloaded; shed request {}", request.request_id));
                    let mut resp = error(StatusCode::SERVICE_UNAVAILABLE, "overloaded", "admission queue is full");
                    resp.headers_mut().insert(header::RETRY_AFTER, retry.into());
                    return resp;
                }
                let permit = self.permits.clone().acquire_owned().await.expect("semaphore is never closed");
                drop(waiting);
                permit
            }
        };

        self.in_flight.fetch_add(1, Ordering::SeqCst);
        let w = self.clone();
        let started = Instant::now();
        let id = request.request_id.clone();
        let joined = tokio::task::spawn_blocking(move || {
            let _permit = permit;
            let _in_flight = InFlight(w.clone());
            w.executor.submit(&request)
        })
        .await;
        self.completed.fetch_add(1, Ordering::SeqCst);
        match joined {
            Ok(Ok(report)) => {
                let ms = started.elapsed().as_millis();
                self.log("info", format!("request {id}: {}/{} passed in {ms} ms", report.passed, report.total));
                Json(report).into_response()
            }
            Ok(Err(SubmitError::BadRequest(m))) => {
                self.log("warn", format!("request {id} rejected: {m}"));
                error(StatusCode::BAD_REQUEST, "bad_request", m)
            }
            Ok(Err(SubmitError::Internal(m))) => {
                self.log("error", format!("request {id} failed: {m}"));
                error(StatusCode::INTERNAL_SERVER_ERROR, "internal", m)
            }
            Err(e) => {
                self.log("error", format!("request {id} panicked: {e}"));
                error(StatusCode::INTERNAL_SERVER_ERROR, "internal", "execution task failed")
            }
        }
    }
}

/// Decrements `in_flight` when the blocking task finishes, before its
/// admission permit is released.
struct InFlight(Arc<Worker>);

impl Drop for InFlight {
    fn drop(&mut self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

/// A counted slot (queue or pending), released on drop, also when the
/// client disconnects while waiting.
struct QueueSlot<'a>(&'a AtomicUsize);

impl<'a> QueueSlot<'a> {
    fn enter(counter: &'a AtomicUsize) -> Self {
        counter.fetch_add(1, Ordering::SeqCst);
        Self(counter)
    }
}

impl Drop for QueueSlot<'_> {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

#[derive(Deserialize)]
struct TailQuery {
    tail: Option<usize>,
}

pub fn router(worker: Arc<Worker>) -> Router {
    Router::new()
        .route("/submit", post(|State(w): State<Arc<Worker>>, body: Bytes| w.handle_submit(body)))
        .route("/health", get(|State(w): State<Arc<Worker>>| async move { Json(w.status()) }))
        .route(
            "/logs",
            get(|State(w): State<Arc<Worker>>, Query(q): Query<TailQuery>| async move {
                match q.tail.unwrap_or(100) {
                    0 => error(StatusCode::BAD_REQUEST, "bad_request", "tail must be at least 1"),
                    n => Json(w.logs.tail(n)).into_response(),
                }
            }),
        )
        .route(
            "/drain",
            post(|State(w): State<Arc<Worker>>| async move {
                w.drain();
                (StatusCode::ACCEPTED, Json(w.status()))
            }),
        )
        .route(
            "/reload",
            post(|State(w): State<Arc<Worker>>| async move {
                let w2 = w.clone();
                match tokio::task::spawn_blocking(move || w2.reload()).await {
                    Ok(Ok(())) => Json(w.status()).into_response(),
                    Ok(Err(m)) => error(StatusCode::BAD_REQUEST, "reload_failed", m),
                    Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
                }
            }),
        )
        .with_state(worker)
}

/// Serves until a drain completes.
pub async fn serve(worker: Arc<Worker>, listener: TcpListener) -> std::io::Result<()> {
    let w = worker.clone();
    axum::serve(listener, router(worker)).with_graceful_shutdown(async move { w.drained().await }).await
}

/// Binds `addr` and returns the bound address and the serving future.
pub async fn bind(worker: Arc<Worker>, addr: &str) -> std::io::Result<(SocketAddr, impl std::future::Future<Output = std::io::Result<()>>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    Ok((local, serve(worker, listener)))
}
