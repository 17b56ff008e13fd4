#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::process::{Child, Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use judgebox_service::gateway::{self, Gateway, GatewayConfig};
use judgebox_service::worker::{self, SyntheticExecutor, Worker, WorkerConfig};
use tokio::runtime::Runtime;

fn runtime() -> Runtime {
    tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().expect("runtime")
}

/// A worker binary running in its own process.
pub struct WorkerProc {
    child: Child,
    pub url: String,
}

impl WorkerProc {
    pub fn synthetic(delay_ms: u64, max_concurrent: usize) -> Self {
        Self::spawn(&[
            "--synthetic-delay-ms".to_string(),
            delay_ms.to_string(),
            "--max-concurrent".to_string(),
            max_concurrent.to_string(),
        ])
    }

    pub fn spawn(extra: &[String]) -> Self {
        let mut child = Command::new(env!("CARGO_BIN_EXE_judgebox-worker"))
            .args(["--listen", "127.0.0.1:0"])
            .args(extra)
            .env("RUST_LOG", "warn")
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("spawn worker");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).expect("worker banner");
        let addr = line.trim().strip_prefix("listening on ").unwrap_or_else(|| panic!("banner: {line:?}"));
        Self { url: format!("http://{addr}"), child }
    }

    pub fn pid(&self) -> u32 {
        self.child.id()
    }

    pub fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    /// SIGTERM, then wait up to `limit` for a clean exit.
    pub fn terminate(&mut self, limit: Duration) -> Option<std::process::ExitStatus> {
        // SAFETY: plain syscall on a child we own.
        unsafe {
            libc::kill(self.child.id() as libc::pid_t, libc::SIGTERM);
        }
        let end = Instant::now() + limit;
        while Instant::now() < end {
            if let Ok(Some(status)) = self.child.try_wait() {
                return Some(status);
            }
            std::thread::sleep(Duration::from_millis(20));
        }
        None
    }
}

impl Drop for WorkerProc {
    fn drop(&mut self) {
        self.kill();
    }
}

/// A worker served on a private runtime inside the test process.
pub struct LocalWorker {
    pub worker: Arc<Worker>,
    pub url: String,
    rt: Option<Runtime>,
}

impl LocalWorker {
    pub fn synthetic(delay_ms: u64, config: WorkerConfig) -> Self {
        let w = Worker::with_executor(config, None, Arc::new(SyntheticExecutor::new(Duration::from_millis(delay_ms))));
        Self::serve(w)
    }

    pub fn sandbox(config: WorkerConfig) -> Self {
        Self::serve(Worker::new(config, None).expect("worker"))
    }

    fn serve(w: Arc<Worker>) -> Self {
        let rt = runtime();
        let (addr, fut) = rt.block_on(worker::bind(w.clone(), "127.0.0.1:0")).expect("bind");
        rt.spawn(fut);
        Self { worker: w, url: format!("http://{addr}"), rt: Some(rt) }
    }

    /// Tears the runtime down, dropping every connection.
    pub fn crash(&mut self) {
        if let Some(rt) = self.rt.take() {
            rt.shutdown_background();
        }
    }
}

impl Drop for LocalWorker {
    fn drop(&mut self) {
        self.crash();
    }
}

pub struct LocalGateway {
    pub gateway: Arc<Gateway>,
    pub url: String,
    rt: Runtime,
}

impl LocalGateway {
    /// Enrolls `nodes` as `(node_id, url)` before serving.
    pub fn start(nodes: &[(&str, &str)], config: GatewayConfig) -> Self {
        let rt = runtime();
        let gw = rt.block_on(async {
            let gw = Gateway::new(config);
            for (id, url) in nodes {
                gw.enroll(url, Some(id.to_string())).await;
            }
            gw
        });
        let (addr, fut) = rt.block_on(gateway::bind(gw.clone(), "127.0.0.1:0")).expect("bind");
        rt.spawn(fut);
        Self { gateway: gw, url: format!("http://{addr}"), rt }
    }

    pub fn block_on<F: std::future::Future>(&self, f: F) -> F::Output {
        self.rt.block_on(f)
    }
}

pub fn fast_probes() -> GatewayConfig {
    GatewayConfig {
        probe_interval_ms: 100,
        probe_timeout_ms: 500,
        failure_threshold: 2,
        recovery_threshold: 2,
        ..GatewayConfig::default()
    }
}

/// Polls `cond` every 20 ms until it holds or `limit` passes.
pub fn wait_for(limit: Duration, mut cond: impl FnMut() -> bool) -> bool {
    let end = Instant::now() + limit;
    while Instant::now() < end {
        if cond() {
            return true;
        }
        std::thread::sleep(Duration::from_millis(20));
    }
    cond()
}

pub fn fenced(lang: &str, code: &str) -> String {
    format!("Solution:\n\n```{lang}\n{code}\n```\n")
}

pub fn echo_request(id: &str) -> judgebox_core::SubmissionRequest {
    judgebox_core::SubmissionRequest::new(
        id,
        fenced("python", "print(input())"),
        "python",
        vec![judgebox_core::TestCase::stdin("t", "7\n", "7\n")],
    )
}
