use std::sync::{Arc, RwLock};
use std::time::Duration;

use judgebox_core::engine::{Engine, EngineConfig, RuntimeManifest};
use judgebox_core::extract::Extractor;
use judgebox_core::model::{ExecutionOutcome, ExecStatus, Stage, TestReport, Verdict};
use judgebox_core::pipeline::{Sandbox, SandboxSettings, SubmitError};
use judgebox_core::{SubmissionRequest, VerificationReport};

use super::WorkerConfig;

/// What a worker does with an admitted request. Calls block.
pub trait Executor: Send + Sync {
    fn submit(&self, request: &SubmissionRequest) -> Result<VerificationReport, SubmitError>;
    fn runtimes(&self) -> Vec<String>;
    /// False while any configured runtime fails its version probe.
    fn healthy(&self) -> bool;
    /// Picks up a new configuration; requests already running are unaffected.
    fn reload(&self, config: &WorkerConfig) -> Result<(), String>;
}

struct Loaded {
    sandbox: Arc<Sandbox>,
    probes_ok: bool,
}

/// Executes requests in the local sandbox.
pub struct SandboxExecutor {
    engine: Arc<Engine>,
    current: RwLock<Loaded>,
}

fn load(engine: &Arc<Engine>, config: &WorkerConfig) -> Result<Loaded, String> {
    let manifest = match &config.runtime_manifest_path {
        Some(p) => RuntimeManifest::load(p).map_err(|e| e.to_string())?,
        None => RuntimeManifest::builtin(),
    };
    let failing = manifest.failing_probes();
    if !failing.is_empty() {
        tracing::warn!(?failing, "runtime version probes failed");
    }
    let extractor = Extractor::new(&config.extraction).map_err(|e| format!("extraction config: {e}"))?;
    let settings = SandboxSettings {
        unit_parallelism: config.unit_parallelism,
        default_limits: config.default_limits.clone(),
        judge_limits: config.judge_limits.clone(),
    };
    Ok(Loaded { sandbox: Arc::new(Sandbox::new(engine.clone(), manifest, extractor, settings)), probes_ok: failing.is_empty() })
}

impl SandboxExecutor {
    pub fn new(config: &WorkerConfig) -> Result<Self, String> {
        let engine = Arc::new(
            Engine::new(EngineConfig {
                workspace_root: config.workspace_root.clone(),
                deny_network: config.deny_network,
                max_processes: config.max_concurrent_requests * config.unit_parallelism,
                ..EngineConfig::default()
            })
            .map_err(|e| format!("workspace root {}: {e}", config.workspace_root.display()))?,
        );
        let loaded = load(&engine, config)?;
        Ok(Self { engine, current: RwLock::new(loaded) })
    }

    pub fn engine(&self) -> &Arc<Engine> {
        &self.engine
    }

    pub fn sandbox(&self) -> Arc<Sandbox> {
        self.current.read().unwrap_or_else(|e| e.into_inner()).sandbox.clone()
    }
}

impl Executor for SandboxExecutor {
    fn submit(&self, request: &SubmissionRequest) -> Result<VerificationReport, SubmitError> {
        self.sandbox().evaluate(request)
    }

    fn runtimes(&self) -> Vec<String> {
        self.sandbox().manifest().languages()
    }

    fn healthy(&self) -> bool {
        self.current.read().unwrap_or_else(|e| e.into_inner()).probes_ok
    }

    fn reload(&self, config: &WorkerConfig) -> Result<(), String> {
        let loaded = load(&self.engine, config)?;
        *self.current.write().unwrap_or_else(|e| e.into_inner()) = loaded;
        Ok(())
    }
}

/// Load-testing stand-in: waits a fixed time and accepts every test.
/// Runs no guest code.
pub struct SyntheticExecutor {
    delay: RwLock<Duration>,
}

impl SyntheticExecutor {
    pub fn new(delay: Duration) -> Self {
        Self { delay: RwLock::new(delay) }
    }
}

impl Executor for SyntheticExecutor {
    fn submit(&self, request: &SubmissionRequest) -> Result<VerificationReport, SubmitError> {
        request.validate().map_err(|e| SubmitError::BadRequest(e.to_string()))?;
        let delay = *self.delay.read().unwrap_or_else(|e| e.into_inner());
        std::thread::sleep(delay);
        let per_test = request
            .tests
            .iter()
            .map(|t| TestReport {
                test_id: t.id.clone(),
                outcome: ExecutionOutcome {
                    test_id: t.id.clone(),
                    status: ExecStatus::Ok,
                    stdout: t.expected.clone(),
                    stderr: String::new(),
                    exit_code: Some(0),
                    wall_time_ms: delay.as_millis() as u64,
                    truncated: false,
                },
                verdict: Verdict::Accepted,
                stage: Stage::ExactMatch,
            })
            .collect();
        VerificationReport::new(&request.request_id, per_test, request.tests.len()).map_err(|e| SubmitError::Internal(e.to_string()))
    }

    fn runtimes(&self) -> Vec<String> {
        vec!["synthetic".into()]
    }

    fn healthy(&self) -> bool {
        true
    }

    fn reload(&self, config: &WorkerConfig) -> Result<(), String> {
        if let Some(ms) = config.synthetic_delay_ms {
            *self.delay.write().unwrap_or_else(|e| e.into_inner()) = Duration::from_millis(ms);
        }
        Ok(())
    }
}
