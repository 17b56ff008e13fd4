//! Isolated execution of guest programs.
//!
//! Every test runs in a fresh workspace directory under the configured root,
//! in its own process group, with an address-space limit, a CPU-time ceiling
//! and a wall-clock timeout. The whole group is killed once the test ends.
//! A worker-wide slot counter caps the number of live guest processes.

mod harness;
mod process;
mod runtime;

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tempfile::TempDir;

pub use harness::{build_harness, Harness, HarnessError};
pub use runtime::{ManifestError, RuntimeManifest, RuntimeSpec, DEFAULT_MANIFEST};

use crate::model::{ExecStatus, ExecutionOutcome, ResourceLimits, SubmissionRequest, TestCase};
use crate::par;
use process::{Finished, Launch, Termination};

pub const DEFAULT_OUTPUT_CAP: usize = 1024 * 1024;
pub const SESSION_EXPIRED: &str = "session expired";

const BIN_NAME: &str = "prog";
const GENERIC_OOM_MARKERS: [&str; 4] = ["MemoryError", "std::bad_alloc", "Cannot allocate memory", "out of memory"];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub workspace_root: PathBuf,
    pub output_cap_bytes: usize,
    /// Host variables passed through to guests; everything else is dropped.
    pub env_allowlist: Vec<String>,
    pub deny_network: bool,
    /// Worker-wide cap on simultaneously running guest processes.
    pub max_processes: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            workspace_root: std::env::temp_dir().join("judgebox-ws"),
            output_cap_bytes: DEFAULT_OUTPUT_CAP,
            env_allowlist: ["PATH", "LANG", "LC_ALL", "LC_CTYPE"].map(String::from).to_vec(),
            deny_network: false,
            max_processes: 64,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("workspace: {0}")]
    Workspace(#[source] io::Error),
    #[error("spawn {program}: {source}")]
    Spawn {
        program: String,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineStats {
    pub processes_spawned: u64,
    pub compiles: u64,
    pub live_processes: usize,
    pub peak_processes: usize,
}

struct Slots {
    free: Mutex<usize>,
    released: Condvar,
}

struct SlotGuard<'a> {
    slots: &'a Slots,
}

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.released.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        SlotGuard { slots: self }
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.slots.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.slots.released.notify_one();
    }
}

/// Result of the compile phase, shared by every test running the same source.
enum Prepared {
    Interpreted,
    Compiled { _dir: TempDir, bin: PathBuf },
    Failed { stderr: String, wall_ms: u64 },
}

pub struct Engine {
    config: EngineConfig,
    env: Vec<(String, String)>,
    cpus: Vec<usize>,
    cpu_cursor: AtomicUsize,
    slots: Slots,
    spawned: AtomicU64,
    compiles: AtomicU64,
    live: AtomicUsize,
    peak: AtomicUsize,
}

fn allowed_cpus() -> Vec<usize> {
    // SAFETY: sched_getaffinity fills a caller-owned cpu_set_t.
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        if libc::sched_getaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &mut set) != 0 {
            return vec![0];
        }
        (0..libc::CPU_SETSIZE as usize).filter(|&c| libc::CPU_ISSET(c, &set)).collect()
    }
}

fn lossy(bytes: Vec<u8>) -> String {
    String::from_utf8(bytes).unwrap_or_else(|e| String::from_utf8_lossy(e.as_bytes()).into_owned())
}

impl Engine {
    pub fn new(config: EngineConfig) -> io::Result<Self> {
        fs::create_dir_all(&config.workspace_root)?;
        let mut env: Vec<(String, String)> = config
            .env_allowlist
            .iter()
            .filter_map(|k| std::env::var(k).ok().map(|v| (k.clone(), v)))
            .collect();
        env.push(("PYTHONDONTWRITEBYTECODE".into(), "1".into()));
        let max = config.max_processes.max(1);
        Ok(Self {
            env,
            cpus: allowed_cpus(),
            cpu_cursor: AtomicUsize::new(0),
            slots: Slots { free: Mutex::new(max), released: Condvar::new() },
            spawned: AtomicU64::new(0),
            compiles: AtomicU64::new(0),
            live: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
            config,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn stats(&self) -> EngineStats {
        EngineStats {
            processes_spawned: self.spawned.load(Ordering::SeqCst),
            compiles: self.compiles.load(Ordering::SeqCst),
            live_processes: self.live.load(Ordering::SeqCst),
            peak_processes: self.peak.load(Ordering::SeqCst),
        }
    }

    fn workspace(&self) -> Result<TempDir, EngineError> {
        tempfile::Builder::new()
            .prefix("ws-")
            .tempdir_in(&self.config.workspace_root)
            .map_err(EngineError::Workspace)
    }

    fn affinity_for(&self, quota: f64) -> Option<Vec<usize>> {
        let want = (quota.ceil() as usize).max(1);
        if want >= self.cpus.len() {
            return None;
        }
        let start = self.cpu_cursor.fetch_add(want, Ordering::Relaxed);
        Some((0..want).map(|i| self.cpus[(start + i) % self.cpus.len()]).collect())
    }

    fn launch(
        &self,
        argv: &[String],
        cwd: &Path,
        stdin: Option<&[u8]>,
        timeout: Duration,
        limits: Option<&ResourceLimits>,
    ) -> Result<Finished, EngineError> {
        let _slot = self.slots.acquire();
        let live = self.live.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(live, Ordering::SeqCst);
        self.spawned.fetch_add(1, Ordering::SeqCst);
        let result = process::run(Launch {
            argv,
            cwd,
            stdin,
            timeout,
            memory_bytes: limits.map(|l| l.memory_bytes),
            cpu_seconds: limits.map(|l| (timeout.as_secs_f64() * l.cpu_quota.max(1.0)).ceil() as u64 + 1),
            affinity: limits.and_then(|l| self.affinity_for(l.cpu_quota)),
            env: &self.env,
            output_cap: self.config.output_cap_bytes,
            deny_network: self.config.deny_network,
        });
        self.live.fetch_sub(1, Ordering::SeqCst);
        result.map_err(|source| EngineError::Spawn { program: argv.first().cloned().unwrap_or_default(), source })
    }

    fn prepare(&self, source: &str, runtime: &RuntimeSpec, timeout: Duration) -> Result<Prepared, EngineError> {
        let Some(compile) = &runtime.compile_command else {
            return Ok(Prepared::Interpreted);
        };
        let dir = tempfile::Builder::new()
            .prefix("build-")
            .tempdir_in(&self.config.workspace_root)
            .map_err(EngineError::Workspace)?;
        let src = dir.path().join(&runtime.file_name);
        let bin = dir.path().join(BIN_NAME);
        fs::write(&src, source).map_err(EngineError::Workspace)?;
        let argv = runtime::expand(compile, &src, &bin, dir.path());
        self.compiles.fetch_add(1, Ordering::SeqCst);
        // compilers get the wall-clock bound only; their memory use is not the guest's
        let fin = self.launch(&argv, dir.path(), None, timeout, None)?;
        let wall_ms = fin.wall.as_millis() as u64;
        match fin.termination {
            Termination::Exited(0) if bin.exists() => Ok(Prepared::Compiled { _dir: dir, bin }),
            Termination::TimedOut => Ok(Prepared::Failed { stderr: "compilation timed out".into(), wall_ms }),
            _ => Ok(Prepared::Failed { stderr: lossy(fin.stderr), wall_ms }),
        }
    }

    fn run_prepared(
        &self,
        harness: &Harness,
        runtime: &RuntimeSpec,
        prepared: &Prepared,
        limits: &ResourceLimits,
        timeout: Duration,
    ) -> Result<ExecutionOutcome, EngineError> {
        if let Prepared::Failed { stderr, wall_ms } = prepared {
            let mut o = ExecutionOutcome::failed(&harness.test_id, ExecStatus::CompileError, stderr.clone());
            o.wall_time_ms = *wall_ms;
            return Ok(o);
        }
        let ws = self.workspace()?;
        let src = ws.path().join(&runtime.file_name);
        let bin = ws.path().join(BIN_NAME);
        fs::write(&src, &harness.entry_source).map_err(EngineError::Workspace)?;
        for (name, bytes) in &harness.files {
            fs::write(ws.path().join(name), bytes).map_err(EngineError::Workspace)?;
        }
        if let Prepared::Compiled { bin: built, .. } = prepared {
            fs::copy(built, &bin).map_err(EngineError::Workspace)?;
        }
        let argv = runtime::expand(&runtime.run_command, &src, &bin, ws.path());
        let fin = self.launch(
            &argv,
            ws.path(),
            harness.stdin_payload.as_deref().map(str::as_bytes),
            timeout,
            Some(limits),
        )?;
        Ok(outcome_from(&harness.test_id, fin, runtime, timeout))
    }

    /// Compiles (when the runtime needs it) and runs one harness.
    pub fn execute_once(
        &self,
        harness: &Harness,
        runtime: &RuntimeSpec,
        limits: &ResourceLimits,
    ) -> Result<ExecutionOutcome, EngineError> {
        let prepared = self.prepare(
            &harness.entry_source,
            runtime,
            Duration::from_millis(limits.compile_timeout_ms),
        )?;
        self.run_prepared(
            harness,
            runtime,
            &prepared,
            limits,
            Duration::from_millis(limits.per_test_timeout_ms),
        )
    }

    /// Runs every test of `request` with at most `unit_parallelism` tests in
    /// flight. See [`Engine::execute_suite_with`].
    pub fn execute_suite(
        &self,
        request: &SubmissionRequest,
        code: &str,
        runtime: &RuntimeSpec,
        unit_parallelism: usize,
    ) -> Vec<ExecutionOutcome> {
        self.execute_suite_with(request, code, runtime, unit_parallelism, |_, outcome| {
            let failed = outcome.status != ExecStatus::Ok;
            (outcome, failed)
        })
    }

    /// Like [`Engine::execute_suite`], but hands each outcome to `finish`
    /// inside the worker that produced it. `finish` returns the value to
    /// collect and whether the test counts as a definitive failure for
    /// early stopping.
    ///
    /// Identical harness sources are compiled once. Tests that cannot start
    /// before the session budget runs out are reported as timeouts with
    /// [`SESSION_EXPIRED`] in stderr.
    pub fn execute_suite_with<R, F>(
        &self,
        request: &SubmissionRequest,
        code: &str,
        runtime: &RuntimeSpec,
        unit_parallelism: usize,
        finish: F,
    ) -> Vec<R>
    where
        R: Send,
        F: Fn(&TestCase, ExecutionOutcome) -> (R, bool) + Sync,
    {
        let limits = request.limits.clone().unwrap_or_default();
        let started = Instant::now();
        let deadline = started + Duration::from_millis(limits.session_timeout_ms);
        let per_test = Duration::from_millis(limits.per_test_timeout_ms);

        let harnesses: Vec<Result<Harness, HarnessError>> = request
            .tests
            .iter()
            .map(|t| build_harness(code, t, runtime, request.entry_point.as_deref()))
            .collect();

        let mut builds: HashMap<&str, Result<Prepared, String>> = HashMap::new();
        for h in harnesses.iter().flatten() {
            if builds.contains_key(h.entry_source.as_str()) {
                continue;
            }
            let budget = deadline.saturating_duration_since(Instant::now());
            let timeout = budget.min(Duration::from_millis(limits.compile_timeout_ms));
            let prepared = self.prepare(&h.entry_source, runtime, timeout).map_err(|e| e.to_string());
            builds.insert(h.entry_source.as_str(), prepared);
        }

        let stop = AtomicBool::new(false);
        let results = par::bounded_map(&request.tests, unit_parallelism, |i, test| {
            if request.early_stop && stop.load(Ordering::SeqCst) {
                return None;
            }
            let outcome = match &harnesses[i] {
                Err(e) => ExecutionOutcome::failed(&test.id, ExecStatus::SandboxError, e.to_string()),
                Ok(h) => {
                    let remaining = deadline.saturating_duration_since(Instant::now());
                    if remaining.is_zero() {
                        ExecutionOutcome::failed(&test.id, ExecStatus::Timeout, SESSION_EXPIRED)
                    } else {
                        let timeout = per_test.min(remaining);
                        let run = match &builds[h.entry_source.as_str()] {
                            Ok(prepared) => self.run_prepared(h, runtime, prepared, &limits, timeout),
                            Err(msg) => Ok(ExecutionOutcome::failed(&test.id, ExecStatus::SandboxError, msg.clone())),
                        };
                        match run {
                            Ok(mut o) => {
                                if o.status == ExecStatus::Timeout && timeout < per_test {
                                    o.stderr.push_str(if o.stderr.is_empty() { "" } else { "\n" });
                                    o.stderr.push_str(SESSION_EXPIRED);
                                }
                                o
                            }
                            Err(e) => ExecutionOutcome::failed(&test.id, ExecStatus::SandboxError, e.to_string()),
                        }
                    }
                }
            };
            let (value, failed) = finish(test, outcome);
            if failed {
                stop.store(true, Ordering::SeqCst);
            }
            Some(value)
        });
        results.into_iter().flatten().collect()
    }
}

fn outcome_from(test_id: &str, fin: Finished, runtime: &RuntimeSpec, timeout: Duration) -> ExecutionOutcome {
    let stdout = lossy(fin.stdout);
    let stderr = lossy(fin.stderr);
    let oom = || {
        GENERIC_OOM_MARKERS
            .iter()
            .copied()
            .chain(runtime.oom_markers.iter().map(String::as_str))
            .any(|m| stderr.contains(m))
    };
    let (status, exit_code) = match fin.termination {
        Termination::TimedOut => (ExecStatus::Timeout, None),
        Termination::Signaled(libc::SIGXCPU) => (ExecStatus::Timeout, None),
        Termination::Exited(0) => (ExecStatus::Ok, Some(0)),
        Termination::Exited(code) if oom() => (ExecStatus::MemoryExceeded, Some(code)),
        Termination::Exited(code) => (ExecStatus::RuntimeError, Some(code)),
        // SIGKILL that we did not send: the kernel's OOM killer
        Termination::Signaled(libc::SIGKILL) => (ExecStatus::MemoryExceeded, None),
        Termination::Signaled(_) if oom() => (ExecStatus::MemoryExceeded, None),
        Termination::Signaled(_) => (ExecStatus::RuntimeError, None),
    };
    let mut wall_time_ms = fin.wall.as_millis() as u64;
    if status == ExecStatus::Timeout {
        wall_time_ms = wall_time_ms.max(timeout.as_millis() as u64);
    }
    ExecutionOutcome {
        test_id: test_id.to_string(),
        status,
        stdout,
        stderr,
        exit_code,
        wall_time_ms,
        truncated: fin.truncated,
    }
}
