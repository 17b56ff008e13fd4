use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{io_err, BenchmarkConfig, EvalError, EvalResult, Generations, ProblemEntry, ProblemScore};
use crate::model::{SubmissionRequest, VerificationReport};
use crate::par;
use crate::pipeline::{Sandbox, SubmitError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DispatchError {
    /// Every node is busy or gone.
    #[error("no capacity: {0}")]
    NoCapacity(String),
    #[error("rejected: {0}")]
    BadRequest(String),
    #[error("transport: {0}")]
    Transport(String),
}

/// Where evaluation requests go: a gateway, or an in-process sandbox.
pub trait Dispatcher: Send + Sync {
    /// One result per request, in request order.
    fn dispatch_batch(&self, requests: &[SubmissionRequest]) -> Vec<Result<VerificationReport, DispatchError>>;
}

/// Runs requests on a local sandbox, one after another.
pub struct LocalDispatcher<'a>(pub &'a Sandbox);

impl Dispatcher for LocalDispatcher<'_> {
    fn dispatch_batch(&self, requests: &[SubmissionRequest]) -> Vec<Result<VerificationReport, DispatchError>> {
        requests
            .iter()
            .map(|r| {
                self.0.evaluate(r).map_err(|e| match e {
                    SubmitError::BadRequest(m) => DispatchError::BadRequest(m),
                    SubmitError::Internal(m) => DispatchError::Transport(m),
                })
            })
            .collect()
    }
}

/// One finished (problem, sample) pair, as stored in the checkpoint file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub problem_id: String,
    pub sample: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Partial-result file; finished pairs are appended as they complete.
    pub checkpoint: Option<PathBuf>,
    /// Keep the records already in `checkpoint` and skip those pairs.
    pub resume: bool,
    /// Overrides the configured client-side concurrency.
    pub concurrency: Option<usize>,
}

fn read_checkpoint(path: &PathBuf) -> Result<BTreeMap<(String, usize), bool>, EvalError> {
    let mut done = BTreeMap::new();
    let file = match std::fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(done),
        Err(e) => return Err(EvalError::Io { path: path.clone(), source: e }),
    };
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CheckpointRecord>(&line) {
            Ok(r) => {
                done.insert((r.problem_id, r.sample), r.passed);
            }
            // a torn last line from an interrupted write is dropped
            Err(e) => tracing::warn!(line = n + 1, error = %e, "skipping unreadable checkpoint line"),
        }
    }
    Ok(done)
}

fn build_request(config: &BenchmarkConfig, entry: &ProblemEntry, sample: usize, raw: &str) -> SubmissionRequest {
    let mut r = SubmissionRequest::new(
        format!("{}/{}/{}", config.name, entry.problem_id, sample),
        raw,
        &config.guest_language,
        entry.tests.clone(),
    );
    r.limits = Some(config.limits.clone());
    r.tolerance = config.tolerance;
    r.special_judge = entry.special_judge.clone();
    r.early_stop = config.early_stop;
    r.entry_point = entry.entry_point.clone();
    r
}

/// Scores every (problem, sample) pair. On failure, finished pairs stay in
/// the checkpoint so a resumed run only executes what is missing.
pub fn run_eval(
    config: &BenchmarkConfig,
    dataset: &[ProblemEntry],
    generations: &Generations,
    dispatcher: &dyn Dispatcher,
    options: &RunOptions,
) -> Result<EvalResult, EvalError> {
    let k = config.samples_per_problem;
    for entry in dataset {
        match generations.get(&entry.problem_id) {
            Some(s) if s.len() >= k => {
                if s.len() > k {
                    tracing::warn!(problem = %entry.problem_id, given = s.len(), used = k, "extra samples ignored");
                }
            }
            _ => return Err(EvalError::MissingGeneration(entry.problem_id.clone())),
        }
    }

    let mut done = match (&options.checkpoint, options.resume) {
        (Some(path), true) => read_checkpoint(path)?,
        _ => BTreeMap::new(),
    };
    let known: std::collections::HashSet<&str> = dataset.iter().map(|e| e.problem_id.as_str()).collect();
    done.retain(|(pid, sample), _| known.contains(pid.as_str()) && *sample < k);

    let sink = match &options.checkpoint {
        Some(path) => {
            let file = OpenOptions::new()
                .create(true)
                .write(true)
                .append(options.resume)
                .truncate(!options.resume)
                .open(path)
                .map_err(io_err(path))?;
            Some(Mutex::new(file))
        }
        None => None,
    };

    let pending: Vec<(usize, usize)> = (0..dataset.len())
        .flat_map(|i| (0..k).map(move |s| (i, s)))
        .filter(|&(i, s)| !done.contains_key(&(dataset[i].problem_id.clone(), s)))
        .collect();
    let chunks: Vec<&[(usize, usize)]> = pending.chunks(config.batch_size).collect();
    let width = options.concurrency.unwrap_or(config.concurrency).max(1);

    let started = Instant::now();
    let stop = AtomicBool::new(false);
    let finished = Mutex::new(Vec::<CheckpointRecord>::new());
    let failures = Mutex::new(Vec::<DispatchError>::new());

    par::bounded_map(&chunks, width, |_, chunk| {
        if stop.load(Ordering::SeqCst) {
            return None::<()>;
        }
        let requests: Vec<SubmissionRequest> = chunk
            .iter()
            .map(|&(i, s)| build_request(config, &dataset[i], s, &generations[&dataset[i].problem_id][s]))
            .collect();
        let results = dispatcher.dispatch_batch(&requests);
        let mut records = Vec::new();
        for (&(i, s), result) in chunk.iter().zip(results) {
            match result {
                Ok(report) if !report.has_infrastructure_error() => {
                    records.push(CheckpointRecord { problem_id: dataset[i].problem_id.clone(), sample: s, passed: report.accepted });
                }
                Ok(report) => failures
                    .lock()
                    .unwrap()
                    .push(DispatchError::Transport(format!("infrastructure error in {}", report.request_id))),
                Err(e) => {
                    if matches!(e, DispatchError::NoCapacity(_)) {
                        stop.store(true, Ordering::SeqCst);
                    }
                    failures.lock().unwrap().push(e);
                }
            }
        }
        if let Some(sink) = &sink {
            let mut file = sink.lock().unwrap();
            for r in &records {
                let line = serde_json::to_string(r).expect("record serializes");
                if let Err(e) = writeln!(file, "{line}").and_then(|_| file.flush()) {
                    tracing::error!(error = %e, "checkpoint write failed");
                }
            }
        }
        finished.lock().unwrap().extend(records);
        None
    });
    let wall = started.elapsed().as_secs_f64();

    let finished = finished.into_inner().unwrap();
    let executed = finished.len();
    for r in finished {
        done.insert((r.problem_id, r.sample), r.passed);
    }
    let failures = failures.into_inner().unwrap();
    if !failures.is_empty() {
        let total = dataset.len() * k;
        if failures.iter().any(|f| matches!(f, DispatchError::NoCapacity(_))) {
            return Err(EvalError::NoCapacity { completed: done.len(), total });
        }
        return Err(EvalError::Infrastructure { failed: failures.len(), first: failures[0].to_string() });
    }

    let per_problem = dataset
        .iter()
        .map(|e| ProblemScore {
            problem_id: e.problem_id.clone(),
            n_samples: k,
            n_passed: (0..k).filter(|&s| done.get(&(e.problem_id.clone(), s)) == Some(&true)).count(),
        })
        .collect();
    Ok(EvalResult::from_scores(&config.name, per_problem, wall, executed))
}
