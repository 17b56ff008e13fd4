//! Benchmark evaluation: load a normalized dataset and pre-generated model
//! outputs, send every (problem, sample) pair through a dispatcher, and
//! score pass@1.

mod report;
mod run;

use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use report::{emit_report, ReportFormat};
pub use run::{run_eval, CheckpointRecord, DispatchError, Dispatcher, LocalDispatcher, RunOptions};

use crate::model::{JudgeProgram, ResourceLimits, TestCase, TestType, ToleranceSpec};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error("{path}:{line}: {message}")]
    Schema { path: PathBuf, line: usize, message: String },
    #[error("no generations for problem {0}")]
    MissingGeneration(String),
    #[error("no capacity after {completed} of {total} pairs; partial results kept")]
    NoCapacity { completed: usize, total: usize },
    #[error("{failed} pairs hit infrastructure errors ({first}); partial results kept")]
    Infrastructure { failed: usize, first: String },
}

impl EvalError {
    /// CLI exit code: 2 for configuration and schema problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            EvalError::Config(_) | EvalError::Schema { .. } | EvalError::MissingGeneration(_) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io { path: path.to_path_buf(), source }
}

fn default_samples() -> usize {
    1
}
fn default_concurrency() -> usize {
    8
}
fn default_batch_size() -> usize {
    16
}
fn default_judge_language() -> String {
    "python".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub name: String,
    /// Relative paths are resolved against the config file's directory.
    pub dataset_path: PathBuf,
    pub test_type: TestType,
    pub guest_language: String,
    #[serde(default)]
    pub tolerance: Option<ToleranceSpec>,
    /// Directory of `<problem_id>.<ext>` judge sources.
    #[serde(default)]
    pub judges_dir: Option<PathBuf>,
    #[serde(default = "default_judge_language")]
    pub judge_language: String,
    #[serde(default = "default_samples")]
    pub samples_per_problem: usize,
    #[serde(default)]
    pub limits: ResourceLimits,
    #[serde(default)]
    pub gateway_address: Option<String>,
    /// Batches in flight at once.
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub early_stop: bool,
}

impl BenchmarkConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, EvalError> {
        let mut c: Self = toml::from_str(text).map_err(|e| EvalError::Config(e.to_string()))?;
        for p in [Some(&mut c.dataset_path), c.judges_dir.as_mut()].into_iter().flatten() {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::Config(m.to_string()));
        if self.name.is_empty() {
            return bad("name must be non-empty");
        }
        if self.samples_per_problem == 0 {
            return bad("samples_per_problem must be at least 1");
        }
        if self.concurrency == 0 || self.batch_size == 0 {
            return bad("concurrency and batch_size must be at least 1");
        }
        if self.judges_dir.is_some() && self.test_type != TestType::StdinStdout {
            return bad("judges_dir is only supported for stdin_stdout benchmarks");
        }
        self.limits.validate().map_err(|e| EvalError::Config(e.to_string()))?;
        if let Some(t) = &self.tolerance {
            t.validate().map_err(|e| EvalError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemEntry {
    pub problem_id: String,
    pub prompt: String,
    pub tests: Vec<TestCase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_point: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_solution: Option<String>,
    /// Usually attached from `judges_dir`; may also be given inline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub special_judge: Option<JudgeProgram>,
}

impl ProblemEntry {
    fn check(&self, config: &BenchmarkConfig) -> Result<(), String> {
        if self.problem_id.is_empty() {
            return Err("empty problem_id".into());
        }
        if self.tests.is_empty() {
            return Err(format!("problem {}: tests must be non-empty", self.problem_id));
        }
        for t in &self.tests {
            t.validate().map_err(|e| e.to_string())?;
            if t.test_type != config.test_type {
                return Err(format!("test {} is {}, benchmark expects {}", t.id, t.test_type, config.test_type));
            }
        }
        if config.test_type == TestType::FunctionCall && self.entry_point.is_none() {
            return Err(format!("problem {}: function_call benchmarks need entry_point", self.problem_id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub entries: Vec<ProblemEntry>,
    pub warnings: Vec<String>,
}

pub fn load_dataset(config: &BenchmarkConfig) -> Result<Dataset, EvalError> {
    let path = &config.dataset_path;
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let schema = |message: String| EvalError::Schema { path: path.clone(), line: n + 1, message };
        let entry: ProblemEntry = serde_json::from_str(&line).map_err(|e| schema(e.to_string()))?;
        entry.check(config).map_err(schema)?;
        if !seen.insert(entry.problem_id.clone()) {
            return Err(schema(format!("duplicate problem_id {}", entry.problem_id)));
        }
        entries.push(entry);
    }
    let mut warnings = Vec::new();
    if let Some(dir) = &config.judges_dir {
        attach_judges(&mut entries, dir, &config.judge_language, &mut warnings)?;
    }
    Ok(Dataset { entries, warnings })
}

fn attach_judges(entries: &mut [ProblemEntry], dir: &Path, language: &str, warnings: &mut Vec<String>) -> Result<(), EvalError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    for file in files {
        let Some(stem) = file.file_stem().and_then(|s| s.to_str()) else { continue };
        let Some(entry) = entries.iter_mut().find(|e| e.problem_id == stem) else {
            let w = format!("judge {} matches no problem; ignored", file.display());
            tracing::warn!("{w}");
            warnings.push(w);
            continue;
        };
        let source = std::fs::read_to_string(&file).map_err(io_err(&file))?;
        entry.special_judge = Some(JudgeProgram::new(source, language));
    }
    Ok(())
}

/// problem_id to raw model outputs.
pub type Generations = BTreeMap<String, Vec<String>>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerationLine {
    problem_id: String,
    samples: Vec<String>,
}

/// Reads `{"problem_id": ..., "samples": [...]}` lines. Repeated ids append.
pub fn load_generations(path: &Path) -> Result<Generations, EvalError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut out = Generations::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let g: GenerationLine = serde_json::from_str(&line)
            .map_err(|e| EvalError::Schema { path: path.to_path_buf(), line: n + 1, message: e.to_string() })?;
        out.entry(g.problem_id).or_default().extend(g.samples);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemScore {
    pub problem_id: String,
    pub n_samples: usize,
    pub n_passed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub benchmark: String,
    pub pass_at_1: f64,
    /// Sorted by problem_id.
    pub per_problem: Vec<ProblemScore>,
    pub wall_time_s: f64,
    pub throughput_tasks_per_s: f64,
}

/// Mean over problems of the per-problem pass rate.
pub fn pass_at_1(per_problem: &[ProblemScore]) -> f64 {
    let rates: Vec<f64> = per_problem
        .iter()
        .filter(|p| p.n_samples > 0)
        .map(|p| p.n_passed as f64 / p.n_samples as f64)
        .collect();
    if rates.is_empty() {
        0.0
    } else {
        rates.iter().sum::<f64>() / rates.len() as f64
    }
}

impl EvalResult {
    pub fn from_scores(benchmark: impl Into<String>, mut per_problem: Vec<ProblemScore>, wall_time_s: f64, tasks: usize) -> Self {
        per_problem.sort_by(|a, b| a.problem_id.cmp(&b.problem_id));
        Self {
            benchmark: benchmark.into(),
            pass_at_1: pass_at_1(&per_problem),
            per_problem,
            wall_time_s,
            throughput_tasks_per_s: if wall_time_s > 0.0 { tasks as f64 / wall_time_s } else { 0.0 },
        }
    }

    /// Equal up to the timing fields.
    pub fn same_scores(&self, other: &EvalResult) -> bool {
        self.benchmark == other.benchmark && self.pass_at_1 == other.pass_at_1 && self.per_problem == other.per_problem
    }
}
