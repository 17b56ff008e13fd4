//! Special-judge synthesis: classify a problem, ask a model for a judge,
//! vet the judge in the sandbox, and measure how well vetted judges agree
//! with labeled submissions.

mod classify;
mod fidelity;
mod generate;
mod prompt;
mod provider;
mod store;
mod validate;

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use classify::{classify_problem, parse_classification, Category, Classification, DEFAULT_CONFIDENCE_FLOOR, MAX_REASON_WORDS};
pub use fidelity::{measure_fidelity, FidelityReport, Label, LabeledSolution, ProblemFidelity};
pub use generate::{check_protocol, generate_judge};
pub use prompt::{render_classification, render_generation, Exemplar, CLASSIFY_TEMPLATE, GENERATE_TEMPLATE, TEMPLATE_VERSION};
pub use provider::{LlmProvider, ProviderError, RateLimited, ScriptedProvider};
pub use store::{ArtifactStore, IndexEntry, IndexStatus, StoreError, INDEX_FILE};
pub use validate::{
    check_judge, numeric_mutant, validate_judge, ArtifactStatus, CheckKind, JudgeArtifact, SandboxHandle, ValidationEntry,
    ValidationSettings, DEFAULT_MAX_ATTEMPTS, DEFAULT_MUTANT_EPSILON,
};

use crate::extract::Extractor;
use crate::model::{JudgeProgram, ModelError, ResourceLimits, TestCase};
use crate::par;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("classification reply did not match the schema: {0}")]
    ParseFailure(String),
    #[error("no judge program in reply: {0}")]
    ExtractionFailure(String),
    #[error("judge does not follow the file/exit-code protocol: {0}")]
    ProtocolViolation(String),
    #[error("sandbox: {0}")]
    Sandbox(String),
    #[error("no validated judge for problem {0}")]
    MissingArtifact(String),
    #[error("no usable judge candidate was produced: {0}")]
    NoCandidate(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl From<ModelError> for SynthError {
    fn from(e: ModelError) -> Self {
        SynthError::InvalidInput(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemRecord {
    pub problem_id: String,
    pub statement: String,
    pub reference_solution: String,
    pub guest_language: String,
    pub tests: Vec<TestCase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub known_incorrect: Option<Vec<String>>,
}

impl ProblemRecord {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.problem_id.is_empty() {
            return Err(ModelError::Invariant("problem_id must be non-empty".into()));
        }
        if self.statement.trim().is_empty() || self.reference_solution.trim().is_empty() {
            return Err(ModelError::Invariant(format!(
                "problem {}: statement and reference_solution must be non-empty",
                self.problem_id
            )));
        }
        if self.tests.is_empty() {
            return Err(ModelError::Invariant(format!("problem {}: no tests", self.problem_id)));
        }
        self.tests.iter().try_for_each(TestCase::validate)
    }
}

/// Reads line-delimited problem records; blank lines are skipped.
pub fn load_problems(path: &Path) -> Result<Vec<ProblemRecord>, SynthError> {
    let file = std::fs::File::open(path).map_err(|e| SynthError::InvalidInput(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| SynthError::InvalidInput(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ProblemRecord = serde_json::from_str(&line)
            .map_err(|e| SynthError::InvalidInput(format!("{}:{}: {e}", path.display(), n + 1)))?;
        record
            .validate()
            .map_err(|e| SynthError::InvalidInput(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(record);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub max_attempts: usize,
    pub confidence_floor: f64,
    /// Runtime every judge is written for.
    pub judge_language: String,
    pub mutant_epsilon: f64,
    /// Problems processed at once.
    pub pipeline_width: usize,
    pub judge_limits: ResourceLimits,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            confidence_floor: DEFAULT_CONFIDENCE_FLOOR,
            judge_language: "python".into(),
            mutant_epsilon: DEFAULT_MUTANT_EPSILON,
            pipeline_width: 4,
            judge_limits: ResourceLimits::judge_default(),
        }
    }
}

impl SynthConfig {
    fn validation(&self) -> ValidationSettings {
        ValidationSettings {
            max_attempts: self.max_attempts,
            mutant_epsilon: self.mutant_epsilon,
            judge_limits: self.judge_limits.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SynthOutcome {
    NotNeeded(Classification),
    /// Confidence below the floor; left for a human.
    ManualReview(Classification),
    Artifact(JudgeArtifact),
}

pub struct Synthesizer<'a> {
    llm: &'a dyn LlmProvider,
    sandbox: &'a dyn SandboxHandle,
    config: SynthConfig,
    exemplar: Exemplar,
    extractor: Extractor,
}

impl<'a> Synthesizer<'a> {
    pub fn new(llm: &'a dyn LlmProvider, sandbox: &'a dyn SandboxHandle, config: SynthConfig) -> Self {
        Self { llm, sandbox, config, exemplar: Exemplar::default(), extractor: Extractor::default() }
    }

    pub fn with_exemplar(mut self, exemplar: Exemplar) -> Self {
        self.exemplar = exemplar;
        self
    }

    pub fn config(&self) -> &SynthConfig {
        &self.config
    }

    pub fn classify(&self, statement: &str) -> Result<Classification, SynthError> {
        classify_problem(statement, self.llm)
    }

    pub fn generate(&self, problem: &ProblemRecord, classification: &Classification) -> Result<JudgeProgram, SynthError> {
        generate_judge(problem, classification, self.llm, &self.exemplar, &self.extractor, &self.config.judge_language)
    }

    /// Validates `first` if given, otherwise starts from a fresh candidate;
    /// failed candidates are replaced through the provider.
    pub fn validate_judge(
        &self,
        problem: &ProblemRecord,
        classification: &Classification,
        first: Option<JudgeProgram>,
    ) -> Result<JudgeArtifact, SynthError> {
        let mut regenerate = || self.generate(problem, classification);
        validate_judge(problem, classification, first, &mut regenerate, self.sandbox, &self.config.validation())
    }

    pub fn synthesize(&self, problem: &ProblemRecord) -> Result<SynthOutcome, SynthError> {
        problem.validate()?;
        let classification = self.classify(&problem.statement)?;
        if !classification.needs_special_judge {
            return Ok(SynthOutcome::NotNeeded(classification));
        }
        if classification.confidence < self.config.confidence_floor {
            return Ok(SynthOutcome::ManualReview(classification));
        }
        self.validate_judge(problem, &classification, None).map(SynthOutcome::Artifact)
    }

    /// Synthesizes judges for many problems, `pipeline_width` at a time,
    /// recording every result in `store`.
    pub fn run_many(&self, problems: &[ProblemRecord], store: &ArtifactStore) -> Vec<Result<SynthOutcome, SynthError>> {
        let results = par::bounded_map(problems, self.config.pipeline_width, |_, p| {
            let outcome = self.synthesize(p);
            let recorded = match &outcome {
                Ok(SynthOutcome::Artifact(a)) => store.put(a),
                Ok(SynthOutcome::NotNeeded(c)) => store.note(&p.problem_id, IndexStatus::NotNeeded, Some(c.confidence), None),
                Ok(SynthOutcome::ManualReview(c)) => {
                    store.note(&p.problem_id, IndexStatus::ManualReview, Some(c.confidence), None)
                }
                Err(e) => store.note(&p.problem_id, IndexStatus::Failed, None, Some(e.to_string())),
            };
            Some(match recorded {
                Ok(()) => outcome,
                Err(e) => Err(SynthError::Store(e)),
            })
        });
        results.into_iter().map(|r| r.expect("bounded_map runs every item")).collect()
    }
}
