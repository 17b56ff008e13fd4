//! Vetting a candidate judge against the problem's own reference solution.

use serde::{Deserialize, Serialize};

use super::classify::{Category, Classification};
use super::{ProblemRecord, SynthError};
use crate::model::{ExecStatus, JudgeProgram, ResourceLimits, SubmissionRequest, Verdict, VerificationReport};
use crate::pipeline::{Sandbox, SubmitError};
use crate::verify::{normalize, parse_numeric, JudgeInvocation, JudgeRunner, JudgeVerdict};

pub const DEFAULT_MAX_ATTEMPTS: usize = 20;
pub const DEFAULT_MUTANT_EPSILON: f64 = 1e-6;

/// What the synthesis pipeline needs from a sandbox: full evaluations and
/// direct judge runs.
pub trait SandboxHandle: Send + Sync {
    fn evaluate(&self, request: &SubmissionRequest) -> Result<VerificationReport, SubmitError>;
    fn judge(&self, invocation: &JudgeInvocation) -> JudgeVerdict;
}

impl SandboxHandle for Sandbox {
    fn evaluate(&self, request: &SubmissionRequest) -> Result<VerificationReport, SubmitError> {
        Sandbox::evaluate(self, request)
    }

    fn judge(&self, invocation: &JudgeInvocation) -> JudgeVerdict {
        self.run_judge(invocation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactStatus {
    Candidate,
    Validated,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Fidelity,
    Robustness,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationEntry {
    pub check: CheckKind,
    pub test_id: String,
    pub passed: bool,
    pub attempt: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeArtifact {
    pub problem_id: String,
    pub judge: JudgeProgram,
    pub classification: Classification,
    pub status: ArtifactStatus,
    pub attempts_used: usize,
    /// Checks run against `judge`.
    pub validation_log: Vec<ValidationEntry>,
    /// Checks run against earlier, discarded candidates.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<ValidationEntry>,
    /// Replies that never became a runnable candidate (extraction or protocol failures).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub generation_errors: Vec<String>,
}

impl JudgeArtifact {
    pub fn is_validated(&self) -> bool {
        self.status == ArtifactStatus::Validated
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSettings {
    pub max_attempts: usize,
    /// Perturbation unit for the float mutant, applied as 10 x epsilon.
    pub mutant_epsilon: f64,
    pub judge_limits: ResourceLimits,
}

impl Default for ValidationSettings {
    fn default() -> Self {
        Self {
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            mutant_epsilon: DEFAULT_MUTANT_EPSILON,
            judge_limits: ResourceLimits::judge_default(),
        }
    }
}

fn sandbox_err(e: SubmitError) -> SynthError {
    SynthError::Sandbox(e.to_string())
}

fn run_solution(
    sandbox: &dyn SandboxHandle,
    problem: &ProblemRecord,
    solution: &str,
    judge: &JudgeProgram,
    request_id: String,
) -> Result<VerificationReport, SynthError> {
    let mut request = SubmissionRequest::new(request_id, solution, &problem.guest_language, problem.tests.clone());
    request.special_judge = Some(judge.clone());
    let report = sandbox.evaluate(&request).map_err(sandbox_err)?;
    if let Some(t) = report.per_test.iter().find(|t| t.outcome.status == ExecStatus::SandboxError) {
        return Err(SynthError::Sandbox(format!("test {}: {}", t.test_id, t.outcome.stderr)));
    }
    Ok(report)
}

/// Replaces the first numeric token of `text` with its value moved by `delta`.
/// None when there is no numeric token or the change is not visible in print.
pub fn numeric_mutant(text: &str, delta: f64) -> Option<String> {
    let mut offset = 0;
    for token in text.split_whitespace() {
        let start = offset + text[offset..].find(token).expect("token comes from text");
        offset = start + token.len();
        let Some(v) = parse_numeric(token) else { continue };
        let moved = format!("{}", v + delta);
        if moved == token || parse_numeric(&moved) == Some(v) {
            return None;
        }
        return Some(format!("{}{}{}", &text[..start], moved, &text[offset..]));
    }
    None
}

/// Runs every check once against `judge`. Sandbox failures abort the whole
/// validation rather than count as a failed check.
pub fn check_judge(
    problem: &ProblemRecord,
    classification: &Classification,
    judge: &JudgeProgram,
    sandbox: &dyn SandboxHandle,
    settings: &ValidationSettings,
    attempt: usize,
) -> Result<Vec<ValidationEntry>, SynthError> {
    let mut log = Vec::new();
    let entry = |check, test_id: &str, passed, detail: Option<String>| ValidationEntry {
        check,
        test_id: test_id.to_string(),
        passed,
        attempt,
        detail,
    };
    let invoke = |test: &crate::model::TestCase, answer: &str| {
        sandbox.judge(&JudgeInvocation {
            stdin_file: test.input.clone().into_bytes(),
            stdout_file: test.expected.clone().into_bytes(),
            answer_file: answer.as_bytes().to_vec(),
            judge: judge.clone(),
            limits: settings.judge_limits.clone(),
        })
    };

    // Fidelity: the reference passes through the pipeline, and the judge also
    // accepts the reference output when asked directly (exact match would
    // otherwise hide a judge that rejects everything).
    let reference = run_solution(
        sandbox,
        problem,
        &problem.reference_solution,
        judge,
        format!("{}-reference-{attempt}", problem.problem_id),
    )?;
    for test in &problem.tests {
        let Some(report) = reference.per_test.iter().find(|t| t.test_id == test.id) else {
            log.push(entry(CheckKind::Fidelity, &test.id, false, Some("test was not run".into())));
            continue;
        };
        if report.verdict != Verdict::Accepted {
            let detail = format!("reference {:?}: {}", report.verdict, report.outcome.stderr);
            log.push(entry(CheckKind::Fidelity, &test.id, false, Some(detail)));
            continue;
        }
        let direct = invoke(test, &report.outcome.stdout);
        let passed = direct == JudgeVerdict::Accepted;
        log.push(entry(CheckKind::Fidelity, &test.id, passed, (!passed).then(|| format!("judge said {direct:?}"))));
    }

    // Robustness: empty output is never a valid answer to a non-empty reference.
    for test in problem.tests.iter().filter(|t| !normalize(&t.expected).is_empty()) {
        let v = invoke(test, "");
        let passed = v == JudgeVerdict::WrongAnswer;
        log.push(entry(CheckKind::Robustness, &test.id, passed, (!passed).then(|| format!("empty output: {v:?}"))));
    }

    match problem.known_incorrect.as_deref() {
        Some(wrong) if !wrong.is_empty() => {
            for (i, solution) in wrong.iter().enumerate() {
                let id = format!("known_incorrect:{i}");
                let report = run_solution(sandbox, problem, solution, judge, format!("{}-wrong{i}-{attempt}", problem.problem_id))?;
                let passed = !report.accepted;
                log.push(entry(CheckKind::Robustness, &id, passed, (!passed).then(|| "accepted a known-incorrect solution".into())));
            }
        }
        _ if classification.has(Category::FloatComparison) => {
            let delta = 10.0 * settings.mutant_epsilon;
            for test in &problem.tests {
                let Some(mutant) = numeric_mutant(&test.expected, delta) else { continue };
                let v = invoke(test, &mutant);
                let passed = v == JudgeVerdict::WrongAnswer;
                let id = format!("{}:mutant", test.id);
                log.push(entry(CheckKind::Robustness, &id, passed, (!passed).then(|| format!("perturbed output: {v:?}"))));
            }
        }
        _ => {}
    }
    Ok(log)
}

/// Checks `first` (or a fresh candidate from `regenerate`) and keeps asking
/// for new candidates until one passes every check or `max_attempts`
/// candidates have been requested.
pub fn validate_judge(
    problem: &ProblemRecord,
    classification: &Classification,
    first: Option<JudgeProgram>,
    regenerate: &mut dyn FnMut() -> Result<JudgeProgram, SynthError>,
    sandbox: &dyn SandboxHandle,
    settings: &ValidationSettings,
) -> Result<JudgeArtifact, SynthError> {
    if settings.max_attempts == 0 {
        return Err(SynthError::InvalidInput("max_attempts must be at least 1".into()));
    }
    problem.validate()?;
    let mut first = first;
    let mut history = Vec::new();
    let mut generation_errors = Vec::new();
    let mut last: Option<(JudgeProgram, Vec<ValidationEntry>)> = None;

    for attempt in 1..=settings.max_attempts {
        let candidate = match first.take() {
            Some(j) => Ok(j),
            None => regenerate(),
        };
        let judge = match candidate {
            Ok(j) => j,
            Err(e @ (SynthError::ExtractionFailure(_) | SynthError::ProtocolViolation(_))) => {
                generation_errors.push(format!("attempt {attempt}: {e}"));
                continue;
            }
            Err(e) => return Err(e),
        };
        let log = check_judge(problem, classification, &judge, sandbox, settings, attempt)?;
        let ok = log.iter().all(|e| e.passed);
        tracing::debug!(problem = %problem.problem_id, attempt, ok, "judge candidate checked");
        if let Some((_, old)) = last.replace((judge, log)) {
            history.extend(old);
        }
        if ok {
            let (judge, validation_log) = last.expect("just set");
            return Ok(JudgeArtifact {
                problem_id: problem.problem_id.clone(),
                judge,
                classification: classification.clone(),
                status: ArtifactStatus::Validated,
                attempts_used: attempt,
                validation_log,
                history,
                generation_errors,
            });
        }
    }
    let Some((judge, validation_log)) = last else {
        return Err(SynthError::NoCandidate(generation_errors.join("; ")));
    };
    Ok(JudgeArtifact {
        problem_id: problem.problem_id.clone(),
        judge,
        classification: classification.clone(),
        status: ArtifactStatus::Rejected,
        attempts_used: settings.max_attempts,
        validation_log,
        history,
        generation_errors,
    })
}
