//! Wire types shared by the worker, the gateway and the evaluation tooling.
//!
//! Every document carries `"schema_version": 1`. Parsing is total: a malformed
//! document produces a [`ModelError`], never a partially filled value.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

const MIB: u64 = 1024 * 1024;

fn schema_v1() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invariant violation: {0}")]
    Invariant(String),
}

impl ModelError {
    pub fn is_schema(&self) -> bool {
        matches!(self, ModelError::Schema(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestType {
    StdinStdout,
    FunctionCall,
    Assert,
}

impl std::fmt::Display for TestType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TestType::StdinStdout => "stdin_stdout",
            TestType::FunctionCall => "function_call",
            TestType::Assert => "assert",
        })
    }
}

/// One check. For `function_call` tests `input` is a JSON array of positional
/// arguments and `expected` is the JSON encoding of the return value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestCase {
    pub id: String,
    pub test_type: TestType,
    #[serde(default)]
    pub input: String,
    #[serde(default)]
    pub expected: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assert_code: Option<String>,
}

impl TestCase {
    pub fn stdin(id: impl Into<String>, input: impl Into<String>, expected: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            test_type: TestType::StdinStdout,
            input: input.into(),
            expected: expected.into(),
            assert_code: None,
        }
    }

    pub fn function_call(
        id: impl Into<String>,
        args_json: impl Into<String>,
        expected_json: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            test_type: TestType::FunctionCall,
            input: args_json.into(),
            expected: expected_json.into(),
            assert_code: None,
        }
    }

    pub fn assertion(id: impl Into<String>, assert_code: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            test_type: TestType::Assert,
            input: String::new(),
            expected: String::new(),
            assert_code: Some(assert_code.into()),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.id.is_empty() {
            return Err(ModelError::Invariant("test id must be non-empty".into()));
        }
        match (self.test_type, &self.assert_code) {
            (TestType::Assert, Some(code)) if !code.trim().is_empty() => Ok(()),
            (TestType::Assert, _) => Err(ModelError::Invariant(format!(
                "test {}: assert tests require non-empty assert_code",
                self.id
            ))),
            (_, Some(_)) => Err(ModelError::Invariant(format!(
                "test {}: assert_code is only allowed on assert tests",
                self.id
            ))),
            (_, None) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResourceLimits {
    pub memory_bytes: u64,
    /// Fraction of one core; values above 1 allow several cores.
    pub cpu_quota: f64,
    pub compile_timeout_ms: u64,
    pub per_test_timeout_ms: u64,
    pub session_timeout_ms: u64,
}

impl Default for ResourceLimits {
    fn default() -> Self {
        Self {
            memory_bytes: 512 * MIB,
            cpu_quota: 1.0,
            compile_timeout_ms: 10_000,
            per_test_timeout_ms: 6_000,
            session_timeout_ms: 60_000,
        }
    }
}

impl ResourceLimits {
    /// Limits used for special-judge processes when the caller gives none.
    pub fn judge_default() -> Self {
        Self {
            memory_bytes: 1024 * MIB,
            cpu_quota: 1.0,
            compile_timeout_ms: 10_000,
            per_test_timeout_ms: 10_000,
            session_timeout_ms: 10_000,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.memory_bytes == 0 {
            return Err(ModelError::Invariant("memory_bytes must be positive".into()));
        }
        if !(self.cpu_quota.is_finite() && self.cpu_quota > 0.0) {
            return Err(ModelError::Invariant("cpu_quota must be positive".into()));
        }
        if self.compile_timeout_ms == 0 || self.per_test_timeout_ms == 0 || self.session_timeout_ms == 0 {
            return Err(ModelError::Invariant("all timeouts must be positive".into()));
        }
        if self.session_timeout_ms < self.per_test_timeout_ms {
            return Err(ModelError::Invariant(
                "session_timeout_ms must be >= per_test_timeout_ms".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    pub epsilon: f64,
    #[serde(default)]
    pub relative: bool,
}

impl ToleranceSpec {
    pub fn absolute(epsilon: f64) -> Self {
        Self { epsilon, relative: false }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.epsilon.is_finite() && self.epsilon >= 0.0 {
            Ok(())
        } else {
            Err(ModelError::Invariant("tolerance epsilon must be finite and >= 0".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeProgram {
    pub source: String,
    pub language: String,
}

impl JudgeProgram {
    pub fn new(source: impl Into<String>, language: impl Into<String>) -> Self {
        Self { source: source.into(), language: language.into() }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.source.trim().is_empty() {
            return Err(ModelError::Invariant("judge source must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmissionRequest {
    #[serde(default = "schema_v1")]
    pub schema_version: u32,
    pub request_id: String,
    pub raw_text: String,
    pub guest_language: String,
    pub tests: Vec<TestCase>,
    /// Omitted limits are filled in from the worker's configured defaults.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<ResourceLimits>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<ToleranceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub special_judge: Option<JudgeProgram>,
    #[serde(default)]
    pub early_stop: bool,
    /// Function invoked by `function_call` harnesses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_point: Option<String>,
}

impl SubmissionRequest {
    pub fn new(
        request_id: impl Into<String>,
        raw_text: impl Into<String>,
        guest_language: impl Into<String>,
        tests: Vec<TestCase>,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            request_id: request_id.into(),
            raw_text: raw_text.into(),
            guest_language: guest_language.into(),
            tests,
            limits: None,
            tolerance: None,
            special_judge: None,
            early_stop: false,
            entry_point: None,
        }
    }

    pub fn test_type(&self) -> Option<TestType> {
        self.tests.first().map(|t| t.test_type)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ModelError::Schema(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        if self.request_id.is_empty() {
            return Err(ModelError::Invariant("request_id must be non-empty".into()));
        }
        if self.tests.is_empty() {
            return Err(ModelError::Invariant("tests must be non-empty".into()));
        }
        let mut seen = HashSet::new();
        for t in &self.tests {
            t.validate()?;
            if !seen.insert(t.id.as_str()) {
                return Err(ModelError::Invariant(format!("duplicate test id {:?}", t.id)));
            }
        }
        let kind = self.tests[0].test_type;
        if let Some(t) = self.tests.iter().find(|t| t.test_type != kind) {
            return Err(ModelError::Invariant(format!(
                "mixed test types: {} and {} (test {})",
                kind, t.test_type, t.id
            )));
        }
        if kind == TestType::FunctionCall
            && self.entry_point.as_deref().is_none_or(|e| e.trim().is_empty())
        {
            return Err(ModelError::Invariant(
                "function_call suites require entry_point".into(),
            ));
        }
        if let Some(limits) = &self.limits {
            limits.validate()?;
        }
        if let Some(tol) = &self.tolerance {
            tol.validate()?;
        }
        if let Some(judge) = &self.special_judge {
            judge.validate()?;
        }
        Ok(())
    }
}

pub fn parse_submission(json_text: &str) -> Result<SubmissionRequest, ModelError> {
    let request: SubmissionRequest =
        serde_json::from_str(json_text).map_err(|e| ModelError::Schema(e.to_string()))?;
    request.validate()?;
    Ok(request)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Ok,
    CompileError,
    RuntimeError,
    Timeout,
    MemoryExceeded,
    SandboxError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutionOutcome {
    pub test_id: String,
    pub status: ExecStatus,
    pub stdout: String,
    pub stderr: String,
    pub exit_code: Option<i32>,
    pub wall_time_ms: u64,
    /// Set when stdout or stderr hit the output cap.
    #[serde(default)]
    pub truncated: bool,
}

impl ExecutionOutcome {
    pub fn failed(test_id: impl Into<String>, status: ExecStatus, stderr: impl Into<String>) -> Self {
        Self {
            test_id: test_id.into(),
            status,
            stdout: String::new(),
            stderr: stderr.into(),
            exit_code: None,
            wall_time_ms: 0,
            truncated: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    WrongAnswer,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    ExactMatch,
    SpecialJudge,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestReport {
    pub test_id: String,
    pub outcome: ExecutionOutcome,
    pub verdict: Verdict,
    pub stage: Stage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, try_from = "RawReport")]
pub struct VerificationReport {
    pub schema_version: u32,
    pub request_id: String,
    pub per_test: Vec<TestReport>,
    pub passed: usize,
    pub total: usize,
    pub accepted: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReport {
    #[serde(default = "schema_v1")]
    schema_version: u32,
    request_id: String,
    per_test: Vec<TestReport>,
    passed: usize,
    total: usize,
    accepted: bool,
}

impl TryFrom<RawReport> for VerificationReport {
    type Error = ModelError;

    fn try_from(raw: RawReport) -> Result<Self, Self::Error> {
        if raw.schema_version != SCHEMA_VERSION {
            return Err(ModelError::Schema(format!(
                "unsupported schema_version {}",
                raw.schema_version
            )));
        }
        let report = VerificationReport::new(raw.request_id, raw.per_test, raw.total)?;
        if report.passed != raw.passed || report.accepted != raw.accepted {
            return Err(ModelError::Invariant(
                "passed/accepted disagree with per_test verdicts".into(),
            ));
        }
        Ok(report)
    }
}

impl VerificationReport {
    /// Assembles a report; `passed` and `accepted` are derived from `per_test`.
    /// `total` is the number of tests in the request, which may exceed
    /// `per_test.len()` when the suite stopped early.
    pub fn new(
        request_id: impl Into<String>,
        per_test: Vec<TestReport>,
        total: usize,
    ) -> Result<Self, ModelError> {
        if per_test.is_empty() {
            return Err(ModelError::Invariant("per_test must be non-empty".into()));
        }
        if per_test.len() > total {
            return Err(ModelError::Invariant("per_test longer than total".into()));
        }
        let passed = per_test.iter().filter(|t| t.verdict == Verdict::Accepted).count();
        if per_test.len() < total && passed == per_test.len() {
            return Err(ModelError::Invariant(
                "a truncated report must contain a non-accepted entry".into(),
            ));
        }
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            request_id: request_id.into(),
            per_test,
            passed,
            total,
            accepted: passed == total,
        })
    }

    /// Any test ended in `error`: an infrastructure fault rather than a
    /// judgement about the program.
    pub fn has_infrastructure_error(&self) -> bool {
        self.per_test.iter().any(|t| t.verdict == Verdict::Error)
    }
}

pub fn serialize_report(report: &VerificationReport) -> String {
    serde_json::to_string(report).expect("report serialization is infallible")
}

pub fn parse_report(json_text: &str) -> Result<VerificationReport, ModelError> {
    serde_json::from_str(json_text).map_err(|e| {
        // try_from errors surface as custom serde messages
        let msg = e.to_string();
        if msg.starts_with("invariant violation") {
            ModelError::Invariant(msg)
        } else {
            ModelError::Schema(msg)
        }
    })
}
