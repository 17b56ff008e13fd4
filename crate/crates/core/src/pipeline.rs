//! The worker-side evaluation of one submission: extract the program, run the
//! suite, verify every outcome and assemble the report.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::engine::{Engine, RuntimeManifest};
use crate::extract::{ExtractError, Extractor};
use crate::model::{ExecStatus, ExecutionOutcome, ResourceLimits, SubmissionRequest, TestReport, TestType, Verdict, VerificationReport};
use crate::verify::{self, JudgeContext, JudgeInvocation, JudgeRunner, JudgeVerdict, MatchPolicy};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SubmitError {
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("internal error: {0}")]
    Internal(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SandboxSettings {
    /// Tests of one request allowed to run at once.
    pub unit_parallelism: usize,
    /// Applied when a request carries no limits.
    pub default_limits: ResourceLimits,
    pub judge_limits: ResourceLimits,
}

impl Default for SandboxSettings {
    fn default() -> Self {
        Self {
            unit_parallelism: 4,
            default_limits: ResourceLimits::default(),
            judge_limits: ResourceLimits::judge_default(),
        }
    }
}

/// Local sandbox: an engine plus the runtimes and extraction rules it serves.
pub struct Sandbox {
    engine: Arc<Engine>,
    manifest: RuntimeManifest,
    extractor: Extractor,
    settings: SandboxSettings,
}

impl Sandbox {
    pub fn new(engine: Arc<Engine>, manifest: RuntimeManifest, extractor: Extractor, settings: SandboxSettings) -> Self {
        Self { engine, manifest, extractor, settings }
    }

    pub fn engine(&self) -> &Arc<Engine> {
        &self.engine
    }

    pub fn manifest(&self) -> &RuntimeManifest {
        &self.manifest
    }

    pub fn settings(&self) -> &SandboxSettings {
        &self.settings
    }

    fn check(&self, request: &SubmissionRequest) -> Result<(), SubmitError> {
        request.validate().map_err(|e| SubmitError::BadRequest(e.to_string()))?;
        let runtime = self
            .manifest
            .get(&request.guest_language)
            .ok_or_else(|| SubmitError::BadRequest(format!("unknown guest_language {:?}", request.guest_language)))?;
        if request.test_type() == Some(TestType::FunctionCall) && runtime.function_call_driver.is_none() {
            return Err(SubmitError::BadRequest(format!(
                "runtime {} does not support function_call tests",
                runtime.language_id
            )));
        }
        if let Some(judge) = &request.special_judge {
            if self.manifest.get(&judge.language).is_none() {
                return Err(SubmitError::BadRequest(format!("unknown judge language {:?}", judge.language)));
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, request: &SubmissionRequest) -> Result<VerificationReport, SubmitError> {
        self.check(request)?;
        let runtime = &self.manifest.get(&request.guest_language).expect("checked above");
        let mut request = request.clone();
        request.limits.get_or_insert_with(|| self.settings.default_limits.clone());

        let code = match self.extractor.extract(&request.raw_text, &request.guest_language) {
            Ok(r) => r.code,
            Err(ExtractError::NoCode) => return self.no_code_report(&request),
        };

        let policy = MatchPolicy::with_tolerance(request.tolerance);
        let judge = request.special_judge.as_ref().map(|program| JudgeContext {
            program,
            runner: self as &dyn JudgeRunner,
            limits: self.settings.judge_limits.clone(),
        });
        let per_test = self.engine.execute_suite_with(
            &request,
            &code,
            runtime,
            self.settings.unit_parallelism,
            |test, mut outcome| {
                let v = verify::verify_test(&outcome, test, &policy, judge.as_ref());
                if let Some(detail) = v.detail {
                    if !outcome.stderr.is_empty() {
                        outcome.stderr.push('\n');
                    }
                    outcome.stderr.push_str(&detail);
                }
                let failed = v.verdict != Verdict::Accepted;
                (TestReport { test_id: test.id.clone(), outcome, verdict: v.verdict, stage: v.stage }, failed)
            },
        );
        VerificationReport::new(&request.request_id, per_test, request.tests.len())
            .map_err(|e| SubmitError::Internal(e.to_string()))
    }

    fn no_code_report(&self, request: &SubmissionRequest) -> Result<VerificationReport, SubmitError> {
        let take = if request.early_stop { 1 } else { request.tests.len() };
        let per_test = request
            .tests
            .iter()
            .take(take)
            .map(|t| TestReport {
                test_id: t.id.clone(),
                outcome: ExecutionOutcome::failed(&t.id, ExecStatus::CompileError, "no code found in response"),
                verdict: Verdict::WrongAnswer,
                stage: crate::model::Stage::None,
            })
            .collect();
        VerificationReport::new(&request.request_id, per_test, request.tests.len())
            .map_err(|e| SubmitError::Internal(e.to_string()))
    }
}

impl JudgeRunner for Sandbox {
    fn run_judge(&self, invocation: &JudgeInvocation) -> JudgeVerdict {
        match self.manifest.get(&invocation.judge.language) {
            Some(runtime) => verify::run_special_judge(invocation, &self.engine, runtime),
            None => JudgeVerdict::JudgeError(format!("no runtime for judge language {:?}", invocation.judge.language)),
        }
    }
}
