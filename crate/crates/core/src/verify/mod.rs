//! Two-stage verdicts: normalized exact match first, the special judge only
//! when that fails.

mod judge;

use serde::{Deserialize, Serialize};

pub use judge::{run_special_judge, verdict_from_exit, JudgeInvocation, JudgeRunner, JudgeVerdict, ANSWER_FILE, STDIN_FILE, STDOUT_FILE};

use crate::model::{ExecStatus, ExecutionOutcome, JudgeProgram, ResourceLimits, Stage, TestCase, TestType, ToleranceSpec, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchPolicy {
    pub tolerance: Option<ToleranceSpec>,
    pub normalize_trailing_ws: bool,
    pub normalize_blank_tail: bool,
}

impl Default for MatchPolicy {
    fn default() -> Self {
        Self { tolerance: None, normalize_trailing_ws: true, normalize_blank_tail: true }
    }
}

impl MatchPolicy {
    pub fn with_tolerance(tolerance: Option<ToleranceSpec>) -> Self {
        Self { tolerance, ..Self::default() }
    }
}

fn normalize_with(text: &str, trailing_ws: bool, blank_tail: bool) -> String {
    let text = text.replace("\r\n", "\n");
    let mut lines: Vec<&str> = text
        .split('\n')
        .map(|l| if trailing_ws { l.trim_end() } else { l })
        .collect();
    if blank_tail {
        while lines.last().is_some_and(|l| l.trim().is_empty()) {
            lines.pop();
        }
    }
    lines.join("\n")
}

/// CRLF to LF, trailing whitespace stripped from every line, trailing blank
/// lines dropped. Interior blank lines and spacing are kept.
pub fn normalize(text: &str) -> String {
    normalize_with(text, true, true)
}

/// A token is numeric iff it is a complete finite decimal literal:
/// optional sign, digits with optional fraction, optional exponent.
pub fn parse_numeric(token: &str) -> Option<f64> {
    let body = token.strip_prefix(['+', '-']).unwrap_or(token);
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(i) => (&body[..i], Some(&body[i + 1..])),
        None => (body, None),
    };
    let (int, frac) = match mantissa.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (mantissa, None),
    };
    let digits = |s: &str| s.bytes().all(|b| b.is_ascii_digit());
    let mantissa_ok = digits(int)
        && frac.is_none_or(digits)
        && (!int.is_empty() || frac.is_some_and(|f| !f.is_empty()));
    let exponent_ok = exponent.is_none_or(|e| {
        let e = e.strip_prefix(['+', '-']).unwrap_or(e);
        !e.is_empty() && digits(e)
    });
    if !(mantissa_ok && exponent_ok) {
        return None;
    }
    token.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn tokens_match(a: &str, b: &str, tol: &ToleranceSpec) -> bool {
    if tol.epsilon == 0.0 {
        return a == b;
    }
    match (parse_numeric(a), parse_numeric(b)) {
        (Some(x), Some(y)) => {
            let diff = (x - y).abs();
            diff <= tol.epsilon || (tol.relative && diff <= tol.epsilon * y.abs().max(1.0))
        }
        _ => a == b,
    }
}

pub fn exact_match(actual: &str, expected: &str, policy: &MatchPolicy) -> bool {
    let norm = |s| normalize_with(s, policy.normalize_trailing_ws, policy.normalize_blank_tail);
    if norm(actual) == norm(expected) {
        return true;
    }
    let Some(tol) = &policy.tolerance else {
        return false;
    };
    let mut a = actual.split_whitespace();
    let mut b = expected.split_whitespace();
    loop {
        match (a.next(), b.next()) {
            (None, None) => return true,
            (Some(x), Some(y)) if tokens_match(x, y, tol) => {}
            _ => return false,
        }
    }
}

/// Re-encodes JSON text compactly so `function_call` results compare by
/// value. Text that is not JSON is returned unchanged.
fn canonical_json(text: &str) -> String {
    match serde_json::from_str::<serde_json::Value>(text.trim()) {
        Ok(v) => v.to_string(),
        Err(_) => text.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestVerdict {
    pub verdict: Verdict,
    pub stage: Stage,
    /// Judge diagnostics when the judge itself failed.
    pub detail: Option<String>,
}

impl TestVerdict {
    fn new(verdict: Verdict, stage: Stage) -> Self {
        Self { verdict, stage, detail: None }
    }
}

/// Special judge plus the machinery to run it.
pub struct JudgeContext<'a> {
    pub program: &'a JudgeProgram,
    pub runner: &'a dyn JudgeRunner,
    pub limits: ResourceLimits,
}

pub fn verify_test(
    outcome: &ExecutionOutcome,
    test: &TestCase,
    policy: &MatchPolicy,
    judge: Option<&JudgeContext<'_>>,
) -> TestVerdict {
    match outcome.status {
        ExecStatus::Ok => {}
        ExecStatus::SandboxError => return TestVerdict::new(Verdict::Error, Stage::None),
        ExecStatus::CompileError | ExecStatus::RuntimeError | ExecStatus::Timeout | ExecStatus::MemoryExceeded => {
            return TestVerdict::new(Verdict::WrongAnswer, Stage::None)
        }
    }
    if outcome.truncated {
        let mut v = TestVerdict::new(Verdict::Error, Stage::None);
        v.detail = Some("output exceeded the capture limit".into());
        return v;
    }
    if test.test_type == TestType::Assert {
        return TestVerdict::new(Verdict::Accepted, Stage::ExactMatch);
    }

    let matched = if test.test_type == TestType::FunctionCall {
        exact_match(&canonical_json(&outcome.stdout), &canonical_json(&test.expected), policy)
    } else {
        exact_match(&outcome.stdout, &test.expected, policy)
    };
    if matched {
        return TestVerdict::new(Verdict::Accepted, Stage::ExactMatch);
    }
    let Some(ctx) = judge else {
        return TestVerdict::new(Verdict::WrongAnswer, Stage::ExactMatch);
    };
    let invocation = JudgeInvocation {
        stdin_file: test.input.clone().into_bytes(),
        stdout_file: test.expected.clone().into_bytes(),
        answer_file: outcome.stdout.clone().into_bytes(),
        judge: ctx.program.clone(),
        limits: ctx.limits.clone(),
    };
    match ctx.runner.run_judge(&invocation) {
        JudgeVerdict::Accepted => TestVerdict::new(Verdict::Accepted, Stage::SpecialJudge),
        JudgeVerdict::WrongAnswer => TestVerdict::new(Verdict::WrongAnswer, Stage::SpecialJudge),
        JudgeVerdict::JudgeError(msg) => {
            let mut v = TestVerdict::new(Verdict::Error, Stage::SpecialJudge);
            v.detail = Some(msg);
            v
        }
    }
}
