use std::collections::BTreeMap;

use crate::engine::{Engine, Harness, RuntimeSpec};
use crate::model::{ExecStatus, JudgeProgram, ResourceLimits};

pub const STDIN_FILE: &str = "stdin.txt";
pub const STDOUT_FILE: &str = "stdout.txt";
pub const ANSWER_FILE: &str = "answer.txt";

/// Everything a special judge sees. The three files are written verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct JudgeInvocation {
    /// Test input.
    pub stdin_file: Vec<u8>,
    /// Reference output.
    pub stdout_file: Vec<u8>,
    /// Participant output.
    pub answer_file: Vec<u8>,
    pub judge: JudgeProgram,
    pub limits: ResourceLimits,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum JudgeVerdict {
    Accepted,
    WrongAnswer,
    /// The judge crashed, timed out or used an exit code outside {0, 1}.
    JudgeError(String),
}

pub trait JudgeRunner: Send + Sync {
    fn run_judge(&self, invocation: &JudgeInvocation) -> JudgeVerdict;
}

/// Exit 0 accepts, exit 1 rejects, anything else is a broken judge.
pub fn verdict_from_exit(exit_code: Option<i32>, stderr: &str) -> JudgeVerdict {
    match exit_code {
        Some(0) => JudgeVerdict::Accepted,
        Some(1) => JudgeVerdict::WrongAnswer,
        Some(code) => JudgeVerdict::JudgeError(format!("judge exited with {code}: {stderr}")),
        None => JudgeVerdict::JudgeError(format!("judge terminated abnormally: {stderr}")),
    }
}

/// Runs `invocation.judge` in a fresh workspace holding `stdin.txt`,
/// `stdout.txt` and `answer.txt`, with the workspace as working directory.
pub fn run_special_judge(invocation: &JudgeInvocation, engine: &Engine, runtime: &RuntimeSpec) -> JudgeVerdict {
    if invocation.judge.source.trim().is_empty() {
        return JudgeVerdict::JudgeError("empty judge source".into());
    }
    let files = BTreeMap::from([
        (STDIN_FILE.to_string(), invocation.stdin_file.clone()),
        (STDOUT_FILE.to_string(), invocation.stdout_file.clone()),
        (ANSWER_FILE.to_string(), invocation.answer_file.clone()),
    ]);
    let harness = Harness {
        test_id: "special-judge".into(),
        entry_source: invocation.judge.source.clone(),
        stdin_payload: None,
        files,
    };
    match engine.execute_once(&harness, runtime, &invocation.limits) {
        Ok(outcome) => match outcome.status {
            ExecStatus::Timeout => JudgeVerdict::JudgeError("judge timed out".into()),
            ExecStatus::MemoryExceeded => JudgeVerdict::JudgeError(format!("judge ran out of memory: {}", outcome.stderr)),
            ExecStatus::CompileError => JudgeVerdict::JudgeError(format!("judge failed to build: {}", outcome.stderr)),
            _ if runtime.crash_markers.iter().any(|m| outcome.stderr.contains(m.as_str())) => {
                JudgeVerdict::JudgeError(format!("judge crashed: {}", outcome.stderr))
            }
            _ => verdict_from_exit(outcome.exit_code, &outcome.stderr),
        },
        Err(e) => JudgeVerdict::JudgeError(e.to_string()),
    }
}
