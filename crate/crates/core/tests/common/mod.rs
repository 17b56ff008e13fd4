#![allow(dead_code)]

use std::sync::Arc;

use judgebox_core::engine::{Engine, EngineConfig, RuntimeManifest};
use judgebox_core::extract::Extractor;
use judgebox_core::pipeline::{Sandbox, SandboxSettings};

pub fn sandbox() -> Sandbox {
    sandbox_with(SandboxSettings::default())
}

pub fn sandbox_with(settings: SandboxSettings) -> Sandbox {
    let engine = Arc::new(Engine::new(EngineConfig::default()).expect("engine"));
    Sandbox::new(engine, RuntimeManifest::builtin(), Extractor::default(), settings)
}

pub fn fenced(lang: &str, code: &str) -> String {
    format!("Here is my solution.\n\n```{lang}\n{code}\n```\n")
}

/// Judge that accepts any permutation of 1..n, n read from stdin.
pub const PERMUTATION_JUDGE: &str = r#"import sys

def read_file(filepath):
    with open(filepath, 'r') as f:
        return f.read().strip().split('\n')

def validate_solution(stdin_path, stdout_path, answer_path):
    stdin_lines = read_file(stdin_path)
    stdout_lines = read_file(stdout_path)
    participant_output = read_file(answer_path)
    if participant_output == [''] and stdout_lines != ['']:
        return False
    n = int(stdin_lines[0])
    try:
        values = sorted(int(x) for x in participant_output[0].split())
    except ValueError:
        return False
    return len(participant_output) == 1 and values == list(range(1, n + 1))

is_valid = validate_solution("stdin.txt", "stdout.txt", "answer.txt")
sys.exit(0 if is_valid else 1)
"#;

pub const ACCEPT_ALL_JUDGE: &str = "import sys\n# reads stdin.txt, stdout.txt, answer.txt\nsys.exit(0)\n";
pub const REJECT_ALL_JUDGE: &str = "import sys\n# reads stdin.txt, stdout.txt, answer.txt\nsys.exit(1)\n";
