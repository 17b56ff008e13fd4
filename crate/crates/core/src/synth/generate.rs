//! Turning a model reply into a special-judge program.

use std::sync::OnceLock;

use regex::Regex;

use super::classify::Classification;
use super::prompt::{render_generation, Exemplar};
use super::provider::LlmProvider;
use super::ProblemRecord;
use super::SynthError;
use crate::extract::Extractor;
use crate::model::JudgeProgram;
use crate::verify::{ANSWER_FILE, STDIN_FILE, STDOUT_FILE};

fn exit_call() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(sys\.exit|os\._exit|exit|quit)\s*\(").expect("valid regex"))
}

/// Static conformance with the three-file protocol: the program names all
/// three files and ends through an explicit exit call.
pub fn check_protocol(source: &str) -> Result<(), SynthError> {
    let mut missing: Vec<&str> = [STDIN_FILE, STDOUT_FILE, ANSWER_FILE]
        .into_iter()
        .filter(|f| !source.contains(f))
        .collect();
    if !exit_call().is_match(source) {
        missing.push("exit call");
    }
    if missing.is_empty() {
        Ok(())
    } else {
        Err(SynthError::ProtocolViolation(format!("missing {}", missing.join(", "))))
    }
}

pub fn generate_judge(
    problem: &ProblemRecord,
    classification: &Classification,
    llm: &dyn LlmProvider,
    exemplar: &Exemplar,
    extractor: &Extractor,
    judge_language: &str,
) -> Result<JudgeProgram, SynthError> {
    if !classification.needs_special_judge {
        return Err(SynthError::InvalidInput(format!("{} does not need a special judge", problem.problem_id)));
    }
    let reply = llm.complete(&render_generation(exemplar, &problem.statement))?;
    let code = extractor
        .extract(&reply, judge_language)
        .map_err(|e| SynthError::ExtractionFailure(e.to_string()))?
        .code;
    check_protocol(&code)?;
    Ok(JudgeProgram::new(code, judge_language))
}
