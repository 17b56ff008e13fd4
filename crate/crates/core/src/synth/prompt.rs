//! Prompt templates, shipped as text assets and rendered by plain substitution.

/// Version of the bundled template set. Bump whenever an asset changes.
pub const TEMPLATE_VERSION: &str = "1";

pub const CLASSIFY_TEMPLATE: &str = include_str!("../../assets/prompts/classify.txt");
pub const GENERATE_TEMPLATE: &str = include_str!("../../assets/prompts/generate.txt");

const EXEMPLAR_PROBLEM: &str = include_str!("../../assets/prompts/exemplar_problem.txt");
const EXEMPLAR_JUDGE: &str = include_str!("../../assets/prompts/exemplar_judge.py");

/// The few-shot pair shown to the model before the target problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exemplar {
    pub problem: String,
    pub judge_source: String,
}

impl Default for Exemplar {
    /// "Print a and b with a + b = n": any split is a valid answer.
    fn default() -> Self {
        Self { problem: EXEMPLAR_PROBLEM.trim_end().to_string(), judge_source: EXEMPLAR_JUDGE.trim_end().to_string() }
    }
}

pub fn render_classification(statement: &str) -> String {
    format!("{}\n\nTask text:\n{}\n", CLASSIFY_TEMPLATE.trim_end(), statement.trim())
}

pub fn render_generation(exemplar: &Exemplar, statement: &str) -> String {
    // Substitute the judge first so a literal "{PROBLEM}" inside it survives.
    let head = GENERATE_TEMPLATE
        .replacen("{SPECIAL_JUDGE}", &exemplar.judge_source, 1)
        .replacen("{PROBLEM}", &exemplar.problem, 1);
    format!("{}\n\nTask:\n<problem>\n{}\n</problem>\n", head.trim_end(), statement.trim())
}
