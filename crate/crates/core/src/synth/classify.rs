//! Deciding whether a problem needs a special judge.

use serde::{Deserialize, Serialize};

use super::prompt::render_classification;
use super::provider::LlmProvider;
use super::SynthError;

pub const MAX_REASON_WORDS: usize = 160;
/// Classifications below this confidence go to manual review.
pub const DEFAULT_CONFIDENCE_FLOOR: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    MultipleSolutions,
    FloatComparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Classification {
    pub reason: String,
    pub needs_special_judge: bool,
    pub categories: Vec<Category>,
    pub confidence: f64,
}

impl Classification {
    pub fn validate(&self) -> Result<(), String> {
        if self.needs_special_judge == self.categories.is_empty() {
            return Err("needs_special_judge must be true iff categories is non-empty".into());
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(format!("confidence {} outside [0, 1]", self.confidence));
        }
        let words = self.reason.split_whitespace().count();
        if words >= MAX_REASON_WORDS {
            return Err(format!("reason has {words} words, limit is {MAX_REASON_WORDS}"));
        }
        let mut seen = self.categories.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.categories.len() {
            return Err("duplicate category".into());
        }
        Ok(())
    }

    pub fn has(&self, category: Category) -> bool {
        self.categories.contains(&category)
    }
}

/// Parses a reply that must be exactly one JSON object of the classification
/// schema. A single surrounding code fence is tolerated.
pub fn parse_classification(reply: &str) -> Result<Classification, String> {
    let body = strip_fence(reply.trim());
    let c: Classification = serde_json::from_str(body).map_err(|e| e.to_string())?;
    c.validate()?;
    Ok(c)
}

fn strip_fence(text: &str) -> &str {
    let Some(rest) = text.strip_prefix("```") else {
        return text;
    };
    let Some(rest) = rest.strip_suffix("```") else {
        return text;
    };
    // drop an info string such as "json"
    match rest.split_once('\n') {
        Some((info, body)) if !info.trim_start().starts_with('{') => body.trim(),
        _ => rest.trim(),
    }
}

/// Asks the provider once, re-asks once on a schema violation, then gives up.
pub fn classify_problem(statement: &str, llm: &dyn LlmProvider) -> Result<Classification, SynthError> {
    if statement.trim().is_empty() {
        return Err(SynthError::InvalidInput("empty problem statement".into()));
    }
    let prompt = render_classification(statement);
    let first = llm.complete(&prompt)?;
    let problem = match parse_classification(&first) {
        Ok(c) => return Ok(c),
        Err(e) => e,
    };
    tracing::debug!(%problem, "classification reply rejected, asking again");
    let retry = format!("{prompt}\nYour previous reply was rejected ({problem}). Reply with the JSON object only.\n");
    let second = llm.complete(&retry)?;
    parse_classification(&second).map_err(SynthError::ParseFailure)
}
