//! How often a judge agrees with labeled submissions.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::validate::{JudgeArtifact, SandboxHandle};
use super::{ProblemRecord, SynthError};
use crate::model::SubmissionRequest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Correct,
    Incorrect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSolution {
    pub problem_id: String,
    pub solution: String,
    pub label: Label,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemFidelity {
    pub problem_id: String,
    pub accepted_correct: usize,
    pub total_correct: usize,
    pub rejected_incorrect: usize,
    pub total_incorrect: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub problem_set: String,
    /// Absent when there were no correct submissions.
    pub tpr: Option<f64>,
    /// Absent when there were no incorrect submissions.
    pub tnr: Option<f64>,
    pub n_correct: usize,
    pub n_incorrect: usize,
    pub per_problem: Vec<ProblemFidelity>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl FidelityReport {
    pub fn from_counts(problem_set: impl Into<String>, per_problem: Vec<ProblemFidelity>) -> Self {
        let sum = |f: fn(&ProblemFidelity) -> usize| per_problem.iter().map(f).sum::<usize>();
        let n_correct = sum(|p| p.total_correct);
        let n_incorrect = sum(|p| p.total_incorrect);
        Self {
            problem_set: problem_set.into(),
            tpr: ratio(sum(|p| p.accepted_correct), n_correct),
            tnr: ratio(sum(|p| p.rejected_incorrect), n_incorrect),
            n_correct,
            n_incorrect,
            per_problem,
        }
    }

    pub fn render_table(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{:.1}", v * 100.0));
        let mut out = String::new();
        let _ = writeln!(out, "{:<24} {:>10} {:>12}", "problem", "accepted", "rejected");
        for p in &self.per_problem {
            let _ = writeln!(
                out,
                "{:<24} {:>10} {:>12}",
                p.problem_id,
                format!("{}/{}", p.accepted_correct, p.total_correct),
                format!("{}/{}", p.rejected_incorrect, p.total_incorrect)
            );
        }
        let _ = writeln!(
            out,
            "{}: TPR {} ({} correct), TNR {} ({} incorrect)",
            self.problem_set,
            pct(self.tpr),
            self.n_correct,
            pct(self.tnr),
            self.n_incorrect
        );
        out
    }
}

/// Runs every labeled solution with its problem's validated judge.
pub fn measure_fidelity(
    problem_set: &str,
    artifacts: &[JudgeArtifact],
    problems: &[ProblemRecord],
    labeled: &[LabeledSolution],
    sandbox: &dyn SandboxHandle,
) -> Result<FidelityReport, SynthError> {
    let judges: HashMap<&str, &JudgeArtifact> =
        artifacts.iter().filter(|a| a.is_validated()).map(|a| (a.problem_id.as_str(), a)).collect();
    let by_id: HashMap<&str, &ProblemRecord> = problems.iter().map(|p| (p.problem_id.as_str(), p)).collect();
    for l in labeled {
        if !judges.contains_key(l.problem_id.as_str()) || !by_id.contains_key(l.problem_id.as_str()) {
            return Err(SynthError::MissingArtifact(l.problem_id.clone()));
        }
    }

    let mut counts: BTreeMap<&str, ProblemFidelity> = BTreeMap::new();
    for (i, l) in labeled.iter().enumerate() {
        let problem = by_id[l.problem_id.as_str()];
        let mut request = SubmissionRequest::new(
            format!("fidelity-{i}"),
            &l.solution,
            &problem.guest_language,
            problem.tests.clone(),
        );
        request.special_judge = Some(judges[l.problem_id.as_str()].judge.clone());
        let report = sandbox.evaluate(&request).map_err(|e| SynthError::Sandbox(e.to_string()))?;
        if report.has_infrastructure_error() {
            tracing::warn!(problem = %l.problem_id, index = i, "infrastructure error while measuring fidelity");
        }
        let c = counts
            .entry(l.problem_id.as_str())
            .or_insert_with(|| ProblemFidelity { problem_id: l.problem_id.clone(), ..Default::default() });
        match l.label {
            Label::Correct => {
                c.total_correct += 1;
                c.accepted_correct += usize::from(report.accepted);
            }
            Label::Incorrect => {
                c.total_incorrect += 1;
                c.rejected_incorrect += usize::from(!report.accepted);
            }
        }
    }
    Ok(FidelityReport::from_counts(problem_set, counts.into_values().collect()))
}
