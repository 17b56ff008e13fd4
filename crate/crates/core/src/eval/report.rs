use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::EvalResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Table,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Self::Json),
            "table" => Ok(Self::Table),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown format {other:?}; expected json, table or csv")),
        }
    }
}

pub fn emit_report(result: &EvalResult, format: ReportFormat) -> Vec<u8> {
    let mut rows = result.per_problem.clone();
    rows.sort_by(|a, b| a.problem_id.cmp(&b.problem_id));
    let rate = |p: &super::ProblemScore| if p.n_samples == 0 { 0.0 } else { p.n_passed as f64 / p.n_samples as f64 };
    match format {
        ReportFormat::Json => {
            let mut sorted = result.clone();
            sorted.per_problem = rows;
            let mut out = serde_json::to_vec_pretty(&sorted).expect("result serializes");
            out.push(b'\n');
            out
        }
        ReportFormat::Csv => {
            let mut out = String::from("problem_id,n_samples,n_passed,pass_rate\n");
            for p in &rows {
                let _ = writeln!(out, "{},{},{},{:.4}", csv_field(&p.problem_id), p.n_samples, p.n_passed, rate(p));
            }
            out.into_bytes()
        }
        ReportFormat::Table => {
            let w = rows.iter().map(|p| p.problem_id.len()).max().unwrap_or(0).max("problem".len());
            let mut out = String::new();
            let _ = writeln!(out, "{:<w$}  {:>6}  {:>7}  {:>5}", "problem", "passed", "samples", "rate");
            for p in &rows {
                let _ = writeln!(out, "{:<w$}  {:>6}  {:>7}  {:>5.2}", p.problem_id, p.n_passed, p.n_samples, rate(p));
            }
            let _ = writeln!(out, "{}: pass@1 = {:.2} over {} problems", result.benchmark, result.pass_at_1, rows.len());
            let _ = writeln!(
                out,
                "wall {:.2} s, {:.2} tasks/s",
                result.wall_time_s, result.throughput_tasks_per_s
            );
            out.into_bytes()
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
