use std::num::NonZeroU32;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use judgebox_core::synth::{
    load_problems, measure_fidelity, ArtifactStore, LabeledSolution, LlmProvider, RateLimited, SynthConfig,
    SynthOutcome, Synthesizer,
};
use judgebox_service::llm::{HttpProvider, LlmConfig};
use judgebox_service::worker::{SandboxExecutor, WorkerConfig};
use serde::Deserialize;

/// Builds and vets special judges with a language model.
#[derive(Parser)]
#[command(name = "judge-synth", version)]
struct Cli {
    /// Worker config used for the in-process sandbox.
    #[arg(long, global = true)]
    worker_config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classifies each problem and writes validated judges to the store.
    Synthesize {
        /// TOML with [llm] and [synth] tables.
        #[arg(long)]
        config: Option<PathBuf>,
        /// JSONL of problem records.
        #[arg(long)]
        problems: PathBuf,
        /// Artifact store directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        max_attempts: Option<usize>,
    },
    /// Scores stored judges against labeled solutions (TPR/TNR).
    Fidelity {
        #[arg(long)]
        problems: PathBuf,
        #[arg(long)]
        artifacts: PathBuf,
        /// JSONL of {problem_id, solution, label}.
        #[arg(long)]
        labeled: PathBuf,
        #[arg(long, default_value = "default")]
        problem_set: String,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct SynthFile {
    llm: LlmConfig,
    synth: SynthConfig,
}

fn load_labeled(path: &Path) -> anyhow::Result<Vec<LabeledSolution>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let worker = WorkerConfig::load(cli.worker_config.as_deref())?;
    let executor = SandboxExecutor::new(&worker).map_err(anyhow::Error::msg)?;
    let sandbox = executor.sandbox();
    match cli.command {
        Command::Synthesize { config, problems, out, max_attempts } => {
            let file: SynthFile = match config {
                Some(p) => toml::from_str(&std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)?,
                None => SynthFile::default(),
            };
            let mut synth_config = file.synth;
            if let Some(n) = max_attempts {
                synth_config.max_attempts = n;
            }
            let http = HttpProvider::new(file.llm.clone())?;
            let llm: Box<dyn LlmProvider> = match file.llm.requests_per_minute.and_then(NonZeroU32::new) {
                Some(rpm) => Box::new(RateLimited::new(http, rpm, rpm)),
                None => Box::new(http),
            };
            let problems = load_problems(&problems)?;
            let store = ArtifactStore::open(out)?;
            let synthesizer = Synthesizer::new(llm.as_ref(), sandbox.as_ref(), synth_config);
            let results = synthesizer.run_many(&problems, &store);
            let mut ok = true;
            for (p, r) in problems.iter().zip(&results) {
                let line = match r {
                    Ok(SynthOutcome::NotNeeded(_)) => "not needed".to_string(),
                    Ok(SynthOutcome::ManualReview(c)) => format!("manual review (confidence {:.2})", c.confidence),
                    Ok(SynthOutcome::Artifact(a)) => format!("{:?} after {} attempts", a.status, a.attempts_used),
                    Err(e) => {
                        ok = false;
                        format!("failed: {e}")
                    }
                };
                println!("{}: {line}", p.problem_id);
            }
            Ok(ok)
        }
        Command::Fidelity { problems, artifacts, labeled, problem_set, json } => {
            let problems = load_problems(&problems)?;
            let artifacts = ArtifactStore::open(artifacts)?.artifacts()?;
            let labeled = load_labeled(&labeled)?;
            let report = measure_fidelity(&problem_set, &artifacts, &problems, &labeled, sandbox.as_ref())?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.render_table());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
