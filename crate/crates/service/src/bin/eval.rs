use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use judgebox_core::eval::{
    emit_report, load_dataset, load_generations, run_eval, BenchmarkConfig, Dispatcher, EvalError, LocalDispatcher,
    ReportFormat, RunOptions,
};
use judgebox_service::client::GatewayClient;
use judgebox_service::worker::{SandboxExecutor, WorkerConfig};

/// Scores benchmark generations through the sandbox.
#[derive(Parser)]
#[command(name = "eval", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Executes every generation and reports pass@1.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// JSONL with {problem_id, samples}.
        #[arg(long)]
        generations: PathBuf,
        /// Checkpoint file; finished samples in it are skipped.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Checkpoint file written from scratch.
        #[arg(long, conflicts_with = "resume")]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "table")]
        format: ReportFormat,
        #[arg(long)]
        concurrency: Option<usize>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Gateway base URL; overrides gateway_address from the config.
        #[arg(long, conflicts_with = "local")]
        gateway: Option<String>,
        /// Run in-process even if the config names a gateway.
        #[arg(long)]
        local: bool,
        /// Worker config used for the in-process sandbox.
        #[arg(long)]
        worker_config: Option<PathBuf>,
    },
    /// Checks the config and dataset without executing anything.
    ValidateDataset {
        #[arg(long)]
        config: PathBuf,
    },
}

fn fail(e: &EvalError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::ValidateDataset { config } => {
            let result = BenchmarkConfig::load(&config).and_then(|c| load_dataset(&c).map(|d| (c, d)));
            match result {
                Ok((c, d)) => {
                    for w in &d.warnings {
                        eprintln!("warning: {w}");
                    }
                    let tests: usize = d.entries.iter().map(|e| e.tests.len()).sum();
                    println!("{}: {} problems, {} tests", c.name, d.entries.len(), tests);
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Run { config, generations, resume, checkpoint, format, concurrency, output, gateway, local, worker_config } => {
            let config = match BenchmarkConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            let dataset = match load_dataset(&config) {
                Ok(d) => d,
                Err(e) => return fail(&e),
            };
            for w in &dataset.warnings {
                eprintln!("warning: {w}");
            }
            let generations = match load_generations(&generations) {
                Ok(g) => g,
                Err(e) => return fail(&e),
            };
            let options = RunOptions { checkpoint: resume.clone().or(checkpoint), resume: resume.is_some(), concurrency };

            let gateway = if local { None } else { gateway.or_else(|| config.gateway_address.clone()) };
            let result = match gateway {
                Some(url) => {
                    let client = GatewayClient::new(url);
                    run_eval(&config, &dataset.entries, &generations, &client as &dyn Dispatcher, &options)
                }
                None => {
                    let executor = match WorkerConfig::load(worker_config.as_deref())
                        .map_err(|e| e.to_string())
                        .and_then(|w| SandboxExecutor::new(&w))
                    {
                        Ok(x) => x,
                        Err(m) => return fail(&EvalError::Config(m)),
                    };
                    let sandbox = executor.sandbox();
                    run_eval(&config, &dataset.entries, &generations, &LocalDispatcher(&sandbox), &options)
                }
            };
            let result = match result {
                Ok(r) => r,
                Err(e) => return fail(&e),
            };
            let bytes = emit_report(&result, format);
            let written = match output {
                Some(path) => std::fs::write(&path, &bytes).map_err(|source| EvalError::Io { path, source }),
                None => std::io::Write::write_all(&mut std::io::stdout(), &bytes)
                    .map_err(|source| EvalError::Io { path: "<stdout>".into(), source }),
            };
            match written {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(&e),
            }
        }
    }
}
