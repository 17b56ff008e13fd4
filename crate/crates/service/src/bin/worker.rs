use std::io::Write;
use std::path::PathBuf;

use clap::Parser;
use judgebox_service::worker::{self, Worker, WorkerConfig};
use tokio::signal::unix::{signal, SignalKind};

/// Sandbox worker node: accepts submissions over HTTP and runs them locally.
#[derive(Parser)]
#[command(name = "judgebox-worker", version)]
struct Args {
    /// TOML config file; JUDGEBOX_WORKER_* variables override it.
    #[arg(long, env = "JUDGEBOX_WORKER_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides listen_address (use port 0 for an ephemeral port).
    #[arg(long)]
    listen: Option<String>,
    /// Serve a fixed-delay stub instead of the sandbox (load testing).
    #[arg(long)]
    synthetic_delay_ms: Option<u64>,
    /// Overrides max_concurrent_requests.
    #[arg(long)]
    max_concurrent: Option<usize>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let args = Args::parse();
    let mut config = WorkerConfig::load(args.config.as_deref())?;
    if let Some(l) = args.listen {
        config.listen_address = l;
    }
    if let Some(ms) = args.synthetic_delay_ms {
        config.synthetic_delay_ms = Some(ms);
    }
    if let Some(n) = args.max_concurrent {
        config.max_concurrent_requests = n;
    }
    let addr = config.listen_address.clone();
    let w = Worker::new(config, args.config).map_err(anyhow::Error::msg)?;
    let (local, server) = worker::bind(w.clone(), &addr).await?;
    println!("listening on {local}");
    std::io::stdout().flush()?;
    tracing::info!(%local, "worker up");

    let mut term = signal(SignalKind::terminate())?;
    let signals = w.clone();
    tokio::spawn(async move {
        tokio::select! {
            _ = term.recv() => {}
            _ = tokio::signal::ctrl_c() => {}
        }
        tracing::info!("signal received, draining");
        signals.drain();
    });
    server.await?;
    tracing::info!("worker stopped");
    Ok(())
}
