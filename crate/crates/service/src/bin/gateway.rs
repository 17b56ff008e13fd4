use std::io::Write;
use std::path::PathBuf;

use clap::Parser;
use judgebox_service::gateway::{self, Gateway, GatewayConfig, SeedNode};

/// Load-balancing gateway in front of judgebox workers.
#[derive(Parser)]
#[command(name = "judgebox-gateway", version)]
struct Args {
    /// TOML config file; JUDGEBOX_GATEWAY_* variables override it.
    #[arg(long, env = "JUDGEBOX_GATEWAY_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long)]
    listen: Option<String>,
    /// Worker base URL to enroll at startup; repeatable.
    #[arg(long = "node")]
    nodes: Vec<String>,
    /// Directory with the dashboard build, served under /ui.
    #[arg(long)]
    ui_dir: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let args = Args::parse();
    let mut config = GatewayConfig::load(args.config.as_deref())?;
    if let Some(l) = args.listen {
        config.listen_address = l;
    }
    config.nodes.extend(args.nodes.into_iter().map(|address| SeedNode { address, node_id: None }));
    if args.ui_dir.is_some() {
        config.ui_dir = args.ui_dir;
    }
    let addr = config.listen_address.clone();
    let gw = Gateway::new(config);
    let (local, server) = gateway::bind(gw, &addr).await?;
    println!("listening on {local}");
    std::io::stdout().flush()?;
    tokio::select! {
        r = server => r?,
        _ = tokio::signal::ctrl_c() => tracing::info!("interrupted"),
    }
    Ok(())
}
