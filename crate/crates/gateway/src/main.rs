use std::process::ExitCode;

use clap::Parser;
use domus_core::service::Service;
use domus_gateway::{serve, Args, StartupError};
use tracing_subscriber::EnvFilter;

async fn run(args: Args) -> Result<(), Box<dyn std::error::Error>> {
    let config = args.service_config()?;
    let service = Service::open(config).map_err(StartupError::from)?;
    let listener = args.bind().await?;
    tracing::info!(addr = %listener.local_addr()?, state_dir = %args.state_dir.display(), "listening");
    serve(listener, service, async {
        let _ = tokio::signal::ctrl_c().await;
        tracing::info!("shutting down");
    })
    .await?;
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    let args = Args::parse();
    let filter = EnvFilter::try_new(&args.log_level).unwrap_or_else(|_| EnvFilter::new("info"));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
    match run(args).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("domus: {e}");
            ExitCode::from(2)
        }
    }
}
