use std::process::ExitCode;
use std::time::Duration;

use ds_core::server::{router, DsServer, ServerConfig};
use ds_core::SystemClock;
use tracing_subscriber::EnvFilter;

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let config = match ServerConfig::from_env() {
        Ok(c) => c,
        Err(e) => {
            tracing::error!("{e}");
            return ExitCode::FAILURE;
        }
    };
    let listen = config.listen;
    let sweep = config.sweep_interval_secs;
    let server = match DsServer::start(config, SystemClock::shared()) {
        Ok(s) => s,
        Err(e) => {
            tracing::error!("opening store: {e}");
            return ExitCode::FAILURE;
        }
    };
    if sweep > 0 {
        let s = server.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(Duration::from_secs(sweep));
            loop {
                tick.tick().await;
                s.sweep();
            }
        });
    }
    let listener = match tokio::net::TcpListener::bind(listen).await {
        Ok(l) => l,
        Err(e) => {
            tracing::error!("binding {listen}: {e}");
            return ExitCode::FAILURE;
        }
    };
    tracing::info!("ds-server listening on {listen}");
    if let Err(e) = axum::serve(listener, router(server)).await {
        tracing::error!("{e}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
