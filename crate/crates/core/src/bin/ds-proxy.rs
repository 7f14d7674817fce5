use std::net::SocketAddr;
use std::process::ExitCode;
use std::time::Duration;

use ds_core::proxy::{router, DsProxy, ProxyConfig};
use ds_core::SystemClock;
use tracing_subscriber::EnvFilter;

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let config = match ProxyConfig::from_env() {
        Ok(c) => c,
        Err(e) => {
            tracing::error!("{e}");
            return ExitCode::FAILURE;
        }
    };
    let listen = config.listen;
    let every = Duration::from_secs(config.timeout_secs.max(1));
    let proxy = match DsProxy::new(config, SystemClock::shared()) {
        Ok(p) => p,
        Err(e) => {
            tracing::error!("{e}");
            return ExitCode::FAILURE;
        }
    };
    let _expiry = proxy.spawn_expiry(every);
    let listener = match tokio::net::TcpListener::bind(listen).await {
        Ok(l) => l,
        Err(e) => {
            tracing::error!("binding {listen}: {e}");
            return ExitCode::FAILURE;
        }
    };
    tracing::info!("ds-proxy listening on {listen}");
    let app = router(proxy).into_make_service_with_connect_info::<SocketAddr>();
    if let Err(e) = axum::serve(listener, app).await {
        tracing::error!("{e}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
