//! Origin, snapshot service and proxy wired together on loopback.

use std::net::SocketAddr;
use std::sync::Arc;

use anyhow::Context;
use ds_core::harvester::HarvestConfig;
use ds_core::proxy::{self, DsProxy, ProxyConfig};
use ds_core::server::{self, DsServer, ServerConfig};
use ds_core::{ManualClock, Timestamp};
use tokio::task::JoinHandle;

use crate::origin::{run_origin, Origin};
use crate::workload::SyntheticPageSpec;

#[derive(Clone, Debug)]
pub struct TestbedConfig {
    pub threshold: usize,
    pub ttl_seconds: u64,
    pub discard_threshold: f64,
    pub workers: usize,
    pub start: Timestamp,
    pub state_timeout_secs: u64,
}

impl Default for TestbedConfig {
    fn default() -> Self {
        TestbedConfig {
            threshold: 3,
            ttl_seconds: 7200,
            discard_threshold: 0.4,
            workers: 4,
            start: Timestamp::from_millis(1_700_000_000_000),
            state_timeout_secs: 30,
        }
    }
}

pub struct Testbed {
    pub clock: ManualClock,
    pub origin: Origin,
    pub server: Arc<DsServer>,
    pub server_addr: SocketAddr,
    pub proxy: Arc<DsProxy>,
    pub proxy_addr: SocketAddr,
    tasks: Vec<JoinHandle<()>>,
}

impl Drop for Testbed {
    fn drop(&mut self) {
        for t in &self.tasks {
            t.abort();
        }
    }
}

async fn bind() -> anyhow::Result<(tokio::net::TcpListener, SocketAddr)> {
    let l = tokio::net::TcpListener::bind("127.0.0.1:0").await.context("binding loopback")?;
    let a = l.local_addr()?;
    Ok((l, a))
}

impl Testbed {
    pub async fn start(specs: &[SyntheticPageSpec], cfg: &TestbedConfig) -> anyhow::Result<Self> {
        let clock = ManualClock::new(cfg.start);
        let origin = run_origin(specs, clock.shared(), "127.0.0.1:0".parse()?).await?;

        let server_cfg = ServerConfig {
            workers: cfg.workers,
            sweep_interval_secs: 0,
            harvest: HarvestConfig {
                threshold: cfg.threshold,
                ttl_seconds: cfg.ttl_seconds,
                discard_threshold: cfg.discard_threshold,
                ..HarvestConfig::default()
            },
            ..ServerConfig::default()
        };
        let server = DsServer::start(server_cfg, clock.shared()).context("starting snapshot service")?;
        let (sl, server_addr) = bind().await?;
        let app = server::router(server.clone());
        let mut tasks = vec![tokio::spawn(async move {
            let _ = axum::serve(sl, app).await;
        })];

        let proxy_cfg = ProxyConfig {
            ds_server: format!("http://{server_addr}"),
            origin_override: Some(origin.addr),
            timeout_secs: cfg.state_timeout_secs,
            ..ProxyConfig::default()
        };
        let proxy = DsProxy::new(proxy_cfg, clock.shared()).context("starting proxy")?;
        let (pl, proxy_addr) = bind().await?;
        let app = proxy::router(proxy.clone()).into_make_service_with_connect_info::<SocketAddr>();
        tasks.push(tokio::spawn(async move {
            let _ = axum::serve(pl, app).await;
        }));

        Ok(Testbed {
            clock,
            origin,
            server,
            server_addr,
            proxy,
            proxy_addr,
            tasks,
        })
    }

    pub fn server_url(&self) -> String {
        format!("http://{}", self.server_addr)
    }
}
