//! One complete harness run.

use serde::{Deserialize, Serialize};

use ds_core::proxy::DEFAULT_HOOK;
use ds_core::Clock;

use crate::client::{assign_clients, simulate_clients, ClientMix, ClientProfile, EventLog, SimulationPlan};
use crate::metrics::{compute_metrics, MetricsInput, RunReport};
use crate::testbed::{Testbed, TestbedConfig};
use crate::workload::{generate_workload, SyntheticPageSpec, WorkloadOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub sites: usize,
    pub clients_per_site: usize,
    pub threshold: usize,
    pub discard_threshold: f64,
    pub ttl_seconds: u64,
    pub adversary_rate: f64,
    pub cellular_rate: f64,
    pub seed: u64,
    pub phases: usize,
    pub workers: usize,
    pub workload: WorkloadOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            sites: 20,
            clients_per_site: 5,
            threshold: 3,
            discard_threshold: 0.4,
            ttl_seconds: 7200,
            adversary_rate: 0.0,
            cellular_rate: 0.0,
            seed: 1,
            phases: 2,
            workers: 4,
            workload: WorkloadOptions::default(),
        }
    }
}

pub struct RunOutput {
    pub report: RunReport,
    pub log: EventLog,
    pub specs: Vec<SyntheticPageSpec>,
    pub clients: Vec<ClientProfile>,
}

pub async fn run(cfg: &RunConfig) -> anyhow::Result<RunOutput> {
    let specs = generate_workload(cfg.sites, cfg.seed, &cfg.workload);
    let clients = assign_clients(
        cfg.sites,
        &ClientMix {
            clients_per_site: cfg.clients_per_site,
            adversary_rate: cfg.adversary_rate,
            cellular_rate: cfg.cellular_rate,
            seed: cfg.seed,
        },
    );
    run_with(cfg, specs, clients).await
}

pub async fn run_with(cfg: &RunConfig, specs: Vec<SyntheticPageSpec>, clients: Vec<ClientProfile>) -> anyhow::Result<RunOutput> {
    let bed = Testbed::start(
        &specs,
        &TestbedConfig {
            threshold: cfg.threshold,
            ttl_seconds: cfg.ttl_seconds,
            discard_threshold: cfg.discard_threshold,
            workers: cfg.workers,
            ..TestbedConfig::default()
        },
    )
    .await?;
    let plan = SimulationPlan {
        phases: cfg.phases,
        // each phase starts just after the previous phase's pages expire
        phase_gap_secs: cfg.ttl_seconds + 1,
        max_concurrent_sites: 32,
    };
    let log = simulate_clients(&bed, &specs, &clients, &plan).await;
    let hits = bed.origin.state.hits();
    let hook_script_bytes = match &bed.proxy.config().hook_path {
        Some(p) => std::fs::metadata(p)?.len() as usize,
        None => DEFAULT_HOOK.len(),
    };
    let report = compute_metrics(&MetricsInput {
        log: &log,
        harvester: bed.server.harvester(),
        specs: &specs,
        clients: &clients,
        origin_hits: &hits,
        proxy_counters: bed.proxy.counters(),
        threshold: cfg.threshold,
        hook_script_bytes,
        hook_block_bytes: bed.proxy.hook().len(),
        token_name: &bed.proxy.config().token_name,
        now: bed.clock.now(),
    });
    Ok(RunOutput {
        report,
        log,
        specs,
        clients,
    })
}
