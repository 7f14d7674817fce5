//! End-to-end driver for the edge stack: a synthetic origin, a simulated
//! client fleet, and metrics over what they did.

pub mod client;
pub mod metrics;
pub mod origin;
pub mod render;
pub mod report;
pub mod run;
pub mod testbed;
pub mod workload;

pub use client::{simulate_clients, ClientProfile, Connection, Event, EventLog};
pub use metrics::{compute_metrics, RunReport};
pub use origin::run_origin;
pub use report::{emit_all, emit_report, ReportFormat};
pub use run::{run, RunConfig};
pub use testbed::{Testbed, TestbedConfig};
pub use workload::{generate_workload, SyntheticPageSpec};
