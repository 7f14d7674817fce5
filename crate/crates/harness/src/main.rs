use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ds_harness::run::RunConfig;

#[derive(Parser)]
#[command(name = "ds-harness", version, about = "Drive the edge stack with a synthetic workload")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a workload and write report files.
    Run {
        #[arg(long, default_value_t = 20)]
        sites: usize,
        /// Clients per site.
        #[arg(long, default_value_t = 5)]
        clients: usize,
        #[arg(long, default_value_t = 3)]
        threshold: usize,
        #[arg(long, default_value_t = 0.4)]
        discard: f64,
        /// Page lifetime in seconds.
        #[arg(long, default_value_t = 7200)]
        ttl: u64,
        /// Share of clients posting random pixels.
        #[arg(long, default_value_t = 0.0)]
        adversary_rate: f64,
        /// Share of clients on cellular.
        #[arg(long, default_value_t = 0.0)]
        cellular_rate: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Visit rounds, each one page lifetime apart.
        #[arg(long, default_value_t = 2)]
        phases: usize,
        #[arg(long, default_value = "harness-out")]
        out: PathBuf,
    },
}

fn rate(name: &str, v: f64) -> Result<f64, String> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("--{name} must be within [0, 1], got {v}"))
    }
}

fn main() -> ExitCode {
    let Command::Run {
        sites,
        clients,
        threshold,
        discard,
        ttl,
        adversary_rate,
        cellular_rate,
        seed,
        phases,
        out,
    } = Cli::parse().command;
    let checked = (|| -> Result<RunConfig, String> {
        if threshold < 2 {
            return Err("--threshold must be at least 2".into());
        }
        if clients == 0 || ttl == 0 {
            return Err("--clients and --ttl must be positive".into());
        }
        Ok(RunConfig {
            sites,
            clients_per_site: clients,
            threshold,
            discard_threshold: rate("discard", discard)?,
            ttl_seconds: ttl,
            adversary_rate: rate("adversary-rate", adversary_rate)?,
            cellular_rate: rate("cellular-rate", cellular_rate)?,
            seed,
            phases,
            ..RunConfig::default()
        })
    })();
    let cfg = match checked {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
    let output = match rt.block_on(ds_harness::run(&cfg)) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = ds_harness::emit_all(&output.report, &out) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    print!("{}", ds_harness::report::render_text(&output.report));
    println!("reports written to {}", out.display());
    if output.report.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
