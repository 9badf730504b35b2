use a2a_hub::bench::{load_cases, BenchOptions, BenchRunner, Channel, EXIT_INFRA};
use a2a_hub::config::{HubConfig, DEFAULT_PORT, ENV_CONFIG, ENV_PORT};
use a2a_hub::launch::{launch, launch_simulator};
use a2a_hub::simnet::{Scenario, Simulator};
use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(name = "a2a-hub", version, about = "A2A orchestration hub")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the hub, optionally with simulated downstream agents.
    Serve {
        #[arg(long, env = ENV_CONFIG, default_value = "config/hub.toml")]
        config: PathBuf,
        /// Start the simulator from this scenario and resolve `sim://` targets against it.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long, env = ENV_PORT, default_value_t = DEFAULT_PORT)]
        port: u16,
        /// Simulator admin port (only with --scenario).
        #[arg(long, default_value_t = 8090)]
        admin_port: u16,
    },
    /// Run only the simulated agents and the admin endpoints.
    Simnet {
        #[arg(long, default_value = "config/scenario.toml")]
        scenario: PathBuf,
        /// Hub config whose corpus and ACL seed the object store.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 8090)]
        admin_port: u16,
    },
    /// Run benchmark cases against a running hub.
    Bench {
        #[arg(long, default_value = "http://127.0.0.1:8080")]
        hub_url: String,
        #[arg(long, default_value = "config/bench-cases.toml")]
        cases: PathBuf,
        /// Overrides the channel set in each case.
        #[arg(long)]
        channel: Option<Channel>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        fail_fast: bool,
        #[arg(long)]
        parallel: bool,
        /// Per-request timeout in seconds.
        #[arg(long, default_value_t = 30)]
        timeout_secs: u64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

fn read_scenario(path: &Path) -> anyhow::Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading scenario {}", path.display()))?;
    Ok(Scenario::from_toml(&text)?)
}

async fn shutdown_signal() {
    let _ = tokio::signal::ctrl_c().await;
}

async fn serve(
    config: &Path,
    scenario: Option<&Path>,
    host: IpAddr,
    port: u16,
    admin_port: u16,
) -> anyhow::Result<()> {
    let loaded = HubConfig::load(config)?;
    let scenario = scenario.map(read_scenario).transpose()?;
    let mut hub = launch(
        loaded,
        scenario,
        SocketAddr::new(host, port),
        SocketAddr::new(host, admin_port),
    )
    .await?;
    println!("hub listening on {}", hub.hub_url());
    if let Some(sim) = &hub.sim {
        println!("simulator admin on {}", sim.admin_url());
        for (id, url) in &sim.agents.urls {
            println!("  agent {id} at {url}");
        }
    }
    tokio::select! {
        _ = hub.wait() => {}
        _ = shutdown_signal() => {}
    }
    Ok(())
}

async fn simnet(scenario: &Path, config: Option<&Path>, admin_port: u16) -> anyhow::Result<()> {
    let mut scenario = read_scenario(scenario)?;
    let documents = match config {
        Some(path) => {
            let loaded = HubConfig::load(path)?;
            let mut acl = loaded.config.acl.clone();
            acl.append(&mut scenario.acl);
            scenario.acl = acl;
            loaded.documents
        }
        None => Vec::new(),
    };
    let sim = Simulator::with_system_clock(scenario, documents)?;
    let rt = launch_simulator(sim, SocketAddr::from(([127, 0, 0, 1], admin_port))).await?;
    println!("simulator admin on {}", rt.admin_url());
    for (id, url) in &rt.agents.urls {
        println!("  agent {id} at {url}");
    }
    tokio::select! {
        _ = rt.wait() => {}
        _ = shutdown_signal() => {}
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
async fn bench(
    hub_url: &str,
    cases: &Path,
    channel: Option<Channel>,
    format: Format,
    fail_fast: bool,
    parallel: bool,
    timeout_secs: u64,
) -> i32 {
    let cases = match load_cases(cases) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INFRA;
        }
    };
    let options = BenchOptions {
        channel,
        fail_fast,
        parallel,
        timeout: Some(Duration::from_secs(timeout_secs)),
    };
    let report = match BenchRunner::new(hub_url, options) {
        Ok(runner) => runner.run(&cases).await,
        Err(e) => Err(e),
    };
    match report {
        Ok(report) => {
            match format {
                Format::Text => print!("{}", report.render_text()),
                Format::Json => println!("{}", report.to_json()),
            }
            report.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INFRA
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    let result = match cli.command {
        Command::Serve {
            config,
            scenario,
            host,
            port,
            admin_port,
        } => serve(&config, scenario.as_deref(), host, port, admin_port).await,
        Command::Simnet {
            scenario,
            config,
            admin_port,
        } => simnet(&scenario, config.as_deref(), admin_port).await,
        Command::Bench {
            hub_url,
            cases,
            channel,
            format,
            fail_fast,
            parallel,
            timeout_secs,
        } => {
            let code = bench(
                &hub_url,
                &cases,
                channel,
                format,
                fail_fast,
                parallel,
                timeout_secs,
            )
            .await;
            return ExitCode::from(code as u8);
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INFRA as u8)
        }
    }
}
