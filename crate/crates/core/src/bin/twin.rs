use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use twinmesh::agent::{self, load_registry, Agent, AgentConfig, HttpCommandSink};
use twinmesh::analytics::{self, occupancy_series, train, Analytics};
use twinmesh::auth::{self, AuthConfig, Identity, Policy, Proxy, ProxyConfig, RemoteIntrospector};
use twinmesh::broker::{self, Broker, BrokerClient, BrokerConfig, ContextApi};
use twinmesh::clock;
use twinmesh::dataflow::{self, load_pipelines, HistoryLimits, HistoryStore, Listener};
use twinmesh::service::Server;
use twinmesh::sim::{run_scenario, ScenarioConfig, SimReport};

#[derive(Parser)]
#[command(name = "twin", version, about = "Run one service of the parking twin")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Context broker.
    Broker {
        #[arg(long, default_value = "127.0.0.1:1026")]
        listen: SocketAddr,
    },
    /// Ultralight IoT agent.
    Agent {
        #[arg(long, default_value = "127.0.0.1:7896")]
        listen: SocketAddr,
        #[arg(long)]
        broker: String,
        /// JSON array of device registrations.
        #[arg(long)]
        registry: PathBuf,
    },
    /// Polling pipelines plus the history listener.
    Dataflow {
        #[arg(long, default_value = "127.0.0.1:8666")]
        listen: SocketAddr,
        #[arg(long)]
        broker: String,
        /// JSON array of pipeline specs.
        #[arg(long)]
        pipelines: Option<PathBuf>,
        #[arg(long)]
        history: PathBuf,
    },
    /// Occupancy aggregates and the hourly forecast.
    Analytics {
        #[arg(long, default_value = "127.0.0.1:8070")]
        listen: SocketAddr,
        #[arg(long)]
        broker: String,
        /// Train the forecast from this history directory.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Token endpoint and user management.
    Identity {
        #[arg(long, default_value = "127.0.0.1:3005")]
        listen: SocketAddr,
        #[arg(long)]
        config: PathBuf,
    },
    /// Policy enforcement in front of the broker.
    Proxy {
        #[arg(long, default_value = "127.0.0.1:1027")]
        listen: SocketAddr,
        #[arg(long)]
        upstream: String,
        #[arg(long)]
        identity: String,
        #[arg(long)]
        config: PathBuf,
    },
    /// Parking scenario runs.
    #[command(subcommand)]
    ParkingSim(SimCommand),
}

#[derive(Subcommand)]
enum SimCommand {
    /// Plan, run on a fresh in-process stack, verify and save the report.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        history: PathBuf,
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
    },
    /// Check a saved report against its own config.
    Verify {
        #[arg(long)]
        report: PathBuf,
    },
}

type BoxError = Box<dyn std::error::Error + Send + Sync>;

async fn serve(router: axum::Router, listen: SocketAddr) -> Result<(), BoxError> {
    let server = Server::bind(router, listen).await?;
    tracing::info!(url = %server.url(), "listening");
    server.run_until_ctrl_c().await;
    Ok(())
}

async fn run(cli: Cli) -> Result<bool, BoxError> {
    match cli.command {
        Command::Broker { listen } => {
            let broker = Arc::new(Broker::with_http(BrokerConfig::default()));
            serve(broker::router(broker), listen).await?;
        }
        Command::Agent { listen, broker, registry } => {
            let api: Arc<dyn ContextApi> = Arc::new(BrokerClient::new(&broker));
            let agent = Arc::new(Agent::new(api.clone(), Arc::new(HttpCommandSink::default()), AgentConfig::default()));
            agent.register_all(load_registry(&registry)?)?;
            let server = Server::bind(agent::router(agent.clone()), listen).await?;
            for sub in agent.actuator_subscriptions(&format!("{}/notify", server.url())) {
                api.create_subscription(&sub).await?;
            }
            tracing::info!(url = %server.url(), devices = agent.devices().len(), "listening");
            server.run_until_ctrl_c().await;
        }
        Command::Dataflow {
            listen,
            broker,
            pipelines,
            history,
        } => {
            let store = HistoryStore::open_dir(&history, HistoryLimits::default(), clock::system())?;
            let server = Server::bind(dataflow::router(Listener::new(Arc::new(store))), listen).await?;
            let api = BrokerClient::new(&broker);
            api.create_subscription(&dataflow::history_subscription(&format!("{}/notify", server.url())))
                .await?;
            let specs = match pipelines {
                Some(path) => load_pipelines(path)?,
                None => Vec::new(),
            };
            for spec in &specs {
                let pipeline = Arc::new(spec.build(clock::system())?);
                pipeline.spawn(spec.period());
            }
            tracing::info!(url = %server.url(), pipelines = specs.len(), "listening");
            server.run_until_ctrl_c().await;
        }
        Command::Analytics { listen, broker, history } => {
            let api: Arc<dyn ContextApi> = Arc::new(BrokerClient::new(&broker));
            let a = Arc::new(Analytics::from_broker(api.clone(), clock::system()).await?);
            if let Some(dir) = history {
                let store = HistoryStore::open_dir(&dir, HistoryLimits::default(), clock::system())?;
                let initial = analytics::Occupancy::all_free(a.occupancy().total());
                a.set_model(train(&occupancy_series(&initial, &store.records())));
            }
            let server = Server::bind(analytics::router(a.clone()), listen).await?;
            for sub in analytics::subscriptions(&format!("{}/notify", server.url())) {
                api.create_subscription(&sub).await?;
            }
            a.refresh().await?;
            tracing::info!(url = %server.url(), "listening");
            server.run_until_ctrl_c().await;
        }
        Command::Identity { listen, config } => {
            let identity = Identity::new(&AuthConfig::load(config)?, clock::system())?;
            serve(auth::identity_router(identity), listen).await?;
        }
        Command::Proxy {
            listen,
            upstream,
            identity,
            config,
        } => {
            let config = AuthConfig::load(config)?;
            let proxy = Proxy::new(
                ProxyConfig {
                    upstream,
                    login_url: format!("{}/oauth/token", identity.trim_end_matches('/')),
                    strip_authorization: true,
                },
                Policy::compile(&config.policy)?,
                Arc::new(RemoteIntrospector::new(&identity)),
            );
            serve(auth::proxy_router(proxy), listen).await?;
        }
        Command::ParkingSim(SimCommand::Run {
            config,
            seed,
            history,
            out,
        }) => {
            let mut scenario = match config {
                Some(path) => ScenarioConfig::load(path)?,
                None => ScenarioConfig::default(),
            };
            if let Some(seed) = seed {
                scenario.seed = seed;
            }
            let report = run_scenario(&scenario, history).await?;
            print!("{}", report.report);
            report.save(&out)?;
            println!("report written to {}", out.display());
            return Ok(report.report.passed());
        }
        Command::ParkingSim(SimCommand::Verify { report }) => {
            let report = SimReport::load(report)?;
            let problems = report.recheck()?;
            let events: BTreeMap<_, usize> = report.truth.event_log.iter().fold(BTreeMap::new(), |mut m, e| {
                *m.entry(format!("{:?}", e.kind)).or_default() += 1;
                m
            });
            println!("seed {} events {:?}", report.config.seed, events);
            for p in &problems {
                println!("FAIL {p}");
            }
            if problems.is_empty() {
                println!("PASS report is consistent");
            }
            return Ok(problems.is_empty());
        }
    }
    Ok(true)
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    match run(Cli::parse()).await {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            tracing::error!(error = %e, "twin failed");
            ExitCode::from(2)
        }
    }
}
