use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{plan, verify, BulbStub, ConformanceReport, GroundTruth, ScenarioConfig, SimError, WeatherStub};
use crate::agent::{self, parking, Agent, AgentConfig, HttpCommandSink};
use crate::analytics::{self, Analytics};
use crate::auth::{self, AuthConfig, Identity, Proxy, ProxyConfig};
use crate::broker::{self, Broker, BrokerClient, BrokerConfig, ContextApi, EntityQuery, HttpTransport, RetryPolicy};
use crate::clock::{self, SharedClock};
use crate::dataflow::{self, weather_mapping, HistoryLimits, HistoryStore, HttpSource, Listener, Pipeline};
use crate::service::Server;

/// Device key of the gate sensor in the stack.
pub const GATE: &str = "gate";

/// Entities present before the first measure: the car park and its spots,
/// all free.
pub fn provisioning(total_spots: u32) -> Vec<Value> {
    let mut docs = vec![json!({
        "id": parking::PARKING_ID,
        "type": "OffStreetParking",
        "availableSpotNumber": total_spots,
    })];
    docs.extend((1..=total_spots).map(|n| {
        json!({
            "id": parking::spot_id(n),
            "type": "ParkingSpot",
            "name": n.to_string(),
            "status": "free",
            "refOffStreetParking": parking::PARKING_ID,
        })
    }));
    docs
}

#[derive(Clone)]
pub struct StackOptions {
    pub total_spots: u32,
    pub history_dir: PathBuf,
    pub retry: RetryPolicy,
    pub clock: SharedClock,
    /// Keep the broker's write log.
    pub record_writes: bool,
    /// Start the occupancy worker.
    pub analytics: bool,
    /// Start the weather stub and an unscheduled pipeline polling it.
    pub weather_script: Option<Vec<Value>>,
    /// Start the identity service and put the proxy in front of the broker.
    pub auth: Option<AuthConfig>,
}

impl StackOptions {
    pub fn new(total_spots: u32, history_dir: impl Into<PathBuf>) -> Self {
        Self {
            total_spots,
            history_dir: history_dir.into(),
            retry: RetryPolicy::default(),
            clock: clock::system(),
            record_writes: false,
            analytics: false,
            weather_script: None,
            auth: None,
        }
    }
}

/// Base URLs of the running services.
#[derive(Debug, Clone, Default)]
pub struct StackUrls {
    pub broker: String,
    pub agent: String,
    pub history: String,
    pub bulbs: String,
    pub analytics: Option<String>,
    pub weather: Option<String>,
    pub identity: Option<String>,
    pub proxy: Option<String>,
}

/// Every service of the parking twin on loopback ports. The agent,
/// analytics and pipeline reach the broker over HTTP; the broker is kept
/// in-process so tests can inspect it.
pub struct Stack {
    pub broker: Arc<Broker>,
    pub agent: Arc<Agent>,
    pub listener: Arc<Listener>,
    pub bulbs: Arc<BulbStub>,
    pub analytics: Option<Arc<Analytics>>,
    pub weather: Option<Arc<WeatherStub>>,
    pub pipeline: Option<Arc<Pipeline>>,
    pub identity: Option<Arc<Identity>>,
    pub proxy: Option<Arc<Proxy>>,
    pub urls: StackUrls,
    servers: Vec<Server>,
    http: reqwest::Client,
}

impl Stack {
    pub async fn start(options: StackOptions) -> Result<Self, SimError> {
        let clock = options.clock.clone();
        let config = BrokerConfig {
            retry: options.retry,
            record_writes: options.record_writes,
            ..BrokerConfig::default()
        };
        let broker = Arc::new(Broker::new(config, Arc::new(HttpTransport::default()), clock.clone()));
        let mut servers = Vec::new();
        let mut urls = StackUrls::default();

        let server = Server::local(broker::router(broker.clone())).await?;
        urls.broker = server.url();
        servers.push(server);
        let client: Arc<dyn ContextApi> = Arc::new(BrokerClient::new(&urls.broker));

        let bulbs = BulbStub::new(options.total_spots);
        let server = Server::local(super::bulb_router(bulbs.clone())).await?;
        urls.bulbs = server.url();
        servers.push(server);

        // History subscribes before provisioning so replay sees every entity.
        let store = HistoryStore::open_dir(&options.history_dir, HistoryLimits::default(), clock.clone())?;
        let listener = Listener::new(Arc::new(store));
        let server = Server::local(dataflow::router(listener.clone())).await?;
        urls.history = server.url();
        servers.push(server);
        let notify = format!("{}/notify", urls.history);
        Broker::create_subscription(&broker, dataflow::history_subscription(&notify))?;

        for doc in provisioning(options.total_spots) {
            ContextApi::upsert(&*broker, &doc).await?;
        }

        let agent = Arc::new(Agent::new(
            client.clone(),
            Arc::new(HttpCommandSink::default()),
            AgentConfig::default(),
        ));
        agent.register_device(parking::sensor(GATE))?;
        let endpoint = format!("{}/bulbs", urls.bulbs);
        agent.register_all((1..=options.total_spots).map(|n| parking::bulb(n, &endpoint)))?;
        let server = Server::local(agent::router(agent.clone())).await?;
        urls.agent = server.url();
        servers.push(server);
        for sub in agent.actuator_subscriptions(&format!("{}/notify", urls.agent)) {
            Broker::create_subscription(&broker, sub)?;
        }

        let analytics = if options.analytics {
            let a = Arc::new(
                Analytics::from_broker(client.clone(), clock.clone())
                    .await
                    .map_err(|e| SimError::Config(e.to_string()))?,
            );
            let server = Server::local(analytics::router(a.clone())).await?;
            let url = server.url();
            servers.push(server);
            for sub in analytics::subscriptions(&format!("{url}/notify")) {
                Broker::create_subscription(&broker, sub)?;
            }
            urls.analytics = Some(url);
            Some(a)
        } else {
            None
        };

        let (weather, pipeline) = match options.weather_script {
            Some(script) => {
                let stub = WeatherStub::new(script);
                let server = Server::local(super::weather_router(stub.clone())).await?;
                let url = server.url();
                servers.push(server);
                let source = Arc::new(HttpSource::new(&format!("{url}/weather"), BTreeMap::new()));
                let pipeline = Pipeline::new(source, weather_mapping(), client.clone(), clock.clone());
                urls.weather = Some(url);
                (Some(stub), Some(Arc::new(pipeline)))
            }
            None => (None, None),
        };

        let (identity, proxy) = match &options.auth {
            Some(config) => {
                let identity = Identity::new(config, clock.clone())?;
                let server = Server::local(auth::identity_router(identity.clone())).await?;
                let identity_url = server.url();
                servers.push(server);
                let proxy = Proxy::new(
                    ProxyConfig {
                        upstream: urls.broker.clone(),
                        login_url: format!("{identity_url}/oauth/token"),
                        strip_authorization: true,
                    },
                    identity.policy.clone(),
                    identity.clone(),
                );
                let server = Server::local(auth::proxy_router(proxy.clone())).await?;
                urls.proxy = Some(server.url());
                servers.push(server);
                urls.identity = Some(identity_url);
                (Some(identity), Some(proxy))
            }
            None => (None, None),
        };

        Ok(Self {
            broker,
            agent,
            listener,
            bulbs,
            analytics,
            weather,
            pipeline,
            identity,
            proxy,
            urls,
            servers,
            http: reqwest::Client::new(),
        })
    }

    /// Sends one measure from the gate sensor through the agent's HTTP port.
    pub async fn send_measure(&self, payload: &str) -> Result<Vec<Value>, SimError> {
        self.send_from(GATE, payload).await
    }

    /// Sends one measure from any registered device.
    pub async fn send_from(&self, device_key: &str, payload: &str) -> Result<Vec<Value>, SimError> {
        let rejected = |reason: String| SimError::Rejected {
            payload: payload.to_string(),
            reason,
        };
        let resp = self
            .http
            .post(format!("{}/iot/d", self.urls.agent))
            .query(&[("k", device_key)])
            .body(payload.to_string())
            .send()
            .await
            .map_err(|e| rejected(e.to_string()))?;
        let status = resp.status();
        let body: Value = resp.json().await.map_err(|e| rejected(e.to_string()))?;
        if !status.is_success() {
            return Err(rejected(format!("HTTP {status}: {body}")));
        }
        Ok(body.as_array().cloned().unwrap_or_default())
    }

    /// Replays the planned events in order, then waits for delivery to settle.
    pub async fn run(&self, truth: &GroundTruth) -> Result<(), SimError> {
        for payload in truth.trace() {
            self.send_measure(&payload).await?;
        }
        self.settle().await;
        Ok(())
    }

    /// Returns once no notification is pending or in flight.
    pub async fn settle(&self) {
        self.broker.quiesce(Duration::from_millis(5)).await;
    }

    pub async fn verify(&self, truth: &GroundTruth) -> Result<ConformanceReport, SimError> {
        let docs = ContextApi::list_entities(&*self.broker, &EntityQuery::default()).await?;
        let replay = self.listener.store().replay(None)?;
        Ok(verify(truth, &docs, &self.bulbs.state(), &replay))
    }

    pub async fn shutdown(self) {
        for s in self.servers.into_iter().rev() {
            s.shutdown().await;
        }
    }
}

/// A finished run: the inputs, the planned truth and the check result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimReport {
    pub config: ScenarioConfig,
    pub truth: GroundTruth,
    pub report: ConformanceReport,
}

impl SimReport {
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), SimError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| SimError::Io(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| SimError::Io(e.to_string()))
    }

    /// Re-plans from the stored config and reports every way the stored
    /// run disagrees with it.
    pub fn recheck(&self) -> Result<Vec<String>, SimError> {
        let mut problems = Vec::new();
        if plan(&self.config)? != self.truth {
            problems.push("stored ground truth does not follow from the stored config".to_string());
        }
        if !self.truth.is_partition(self.config.total_spots) {
            problems.push("spot sets are not a partition of the lot".to_string());
        }
        for a in self.report.assertions.iter().filter(|a| !a.passed) {
            problems.push(format!("{} failed in the recorded run", a.name));
        }
        Ok(problems)
    }
}

/// Plans, runs and verifies one scenario on a fresh stack.
pub async fn run_scenario(config: &ScenarioConfig, history_dir: impl Into<PathBuf>) -> Result<SimReport, SimError> {
    let truth = plan(config)?;
    let mut options = StackOptions::new(config.total_spots, history_dir);
    if !config.weather_script.is_empty() {
        options.weather_script = Some(config.weather_script.clone());
    }
    let stack = Stack::start(options).await?;
    stack.run(&truth).await?;
    if let Some(p) = &stack.pipeline {
        p.tick().await?;
        stack.settle().await;
    }
    let report = stack.verify(&truth).await?;
    stack.shutdown().await;
    Ok(SimReport {
        config: config.clone(),
        truth,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{EventKind, REPLAY};

    fn small(seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            total_spots: 60,
            seed,
            duration_ticks: 40,
            ..ScenarioConfig::default()
        }
    }

    #[tokio::test]
    async fn small_run_conforms() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_scenario(&small(3), dir.path()).await.unwrap();
        assert!(report.report.passed(), "{}", report.report);
        assert!(report.recheck().unwrap().is_empty());
    }

    #[tokio::test]
    async fn lost_history_notification_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let mut options = StackOptions::new(60, dir.path());
        options.retry = RetryPolicy {
            retries: 0,
            backoff_base: Duration::from_millis(1),
        };
        let stack = Stack::start(options).await.unwrap();
        let mut truth = plan(&small(5)).unwrap();
        stack.run(&truth).await.unwrap();
        assert!(stack.verify(&truth).await.unwrap().passed());

        stack.listener.fail_next(1);
        let spot = *truth.free_spots.iter().next().unwrap();
        let event = crate::sim::SimEvent {
            tick: 999,
            kind: EventKind::Arrival,
            spot,
            plate: "999999".into(),
            vehicle_type: "car".into(),
        };
        stack.send_measure(&event.payload()).await.unwrap();
        stack.settle().await;
        truth.free_spots.remove(&spot);
        truth.occupied_spots.insert(spot, event.plate.clone());
        truth.event_log.push(event);

        let report = stack.verify(&truth).await.unwrap();
        let d = report.get(REPLAY).unwrap();
        assert!(!d.passed, "{report}");
        assert!(report.assertions.iter().filter(|a| a.name != REPLAY).all(|a| a.passed), "{report}");
        stack.shutdown().await;
    }

    #[test]
    fn provisioning_shape() {
        let docs = provisioning(3);
        assert_eq!(docs.len(), 4);
        assert_eq!(docs[0]["availableSpotNumber"], 3);
        assert_eq!(docs[2], json!({"id": "spot:2", "type": "ParkingSpot", "name": "2", "status": "free", "refOffStreetParking": "parking:1"}));
    }
}
