use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::task::JoinHandle;

use super::{DataflowError, MappingSpec};
use crate::broker::{BrokerClient, ContextApi, Upserted};
use crate::clock::SharedClock;
use crate::model::Representation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SourceSpec {
    pub url: String,
    pub period_seconds: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub headers: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SinkSpec {
    pub broker_url: String,
    #[serde(default = "key_values")]
    pub representation: Representation,
}

fn key_values() -> Representation {
    Representation::KeyValues
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub source: SourceSpec,
    pub transform: MappingSpec,
    pub sink: SinkSpec,
}

impl PipelineSpec {
    pub fn check(&self) -> Result<(), DataflowError> {
        if !(self.source.period_seconds > 0.0 && self.source.period_seconds.is_finite()) {
            return Err(DataflowError::InvalidSpec("periodSeconds must be positive".into()));
        }
        if self.sink.representation != Representation::KeyValues {
            return Err(DataflowError::InvalidSpec("the sink writes keyValues documents only".into()));
        }
        self.transform.check()
    }

    pub fn period(&self) -> Duration {
        Duration::from_secs_f64(self.source.period_seconds)
    }

    /// Runnable pipeline over HTTP source and broker.
    pub fn build(&self, clock: SharedClock) -> Result<Pipeline, DataflowError> {
        self.check()?;
        Ok(Pipeline::new(
            Arc::new(HttpSource::new(&self.source.url, self.source.headers.clone())),
            self.transform.clone(),
            Arc::new(BrokerClient::new(&self.sink.broker_url)),
            clock,
        ))
    }
}

pub fn load_pipelines(path: impl AsRef<std::path::Path>) -> Result<Vec<PipelineSpec>, DataflowError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| DataflowError::Io(format!("{}: {e}", path.display())))?;
    let specs: Vec<PipelineSpec> =
        serde_json::from_str(&text).map_err(|e| DataflowError::InvalidSpec(e.to_string()))?;
    specs.iter().try_for_each(PipelineSpec::check)?;
    Ok(specs)
}

#[async_trait]
pub trait DocumentSource: Send + Sync {
    async fn fetch(&self) -> Result<Value, String>;
}

pub struct HttpSource {
    url: String,
    headers: BTreeMap<String, String>,
    client: reqwest::Client,
}

impl HttpSource {
    pub fn new(url: &str, headers: BTreeMap<String, String>) -> Self {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(10))
            .build()
            .expect("http client");
        Self {
            url: url.into(),
            headers,
            client,
        }
    }
}

#[async_trait]
impl DocumentSource for HttpSource {
    async fn fetch(&self) -> Result<Value, String> {
        let mut req = self.client.get(&self.url);
        for (k, v) in &self.headers {
            req = req.header(k, v);
        }
        let resp = req.send().await.map_err(|e| e.to_string())?;
        if !resp.status().is_success() {
            return Err(format!("HTTP {}", resp.status()));
        }
        resp.json().await.map_err(|e| e.to_string())
    }
}

/// Poll, transform and upsert, once per period.
pub struct Pipeline {
    source: Arc<dyn DocumentSource>,
    mapping: MappingSpec,
    sink: Arc<dyn ContextApi>,
    clock: SharedClock,
    polls: AtomicU64,
    upserts: AtomicU64,
}

impl Pipeline {
    pub fn new(
        source: Arc<dyn DocumentSource>,
        mapping: MappingSpec,
        sink: Arc<dyn ContextApi>,
        clock: SharedClock,
    ) -> Self {
        Self {
            source,
            mapping,
            sink,
            clock,
            polls: AtomicU64::new(0),
            upserts: AtomicU64::new(0),
        }
    }

    pub fn polls(&self) -> u64 {
        self.polls.load(Ordering::Relaxed)
    }

    pub fn upserts(&self) -> u64 {
        self.upserts.load(Ordering::Relaxed)
    }

    /// One cycle. A failed fetch yields `Ok(None)`.
    pub async fn tick(&self) -> Result<Option<Upserted>, DataflowError> {
        self.polls.fetch_add(1, Ordering::Relaxed);
        let doc = match self.source.fetch().await {
            Ok(doc) => doc,
            Err(e) => {
                tracing::warn!(error = %e, "poll failed");
                return Ok(None);
            }
        };
        let entity = self.mapping.transform(&doc, self.clock.now())?;
        let done = self.sink.upsert(&entity).await?;
        self.upserts.fetch_add(1, Ordering::Relaxed);
        Ok(Some(done))
    }

    /// Ticks every `period`, the first one a full period after the start.
    /// Errors are logged and the loop carries on.
    pub fn spawn(self: Arc<Self>, period: Duration) -> JoinHandle<()> {
        tokio::spawn(async move {
            let mut interval = tokio::time::interval_at(tokio::time::Instant::now() + period, period);
            interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            loop {
                interval.tick().await;
                if let Err(e) = self.tick().await {
                    tracing::warn!(error = %e, "pipeline tick failed");
                }
            }
        })
    }
}
