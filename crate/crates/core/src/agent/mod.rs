//! IoT agent: translates Ultralight measures into context writes and
//! context changes into Ultralight commands.

mod http;
pub mod parking;
mod registry;
mod ultralight;

pub use http::router;
pub use registry::{
    load_registry, render_template, render_value, save_registry, Adjust, DeviceRegistration,
    EntityTemplate, ExpansionAction, ExpansionRule, IdSequence, TemplateCtx,
};
pub use ultralight::{parse_command, parse_measure, render_command, render_measure, UlCommand, UlMeasure};

use std::collections::{BTreeMap, HashMap};
use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use parking_lot::{Mutex, RwLock};
use rand::Rng;
use serde::Serialize;
use serde_json::{Map, Number, Value};
use thiserror::Error;

use crate::broker::{BrokerError, ContextApi, Notification, Subscription, EntitySelector};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("unknown device `{0}`")]
    UnknownDevice(String),
    #[error("device `{0}` is already registered")]
    DuplicateDevice(String),
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
    #[error("malformed command: {0}")]
    MalformedCommand(String),
    #[error("invalid registration: {0}")]
    InvalidRegistration(String),
    #[error("template {0}")]
    Template(String),
    #[error("`{entity}` still contended after {attempts} attempts")]
    Contention { entity: String, attempts: u32 },
    #[error("attribute `{attr}` of `{entity}` is not a number")]
    NotNumeric { entity: String, attr: String },
    #[error(transparent)]
    Broker(#[from] BrokerError),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone)]
pub struct AgentConfig {
    /// Attempts for a compare-and-set adjust before giving up.
    pub cas_attempts: u32,
    /// Upper bound of the first jittered backoff; doubles per attempt.
    pub cas_backoff: Duration,
    /// Attempts for a write that fails with the broker unreachable.
    pub unavailable_attempts: u32,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            cas_attempts: 32,
            cas_backoff: Duration::from_millis(2),
            unavailable_attempts: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum WriteKind {
    Upsert,
    Update,
    Adjust,
}

/// One broker write made on behalf of a measure.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AgentWrite {
    pub kind: WriteKind,
    pub entity_id: String,
    pub version: u64,
    pub attempts: u32,
}

/// Outcome of forwarding one notification to actuators.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CommandReport {
    pub sent: Vec<String>,
    pub failed: Vec<String>,
    /// Entities in the notification with no actuator registered.
    pub unknown: Vec<String>,
}

/// Southbound delivery of commands.
#[async_trait]
pub trait CommandSink: Send + Sync {
    async fn send(&self, endpoint: &str, wire: &str) -> Result<(), String>;
}

/// POSTs each command as a `text/plain` body.
#[derive(Debug, Clone)]
pub struct HttpCommandSink {
    client: reqwest::Client,
}

impl Default for HttpCommandSink {
    fn default() -> Self {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(5))
            .build()
            .expect("http client");
        Self { client }
    }
}

#[async_trait]
impl CommandSink for HttpCommandSink {
    async fn send(&self, endpoint: &str, wire: &str) -> Result<(), String> {
        let resp = self
            .client
            .post(endpoint)
            .header(reqwest::header::CONTENT_TYPE, "text/plain")
            .body(wire.to_string())
            .send()
            .await
            .map_err(|e| e.to_string())?;
        if resp.status().is_success() {
            Ok(())
        } else {
            Err(format!("HTTP {}", resp.status()))
        }
    }
}

/// Keeps every command in memory, in send order.
#[derive(Debug, Default)]
pub struct CommandLog(Mutex<Vec<(String, String)>>);

impl CommandLog {
    pub fn entries(&self) -> Vec<(String, String)> {
        self.0.lock().clone()
    }

    pub fn wires(&self) -> Vec<String> {
        self.0.lock().iter().map(|(_, w)| w.clone()).collect()
    }
}

#[async_trait]
impl CommandSink for CommandLog {
    async fn send(&self, endpoint: &str, wire: &str) -> Result<(), String> {
        self.0.lock().push((endpoint.to_string(), wire.to_string()));
        Ok(())
    }
}

/// Value of command `attr` for an entity of `entity_type`, or `None` if
/// the value has no command form.
pub fn command_value(entity_type: &str, attr: &str, value: &Value) -> Option<String> {
    match (entity_type, attr, value) {
        ("ParkingSpot", "status", Value::String(s)) => parking::bulb_color(s).map(str::to_string),
        (_, _, Value::String(s)) => Some(s.clone()),
        (_, _, Value::Number(n)) => Some(n.to_string()),
        (_, _, Value::Bool(b)) => Some(b.to_string()),
        _ => None,
    }
}

#[derive(Debug, Default)]
struct Sequence {
    next: u64,
    assigned: HashMap<String, u64>,
}

pub struct Agent {
    broker: Arc<dyn ContextApi>,
    sink: Arc<dyn CommandSink>,
    config: AgentConfig,
    devices: RwLock<BTreeMap<String, DeviceRegistration>>,
    /// Entity id to the actuators bound to it.
    actuators: RwLock<HashMap<String, Vec<String>>>,
    sequences: Mutex<HashMap<String, Sequence>>,
    device_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
    /// Adjusts from this agent to one entity run one at a time; CAS only
    /// has to settle races with other writers.
    adjust_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl Agent {
    pub fn new(broker: Arc<dyn ContextApi>, sink: Arc<dyn CommandSink>, config: AgentConfig) -> Self {
        Self {
            broker,
            sink,
            config,
            devices: RwLock::default(),
            actuators: RwLock::default(),
            sequences: Mutex::default(),
            device_locks: Mutex::default(),
            adjust_locks: Mutex::default(),
        }
    }

    pub fn register_device(&self, reg: DeviceRegistration) -> Result<(), AgentError> {
        reg.validate()?;
        let mut devices = self.devices.write();
        if devices.contains_key(&reg.device_key) {
            return Err(AgentError::DuplicateDevice(reg.device_key));
        }
        if reg.is_actuator() {
            self.actuators
                .write()
                .entry(reg.entity.id_template.clone())
                .or_default()
                .push(reg.device_key.clone());
        }
        devices.insert(reg.device_key.clone(), reg);
        Ok(())
    }

    pub fn register_all(&self, regs: impl IntoIterator<Item = DeviceRegistration>) -> Result<(), AgentError> {
        regs.into_iter().try_for_each(|r| self.register_device(r))
    }

    pub fn device(&self, key: &str) -> Option<DeviceRegistration> {
        self.devices.read().get(key).cloned()
    }

    pub fn devices(&self) -> Vec<DeviceRegistration> {
        self.devices.read().values().cloned().collect()
    }

    /// One subscription per actuated entity type, covering the attributes
    /// that drive commands, delivered to `notify_url`.
    pub fn actuator_subscriptions(&self, notify_url: &str) -> Vec<Subscription> {
        let mut by_type: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for reg in self.devices.read().values().filter(|r| r.is_actuator()) {
            let attrs = by_type.entry(reg.entity.entity_type.clone()).or_default();
            for attr in reg.commands.values() {
                if !attrs.contains(attr) {
                    attrs.push(attr.clone());
                }
            }
        }
        by_type
            .into_iter()
            .map(|(ty, attrs)| {
                let attrs: Vec<&str> = attrs.iter().map(String::as_str).collect();
                Subscription::new(vec![EntitySelector::of_type(&ty)], notify_url)
                    .on_change_of(&attrs)
                    .notify_attrs(&attrs)
                    .describe(&format!("{ty} actuators"))
            })
            .collect()
    }

    fn device_lock(&self, key: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.device_locks.lock().entry(key.to_string()).or_default().clone()
    }

    fn sequence_number(&self, reg: &DeviceRegistration, seq: &IdSequence, group: &UlMeasure) -> Result<u64, AgentError> {
        let value = group
            .get(&seq.key)
            .ok_or_else(|| AgentError::Template(format!("sequence key `{}` missing", seq.key)))?;
        let scope = format!("{}|{}", reg.entity.entity_type, reg.entity.id_template);
        let mut sequences = self.sequences.lock();
        let s = sequences.entry(scope).or_insert_with(|| Sequence {
            next: seq.start,
            ..Sequence::default()
        });
        if let Some(n) = s.assigned.get(value) {
            return Ok(*n);
        }
        let n = s.next;
        s.next += 1;
        s.assigned.insert(value.to_string(), n);
        Ok(n)
    }

    async fn retrying<T, F, Fut>(&self, mut op: F) -> Result<(T, u32), AgentError>
    where
        F: FnMut() -> Fut,
        Fut: Future<Output = Result<T, BrokerError>>,
    {
        let mut attempt = 0;
        loop {
            attempt += 1;
            match op().await {
                Err(BrokerError::Unavailable(e)) if attempt < self.config.unavailable_attempts => {
                    tracing::warn!(error = %e, attempt, "broker unavailable, retrying");
                    tokio::time::sleep(Duration::from_millis(50 << (attempt - 1))).await;
                }
                other => return other.map(|v| (v, attempt)).map_err(Into::into),
            }
        }
    }

    /// Adds `delta` to a numeric attribute with compare-and-set, retrying on
    /// version conflicts with jittered exponential backoff.
    async fn adjust(&self, id: &str, attr: &str, delta: i64) -> Result<AgentWrite, AgentError> {
        let lock = self.adjust_locks.lock().entry(id.to_string()).or_default().clone();
        let _serial = lock.lock().await;
        for attempt in 1..=self.config.cas_attempts {
            let ((doc, version), _) = self.retrying(|| self.broker.get_entity(id)).await?;
            let current = &doc[attr];
            let next = if let Some(n) = current.as_i64() {
                Value::Number((n + delta).into())
            } else if let Some(n) = current.as_f64() {
                Number::from_f64(n + delta as f64).map(Value::Number).unwrap_or(Value::Null)
            } else {
                return Err(AgentError::NotNumeric {
                    entity: id.into(),
                    attr: attr.into(),
                });
            };
            let mut attrs = Map::new();
            attrs.insert(attr.to_string(), next);
            match self
                .retrying(|| self.broker.update_attrs(id, &attrs, Some(version)))
                .await
            {
                Ok((version, _)) => {
                    return Ok(AgentWrite {
                        kind: WriteKind::Adjust,
                        entity_id: id.into(),
                        version,
                        attempts: attempt,
                    })
                }
                Err(AgentError::Broker(BrokerError::VersionConflict { .. })) => {
                    let cap = self.config.cas_backoff.saturating_mul(1 << attempt.min(7));
                    let wait = rand::rng().random_range(Duration::ZERO..=cap);
                    tokio::time::sleep(wait).await;
                }
                Err(e) => return Err(e),
            }
        }
        Err(AgentError::Contention {
            entity: id.into(),
            attempts: self.config.cas_attempts,
        })
    }

    /// Applies an Ultralight payload from `device_key` and returns the
    /// writes it caused, in order.
    pub async fn handle_measure(&self, device_key: &str, payload: &str) -> Result<Vec<AgentWrite>, AgentError> {
        let reg = self
            .device(device_key)
            .ok_or_else(|| AgentError::UnknownDevice(device_key.into()))?;
        let groups = parse_measure(payload)?;
        let lock = self.device_lock(device_key);
        let _guard = lock.lock().await;
        let mut writes = Vec::new();
        for group in &groups {
            self.apply_group(&reg, group, &mut writes).await?;
        }
        Ok(writes)
    }

    async fn apply_group(
        &self,
        reg: &DeviceRegistration,
        group: &UlMeasure,
        writes: &mut Vec<AgentWrite>,
    ) -> Result<(), AgentError> {
        let seq = match &reg.entity.sequence {
            Some(s) if group.contains(&s.key) => Some(self.sequence_number(reg, s, group)?),
            _ => None,
        };
        let base_ctx = TemplateCtx {
            measure: Some(group),
            entity_id: None,
            seq,
        };
        let entity_id = render_template(&reg.entity.id_template, base_ctx).ok();
        let ctx = TemplateCtx {
            entity_id: entity_id.as_deref(),
            ..base_ctx
        };

        let mut doc = Map::new();
        for (key, value) in &group.pairs {
            if let Some(attr) = reg.attr_map.get(key) {
                doc.insert(attr.clone(), Value::String(value.clone()));
            }
        }
        if !doc.is_empty() {
            let id = entity_id
                .clone()
                .ok_or_else(|| AgentError::Template(format!("cannot name the entity of `{}`", reg.device_key)))?;
            doc.insert("id".into(), Value::String(id.clone()));
            doc.insert("type".into(), Value::String(reg.entity.entity_type.clone()));
            let doc = Value::Object(doc);
            let (upserted, attempts) = self.retrying(|| self.broker.upsert(&doc)).await?;
            writes.push(AgentWrite {
                kind: WriteKind::Upsert,
                entity_id: id,
                version: upserted.version(),
                attempts,
            });
        }

        for rule in reg.expansion_rules.iter().filter(|r| group.contains(&r.trigger)) {
            for action in &rule.actions {
                let target = render_template(&action.target_id_template, ctx)?;
                if !action.set_attrs.is_empty() {
                    let attrs = action
                        .set_attrs
                        .iter()
                        .map(|(k, v)| Ok((k.clone(), render_value(v, ctx)?)))
                        .collect::<Result<Map<_, _>, AgentError>>()?;
                    let (version, attempts) = self
                        .retrying(|| self.broker.update_attrs(&target, &attrs, None))
                        .await?;
                    writes.push(AgentWrite {
                        kind: WriteKind::Update,
                        entity_id: target.clone(),
                        version,
                        attempts,
                    });
                }
                if let Some(adj) = &action.adjust {
                    writes.push(self.adjust(&target, &adj.attr_name, adj.delta).await?);
                }
            }
        }
        Ok(())
    }

    /// Turns the entities in a notification into commands for the bound
    /// actuators. Commands for one device are sent in notification order.
    pub async fn handle_notification(&self, notification: &Notification) -> CommandReport {
        let mut report = CommandReport::default();
        for doc in &notification.data {
            let Some(id) = doc["id"].as_str() else { continue };
            let entity_type = doc["type"].as_str().unwrap_or_default();
            let bound = self.actuators.read().get(id).cloned().unwrap_or_default();
            if bound.is_empty() {
                tracing::debug!(entity = id, "no actuator for entity");
                report.unknown.push(id.to_string());
                continue;
            }
            for key in bound {
                let Some(reg) = self.device(&key) else { continue };
                let lock = self.device_lock(&key);
                let _guard = lock.lock().await;
                for (command, attr) in &reg.commands {
                    let Some(value) = doc.get(attr).and_then(|v| command_value(entity_type, attr, v)) else {
                        continue;
                    };
                    let cmd = UlCommand::new(&key, command, &value);
                    let wire = match render_command(&cmd) {
                        Ok(w) => w,
                        Err(e) => {
                            tracing::warn!(error = %e, "command not encodable");
                            report.failed.push(format!("{key}@{command}"));
                            continue;
                        }
                    };
                    let endpoint = reg.endpoint.as_deref().expect("validated actuator");
                    match self.sink.send(endpoint, &wire).await {
                        Ok(()) => report.sent.push(wire),
                        Err(e) => {
                            tracing::warn!(error = %e, device = %key, "command not delivered");
                            report.failed.push(wire);
                        }
                    }
                }
            }
        }
        report
    }
}
