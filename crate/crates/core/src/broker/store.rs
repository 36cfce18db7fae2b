use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::dispatch::{Dispatcher, HttpTransport, Notification, Queue, RetryPolicy, Transport};
use super::subscription::{Change, Subscription, SubscriptionRegistry};
use super::BrokerError;
use crate::clock::{self, iso, SharedClock};
use crate::model::{self, render, render_attrs, Attribute, ContextEntity, Representation};

#[derive(Debug, Clone)]
pub struct BrokerConfig {
    pub retry: RetryPolicy,
    /// Keep an in-memory log of every successful write (diagnostics).
    pub record_writes: bool,
    /// Only count an attribute as changed when its value differs.
    pub notify_on_value_change_only: bool,
}

impl Default for BrokerConfig {
    fn default() -> Self {
        Self {
            retry: RetryPolicy::default(),
            record_writes: false,
            notify_on_value_change_only: false,
        }
    }
}

/// An entity together with its write counter.
#[derive(Debug, Clone, PartialEq)]
pub struct Versioned {
    pub entity: ContextEntity,
    pub version: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WriteOp {
    Create,
    Update,
    Delete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WriteRecord {
    pub seq: u64,
    pub op: WriteOp,
    pub entity_id: String,
    pub version: u64,
    pub attrs: Vec<String>,
}

/// Entity filters for [`Broker::list_entities`]. All present filters must hold.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EntityQuery {
    pub entity_type: Option<String>,
    pub id_pattern: Option<String>,
    pub attr_equals: BTreeMap<String, Value>,
}

impl EntityQuery {
    pub fn of_type(entity_type: &str) -> Self {
        Self {
            entity_type: Some(entity_type.to_string()),
            ..Self::default()
        }
    }

    pub fn with_pattern(mut self, pattern: &str) -> Self {
        self.id_pattern = Some(pattern.to_string());
        self
    }

    pub fn where_eq(mut self, attr: &str, value: Value) -> Self {
        self.attr_equals.insert(attr.to_string(), value);
        self
    }

    /// Parses the `q` parameter: `attr==value` terms joined by `;`.
    pub fn parse_q(mut self, q: &str) -> Result<Self, BrokerError> {
        for term in q.split(';').filter(|t| !t.is_empty()) {
            let (attr, raw) = term
                .split_once("==")
                .ok_or_else(|| BrokerError::BadFilter(format!("unsupported q term `{term}`")))?;
            if attr.is_empty() {
                return Err(BrokerError::BadFilter(format!("empty attribute in `{term}`")));
            }
            let raw = raw.trim_matches('\'');
            let value = match serde_json::from_str::<Value>(raw) {
                Ok(v @ (Value::Number(_) | Value::Bool(_) | Value::Null)) => v,
                _ => Value::String(raw.to_string()),
            };
            self.attr_equals.insert(attr.to_string(), value);
        }
        Ok(self)
    }

    fn compile(&self) -> Result<Option<Regex>, BrokerError> {
        self.id_pattern
            .as_deref()
            .map(|p| {
                Regex::new(&format!("^(?:{p})$"))
                    .map_err(|e| BrokerError::BadFilter(format!("idPattern `{p}`: {e}")))
            })
            .transpose()
    }
}

fn loosely_equal(stored: &Value, wanted: &Value) -> bool {
    if stored == wanted {
        return true;
    }
    match (stored, wanted) {
        (Value::Number(a), Value::Number(b)) => a.as_f64() == b.as_f64(),
        (Value::String(s), other) | (other, Value::String(s)) => *s == other.to_string(),
        _ => false,
    }
}

struct QueueSlot {
    queue: Queue,
    last_sent: Option<Instant>,
}

#[derive(Default)]
struct State {
    entities: BTreeMap<String, Versioned>,
    subs: SubscriptionRegistry,
    queues: HashMap<String, QueueSlot>,
    next_subscription: u64,
    writes: Vec<WriteRecord>,
}

/// Latest-state context store with publish-subscribe.
///
/// Every write takes the state lock, applies the change, evaluates the
/// subscriptions against the post-write entity and enqueues notifications
/// before releasing the lock. Per-subscription delivery order therefore
/// equals write order.
pub struct Broker {
    state: Mutex<State>,
    dispatcher: Dispatcher,
    config: BrokerConfig,
    clock: SharedClock,
}

impl Broker {
    /// Must be called from within a Tokio runtime.
    pub fn new(config: BrokerConfig, transport: Arc<dyn Transport>, clock: SharedClock) -> Self {
        Self {
            state: Mutex::default(),
            dispatcher: Dispatcher::new(transport, config.retry, clock.clone()),
            config,
            clock,
        }
    }

    /// Broker delivering over HTTP with the system clock.
    pub fn with_http(config: BrokerConfig) -> Self {
        Self::new(config, Arc::new(HttpTransport::default()), clock::system())
    }

    pub fn create_entity(&self, entity: ContextEntity) -> Result<u64, BrokerError> {
        entity.validate()?;
        let mut state = self.state.lock();
        if state.entities.contains_key(&entity.id) {
            return Err(BrokerError::AlreadyExists(entity.id));
        }
        let changed: BTreeSet<String> = entity.attributes.keys().cloned().collect();
        let stored = Versioned { entity, version: 1 };
        self.log_write(&mut state, WriteOp::Create, &stored, &changed);
        self.notify(&mut state, &stored.entity, &changed);
        state.entities.insert(stored.entity.id.clone(), stored);
        Ok(1)
    }

    /// Replaces the listed attributes (appending absent ones). With
    /// `expected_version`, the write only happens if the stored version
    /// still equals it.
    pub fn update_attrs(
        &self,
        id: &str,
        attrs: BTreeMap<String, Attribute>,
        expected_version: Option<u64>,
    ) -> Result<u64, BrokerError> {
        let mut probe = ContextEntity::new("probe:0", "Probe")?;
        probe.attributes = attrs;
        probe.validate()?;
        let attrs = probe.attributes;

        let mut state = self.state.lock();
        let current = state
            .entities
            .get(id)
            .ok_or_else(|| BrokerError::NotFound(id.to_string()))?;
        if let Some(expected) = expected_version {
            if expected != current.version {
                return Err(BrokerError::VersionConflict {
                    expected,
                    actual: current.version,
                });
            }
        }
        if attrs.is_empty() {
            return Ok(current.version);
        }
        let mut next = current.clone();
        let mut changed = BTreeSet::new();
        for (name, attr) in attrs {
            let differs = next.entity.attributes.get(&name) != Some(&attr);
            if differs || !self.config.notify_on_value_change_only {
                changed.insert(name.clone());
            }
            next.entity.attributes.insert(name, attr);
        }
        next.version += 1;
        self.log_write(&mut state, WriteOp::Update, &next, &changed);
        self.notify(&mut state, &next.entity, &changed);
        let version = next.version;
        state.entities.insert(id.to_string(), next);
        Ok(version)
    }

    pub fn get_entity(&self, id: &str) -> Result<Versioned, BrokerError> {
        self.state
            .lock()
            .entities
            .get(id)
            .cloned()
            .ok_or_else(|| BrokerError::NotFound(id.to_string()))
    }

    /// Entities satisfying every filter, in id order.
    pub fn list_entities(&self, query: &EntityQuery) -> Result<Vec<ContextEntity>, BrokerError> {
        let pattern = query.compile()?;
        let state = self.state.lock();
        Ok(state
            .entities
            .values()
            .map(|v| &v.entity)
            .filter(|e| query.entity_type.as_ref().is_none_or(|t| *t == e.entity_type))
            .filter(|e| pattern.as_ref().is_none_or(|re| re.is_match(&e.id)))
            .filter(|e| {
                query.attr_equals.iter().all(|(name, wanted)| {
                    e.attr_value(name).is_some_and(|v| loosely_equal(v, wanted))
                })
            })
            .cloned()
            .collect())
    }

    /// Removes the entity. Deletions are not notified.
    pub fn delete_entity(&self, id: &str) -> Result<(), BrokerError> {
        let mut state = self.state.lock();
        let removed = state
            .entities
            .remove(id)
            .ok_or_else(|| BrokerError::NotFound(id.to_string()))?;
        self.log_write(&mut state, WriteOp::Delete, &removed, &BTreeSet::new());
        Ok(())
    }

    pub fn create_subscription(&self, mut sub: Subscription) -> Result<String, BrokerError> {
        sub.compile()?;
        let mut state = self.state.lock();
        state.next_subscription += 1;
        sub.id = format!("{:024x}", state.next_subscription);
        sub.notification.stats = Default::default();
        let queue = self.dispatcher.open_queue(&sub.id, sub.url());
        let id = sub.id.clone();
        state.subs.insert(sub)?;
        state.queues.insert(
            id.clone(),
            QueueSlot {
                queue,
                last_sent: None,
            },
        );
        Ok(id)
    }

    pub fn get_subscription(&self, id: &str) -> Result<Subscription, BrokerError> {
        let state = self.state.lock();
        let mut sub = state
            .subs
            .get(id)
            .cloned()
            .ok_or_else(|| BrokerError::NotFound(id.to_string()))?;
        sub.notification.stats = self.dispatcher.stats(id);
        Ok(sub)
    }

    pub fn list_subscriptions(&self) -> Vec<Subscription> {
        let state = self.state.lock();
        state
            .subs
            .iter()
            .cloned()
            .map(|mut sub| {
                sub.notification.stats = self.dispatcher.stats(&sub.id);
                sub
            })
            .collect()
    }

    /// Already-queued notifications are still delivered.
    pub fn delete_subscription(&self, id: &str) -> Result<(), BrokerError> {
        let mut state = self.state.lock();
        state
            .subs
            .remove(id)
            .ok_or_else(|| BrokerError::NotFound(id.to_string()))?;
        state.queues.remove(id);
        Ok(())
    }

    /// Notifications enqueued but not yet settled, across all subscriptions.
    pub fn pending_deliveries(&self) -> usize {
        self.dispatcher.pending()
    }

    pub fn queue_depths(&self) -> BTreeMap<String, usize> {
        let state = self.state.lock();
        state
            .queues
            .iter()
            .map(|(id, slot)| (id.clone(), slot.queue.depth()))
            .collect()
    }

    /// Waits until no delivery is pending, polling every `every`.
    pub async fn quiesce(&self, every: Duration) {
        let mut settled = 0;
        while settled < 2 {
            tokio::time::sleep(every).await;
            settled = if self.pending_deliveries() == 0 { settled + 1 } else { 0 };
        }
    }

    pub fn write_log(&self) -> Vec<WriteRecord> {
        self.state.lock().writes.clone()
    }

    /// Every stored entity, in id order.
    pub fn dump(&self) -> Vec<Versioned> {
        self.state.lock().entities.values().cloned().collect()
    }

    pub fn save_snapshot(&self, path: impl AsRef<Path>) -> Result<(), BrokerError> {
        let snapshot: Vec<SnapshotEntry> = self
            .dump()
            .into_iter()
            .map(|v| SnapshotEntry {
                entity: render(&v.entity, Representation::Normalized),
                version: v.version,
            })
            .collect();
        let text = serde_json::to_string_pretty(&snapshot).expect("snapshot serializes");
        fs::write(path, text).map_err(|e| BrokerError::Storage(e.to_string()))
    }

    /// Loads a snapshot into an empty broker without notifying anyone.
    pub fn restore_snapshot(&self, path: impl AsRef<Path>) -> Result<usize, BrokerError> {
        let text = fs::read_to_string(path).map_err(|e| BrokerError::Storage(e.to_string()))?;
        let snapshot: Vec<SnapshotEntry> =
            serde_json::from_str(&text).map_err(|e| BrokerError::Storage(e.to_string()))?;
        let mut state = self.state.lock();
        if !state.entities.is_empty() {
            return Err(BrokerError::Storage("restore requires an empty broker".into()));
        }
        for entry in &snapshot {
            let entity = model::normalize(&entry.entity, Representation::Normalized)?;
            state.entities.insert(
                entity.id.clone(),
                Versioned {
                    entity,
                    version: entry.version,
                },
            );
        }
        Ok(snapshot.len())
    }

    fn log_write(&self, state: &mut State, op: WriteOp, stored: &Versioned, changed: &BTreeSet<String>) {
        if self.config.record_writes {
            let seq = state.writes.len() as u64 + 1;
            state.writes.push(WriteRecord {
                seq,
                op,
                entity_id: stored.entity.id.clone(),
                version: stored.version,
                attrs: changed.iter().cloned().collect(),
            });
        }
    }

    fn notify(&self, state: &mut State, entity: &ContextEntity, changed: &BTreeSet<String>) {
        let now = Instant::now();
        let sent_at = iso(self.clock.now());
        let State { subs, queues, .. } = state;
        for sub in subs.matching(Change { entity, changed }) {
            let Some(slot) = queues.get_mut(&sub.id) else {
                continue;
            };
            if sub.throttling > 0.0 {
                let window = Duration::from_secs_f64(sub.throttling);
                if slot.last_sent.is_some_and(|t| now.duration_since(t) < window) {
                    continue;
                }
            }
            slot.last_sent = Some(now);
            let doc = filtered(entity, &sub.notification.attrs, sub.notification.attrs_format);
            slot.queue.push(
                Notification {
                    subscription_id: sub.id.clone(),
                    data: vec![doc],
                },
                sent_at.clone(),
            );
        }
    }
}

fn filtered(entity: &ContextEntity, attrs: &[String], repr: Representation) -> Value {
    if attrs.is_empty() {
        return render(entity, repr);
    }
    let mut doc = render_attrs(
        entity
            .attributes
            .iter()
            .filter(|(name, _)| attrs.contains(name)),
        repr,
    );
    doc.insert("id".into(), Value::String(entity.id.clone()));
    doc.insert("type".into(), Value::String(entity.entity_type.clone()));
    Value::Object(doc)
}

#[derive(Serialize, Deserialize)]
struct SnapshotEntry {
    entity: Value,
    version: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::broker::subscription::EntitySelector;
    use crate::broker::{DeliveryOutcome, Transport};
    use crate::model::normalize;
    use async_trait::async_trait;
    use serde_json::json;

    /// Records every POST body it receives and answers 200.
    #[derive(Default)]
    struct Recorder(Mutex<Vec<(String, Notification)>>);

    #[async_trait]
    impl Transport for Recorder {
        async fn post(&self, url: &str, n: &Notification, _: &str) -> Result<u16, String> {
            self.0.lock().push((url.to_string(), n.clone()));
            Ok(200)
        }
    }

    fn kv(doc: Value) -> ContextEntity {
        normalize(&doc, Representation::KeyValues).unwrap()
    }

    fn attrs(doc: Value) -> BTreeMap<String, Attribute> {
        model::normalize_attrs(doc.as_object().unwrap(), Representation::KeyValues).unwrap()
    }

    fn broker() -> (Broker, Arc<Recorder>) {
        let recorder = Arc::new(Recorder::default());
        let config = BrokerConfig {
            record_writes: true,
            ..Default::default()
        };
        (Broker::new(config, recorder.clone(), clock::system()), recorder)
    }

    fn vehicle() -> ContextEntity {
        kv(json!({"id":"vehicle:501","type":"Vehicle","vehicleType":"car","vehiclePlateIdentifier":"123456"}))
    }

    #[tokio::test]
    async fn create_then_get_returns_input_at_version_one() {
        let (b, _) = broker();
        assert_eq!(b.create_entity(vehicle()).unwrap(), 1);
        let got = b.get_entity("vehicle:501").unwrap();
        assert_eq!(got, Versioned { entity: vehicle(), version: 1 });
        assert!(matches!(b.create_entity(vehicle()), Err(BrokerError::AlreadyExists(_))));
        assert!(matches!(b.get_entity("nope"), Err(BrokerError::NotFound(_))));
    }

    #[tokio::test]
    async fn create_notifies_matching_subscription_once() {
        let (b, rec) = broker();
        let sub = Subscription::new(vec![EntitySelector::of_type("ParkingSpot")], "http://app/notify")
            .on_change_of(&["status"]);
        b.create_subscription(sub).unwrap();
        b.create_entity(kv(json!({"id":"spot:51","type":"ParkingSpot","name":"51","status":"free"})))
            .unwrap();
        b.create_entity(vehicle()).unwrap();
        b.quiesce(Duration::from_millis(5)).await;
        let seen = rec.0.lock();
        assert_eq!(seen.len(), 1);
        assert_eq!(seen[0].1.data[0]["id"], "spot:51");
    }

    #[tokio::test]
    async fn update_replaces_listed_attributes_and_bumps_version() {
        let (b, _) = broker();
        b.create_entity(kv(json!({"id":"parking:1","type":"OffStreetParking","availableSpotNumber":1450,"name":"P"})))
            .unwrap();
        let v = b.update_attrs("parking:1", attrs(json!({"availableSpotNumber":1449})), None).unwrap();
        assert_eq!(v, 2);
        let got = b.get_entity("parking:1").unwrap().entity;
        assert_eq!(got.attr_value("availableSpotNumber"), Some(&json!(1449)));
        assert_eq!(got.attr_value("name"), Some(&json!("P")));
        // absent attributes are appended
        b.update_attrs("parking:1", attrs(json!({"extra":true})), None).unwrap();
        assert_eq!(b.get_entity("parking:1").unwrap().entity.attributes.len(), 3);
    }

    #[tokio::test]
    async fn empty_update_changes_nothing() {
        let (b, rec) = broker();
        b.create_subscription(Subscription::new(vec![EntitySelector::pattern(".*")], "http://x/")).unwrap();
        b.create_entity(vehicle()).unwrap();
        assert_eq!(b.update_attrs("vehicle:501", BTreeMap::new(), None).unwrap(), 1);
        b.quiesce(Duration::from_millis(5)).await;
        assert_eq!(rec.0.lock().len(), 1);
        assert_eq!(b.write_log().len(), 1);
    }

    #[tokio::test]
    async fn same_value_update_still_notifies() {
        let (b, rec) = broker();
        b.create_entity(vehicle()).unwrap();
        b.create_subscription(Subscription::new(vec![EntitySelector::pattern(".*")], "http://x/")).unwrap();
        b.update_attrs("vehicle:501", attrs(json!({"vehicleType":"car"})), None).unwrap();
        b.quiesce(Duration::from_millis(5)).await;
        assert_eq!(rec.0.lock().len(), 1);
    }

    #[tokio::test]
    async fn value_change_gating_is_opt_in() {
        let rec = Arc::new(Recorder::default());
        let config = BrokerConfig { notify_on_value_change_only: true, ..Default::default() };
        let b = Broker::new(config, rec.clone(), clock::system());
        b.create_entity(vehicle()).unwrap();
        let sub = Subscription::new(vec![EntitySelector::pattern(".*")], "http://x/").on_change_of(&["vehicleType"]);
        b.create_subscription(sub).unwrap();
        b.update_attrs("vehicle:501", attrs(json!({"vehicleType":"car"})), None).unwrap();
        b.update_attrs("vehicle:501", attrs(json!({"vehicleType":"van"})), None).unwrap();
        b.quiesce(Duration::from_millis(5)).await;
        assert_eq!(rec.0.lock().len(), 1);
    }

    #[tokio::test]
    async fn compare_and_set_rejects_stale_versions() {
        let (b, _) = broker();
        b.create_entity(kv(json!({"id":"parking:1","type":"OffStreetParking","availableSpotNumber":1450}))).unwrap();
        let first = b.update_attrs("parking:1", attrs(json!({"availableSpotNumber":1449})), Some(1));
        let second = b.update_attrs("parking:1", attrs(json!({"availableSpotNumber":1449})), Some(1));
        assert_eq!(first.unwrap(), 2);
        assert_eq!(second, Err(BrokerError::VersionConflict { expected: 1, actual: 2 }));
    }

    #[tokio::test]
    async fn concurrent_compare_and_set_has_exactly_one_winner() {
        let (b, _) = broker();
        let b = Arc::new(b);
        b.create_entity(kv(json!({"id":"parking:1","type":"OffStreetParking","availableSpotNumber":1450}))).unwrap();
        let barrier = Arc::new(std::sync::Barrier::new(2));
        let handles: Vec<_> = (0..2)
            .map(|_| {
                let b = b.clone();
                let barrier = barrier.clone();
                std::thread::spawn(move || {
                    barrier.wait();
                    b.update_attrs("parking:1", attrs(json!({"availableSpotNumber":1449})), Some(1))
                })
            })
            .collect();
        let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        assert_eq!(results.iter().filter(|r| r.is_ok()).count(), 1);
        assert!(results.iter().any(|r| matches!(r, Err(BrokerError::VersionConflict { .. }))));
    }

    #[tokio::test]
    async fn latest_state_after_many_updates() {
        let (b, _) = broker();
        b.create_entity(kv(json!({"id":"parking:1","type":"OffStreetParking","availableSpotNumber":1450}))).unwrap();
        // replay counter oracle: value after k updates is 1450 - k
        for k in 1..=100 {
            b.update_attrs("parking:1", attrs(json!({"availableSpotNumber": 1450 - k})), None).unwrap();
        }
        let got = b.get_entity("parking:1").unwrap();
        assert_eq!(got.entity.attr_value("availableSpotNumber"), Some(&json!(1350)));
        assert_eq!(got.version, 101);
    }

    #[tokio::test]
    async fn list_filters_match_a_linear_scan() {
        let (b, _) = broker();
        b.create_entity(vehicle()).unwrap();
        for (n, status) in [(3, "free"), (51, "occupied"), (7, "occupied"), (12, "closed")] {
            b.create_entity(kv(json!({"id":format!("spot:{n}"),"type":"ParkingSpot","name":n.to_string(),"status":status})))
                .unwrap();
        }
        let occupied = b
            .list_entities(&EntityQuery::of_type("ParkingSpot").where_eq("status", json!("occupied")))
            .unwrap();
        let ids: Vec<_> = occupied.iter().map(|e| e.id.as_str()).collect();
        let expected: Vec<_> = b
            .dump()
            .into_iter()
            .filter(|v| v.entity.entity_type == "ParkingSpot" && v.entity.attr_value("status") == Some(&json!("occupied")))
            .map(|v| v.entity.id)
            .collect();
        assert_eq!(ids, expected);
        assert_eq!(ids, ["spot:51", "spot:7"]);

        let by_pattern = b.list_entities(&EntityQuery::default().with_pattern("spot:.*")).unwrap();
        assert_eq!(by_pattern.len(), 4);
        let by_q = b.list_entities(&EntityQuery::default().parse_q("name==51").unwrap()).unwrap();
        assert_eq!(by_q.len(), 1);
        assert!(matches!(
            b.list_entities(&EntityQuery::default().with_pattern("(")),
            Err(BrokerError::BadFilter(_))
        ));
    }

    #[tokio::test]
    async fn list_on_empty_store_is_empty() {
        let (b, _) = broker();
        assert!(b.list_entities(&EntityQuery::default()).unwrap().is_empty());
    }

    #[tokio::test]
    async fn delete_removes_without_notifying() {
        let (b, rec) = broker();
        b.create_entity(kv(json!({"id":"spot:51","type":"ParkingSpot","status":"free"}))).unwrap();
        b.create_subscription(Subscription::new(vec![EntitySelector::pattern(".*")], "http://x/")).unwrap();
        b.delete_entity("spot:51").unwrap();
        assert!(matches!(b.get_entity("spot:51"), Err(BrokerError::NotFound(_))));
        assert!(matches!(b.delete_entity("spot:51"), Err(BrokerError::NotFound(_))));
        assert!(b.list_entities(&EntityQuery::of_type("ParkingSpot")).unwrap().is_empty());
        b.quiesce(Duration::from_millis(5)).await;
        assert!(rec.0.lock().is_empty());
    }

    #[tokio::test]
    async fn notification_respects_attribute_filter() {
        let (b, rec) = broker();
        let sub = Subscription::new(vec![EntitySelector::of_type("ParkingSpot")], "http://x/").notify_attrs(&["status"]);
        b.create_subscription(sub).unwrap();
        b.create_entity(kv(json!({"id":"spot:51","type":"ParkingSpot","name":"51","status":"free"}))).unwrap();
        b.quiesce(Duration::from_millis(5)).await;
        assert_eq!(rec.0.lock()[0].1.data, vec![json!({"id":"spot:51","type":"ParkingSpot","status":"free"})]);
    }

    #[tokio::test]
    async fn throttling_drops_changes_inside_the_window() {
        let (b, rec) = broker();
        b.create_entity(vehicle()).unwrap();
        let sub = Subscription::new(vec![EntitySelector::id("vehicle:501")], "http://x/").throttled(1.0);
        b.create_subscription(sub).unwrap();
        for i in 0..10 {
            b.update_attrs("vehicle:501", attrs(json!({"n": i})), None).unwrap();
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
        b.quiesce(Duration::from_millis(5)).await;
        assert_eq!(rec.0.lock().len(), 1);
    }

    #[tokio::test]
    async fn failed_delivery_does_not_fail_the_write() {
        struct Down;
        #[async_trait]
        impl Transport for Down {
            async fn post(&self, _: &str, _: &Notification, _: &str) -> Result<u16, String> {
                Err("connection refused".into())
            }
        }
        let config = BrokerConfig {
            retry: RetryPolicy { retries: 1, backoff_base: Duration::from_millis(1) },
            ..Default::default()
        };
        let b = Broker::new(config, Arc::new(Down), clock::system());
        let id = b.create_subscription(Subscription::new(vec![EntitySelector::pattern(".*")], "http://x/")).unwrap();
        assert_eq!(b.create_entity(vehicle()).unwrap(), 1);
        b.quiesce(Duration::from_millis(5)).await;
        let stats = b.get_subscription(&id).unwrap().notification.stats;
        assert_eq!(stats.failures, 1);
        assert!(stats.last_failure.is_some());
        assert_eq!(stats.times_sent, 0);
        let _ = DeliveryOutcome::Delivered { attempts: 1 };
    }

    #[tokio::test]
    async fn snapshot_round_trip() {
        let (b, _) = broker();
        b.create_entity(vehicle()).unwrap();
        b.update_attrs("vehicle:501", attrs(json!({"vehicleType":"van"})), None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.json");
        b.save_snapshot(&path).unwrap();
        let (fresh, _) = broker();
        assert_eq!(fresh.restore_snapshot(&path).unwrap(), 1);
        assert_eq!(fresh.dump(), b.dump());
    }
}
