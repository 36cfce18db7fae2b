use std::collections::{BTreeMap, BTreeSet, HashMap};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::model::{ContextEntity, Representation};

use super::BrokerError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EntitySelector {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_pattern: Option<String>,
    #[serde(default, rename = "type", skip_serializing_if = "Option::is_none")]
    pub entity_type: Option<String>,
}

impl EntitySelector {
    pub fn of_type(entity_type: &str) -> Self {
        Self {
            id: None,
            id_pattern: None,
            entity_type: Some(entity_type.to_string()),
        }
    }

    pub fn pattern(id_pattern: &str) -> Self {
        Self {
            id: None,
            id_pattern: Some(id_pattern.to_string()),
            entity_type: None,
        }
    }

    pub fn id(id: &str) -> Self {
        Self {
            id: Some(id.to_string()),
            id_pattern: None,
            entity_type: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    #[serde(default)]
    pub attrs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub entities: Vec<EntitySelector>,
    #[serde(default)]
    pub condition: Condition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpEndpoint {
    pub url: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DeliveryStats {
    #[serde(default)]
    pub times_sent: u64,
    #[serde(default)]
    pub delivered_entities: u64,
    #[serde(default)]
    pub failures: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_success: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NotificationSpec {
    pub http: HttpEndpoint,
    #[serde(default)]
    pub attrs: Vec<String>,
    #[serde(default = "default_format")]
    pub attrs_format: Representation,
    #[serde(flatten)]
    pub stats: DeliveryStats,
}

fn default_format() -> Representation {
    Representation::KeyValues
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubscriptionStatus {
    #[default]
    Active,
    Inactive,
}

/// Registered interest in changes to matching entities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Subscription {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub subject: Subject,
    pub notification: NotificationSpec,
    #[serde(default)]
    pub throttling: f64,
    #[serde(default)]
    pub status: SubscriptionStatus,
}

impl Subscription {
    /// Subscription delivering `keyValues` documents to `url`.
    pub fn new(entities: Vec<EntitySelector>, url: &str) -> Self {
        Self {
            id: String::new(),
            description: None,
            subject: Subject {
                entities,
                condition: Condition::default(),
            },
            notification: NotificationSpec {
                http: HttpEndpoint {
                    url: url.to_string(),
                },
                attrs: Vec::new(),
                attrs_format: Representation::KeyValues,
                stats: DeliveryStats::default(),
            },
            throttling: 0.0,
            status: SubscriptionStatus::Active,
        }
    }

    pub fn on_change_of(mut self, attrs: &[&str]) -> Self {
        self.subject.condition.attrs = attrs.iter().map(|a| a.to_string()).collect();
        self
    }

    pub fn notify_attrs(mut self, attrs: &[&str]) -> Self {
        self.notification.attrs = attrs.iter().map(|a| a.to_string()).collect();
        self
    }

    pub fn throttled(mut self, seconds: f64) -> Self {
        self.throttling = seconds;
        self
    }

    pub fn format(mut self, repr: Representation) -> Self {
        self.notification.attrs_format = repr;
        self
    }

    pub fn describe(mut self, text: &str) -> Self {
        self.description = Some(text.to_string());
        self
    }

    pub fn url(&self) -> &str {
        &self.notification.http.url
    }

    /// Checks well-formedness and compiles every `idPattern`.
    pub(crate) fn compile(&self) -> Result<Vec<Option<Regex>>, BrokerError> {
        let bad = |msg: String| BrokerError::MalformedSubscription(msg);
        if self.subject.entities.is_empty() {
            return Err(bad("subject.entities is empty".into()));
        }
        if !(self.throttling >= 0.0 && self.throttling.is_finite()) {
            return Err(bad("throttling must be a non-negative number".into()));
        }
        let url = &self.notification.http.url;
        if !(url.starts_with("http://") || url.starts_with("https://")) {
            return Err(bad(format!("notification url `{url}` is not an HTTP endpoint")));
        }
        self.subject
            .entities
            .iter()
            .map(|sel| match (&sel.id, &sel.id_pattern) {
                (Some(_), Some(_)) => Err(bad("selector has both id and idPattern".into())),
                (Some(id), None) if id.is_empty() => Err(bad("empty id".into())),
                (_, Some(p)) => Regex::new(&format!("^(?:{p})$"))
                    .map(Some)
                    .map_err(|e| bad(format!("idPattern `{p}`: {e}"))),
                _ => Ok(None),
            })
            .collect()
    }
}

/// One entity change as seen by the matcher.
#[derive(Debug, Clone, Copy)]
pub struct Change<'a> {
    pub entity: &'a ContextEntity,
    pub changed: &'a BTreeSet<String>,
}

struct Entry {
    sub: Subscription,
    patterns: Vec<Option<Regex>>,
}

impl Entry {
    fn selector_matches(&self, idx: usize, entity: &ContextEntity) -> bool {
        let sel = &self.sub.subject.entities[idx];
        if sel.entity_type.as_ref().is_some_and(|t| *t != entity.entity_type) {
            return false;
        }
        if sel.id.as_ref().is_some_and(|id| *id != entity.id) {
            return false;
        }
        match &self.patterns[idx] {
            Some(re) => re.is_match(&entity.id),
            None => true,
        }
    }

    fn condition_matches(&self, changed: &BTreeSet<String>) -> bool {
        let cond = &self.sub.subject.condition.attrs;
        cond.is_empty() || cond.iter().any(|a| changed.contains(a))
    }
}

/// Where a selector is filed for candidate lookup.
#[derive(Debug, Clone, Copy)]
struct Slot {
    sub: usize,
    selector: usize,
}

/// Subscription store with an index keyed by entity id and entity type, so a
/// change only visits selectors that could possibly match it.
#[derive(Default)]
pub struct SubscriptionRegistry {
    entries: Vec<Option<Entry>>,
    by_key: BTreeMap<String, usize>,
    by_id: HashMap<String, Vec<Slot>>,
    by_type: HashMap<String, Vec<Slot>>,
    unkeyed: Vec<Slot>,
}

impl SubscriptionRegistry {
    pub fn insert(&mut self, sub: Subscription) -> Result<(), BrokerError> {
        let patterns = sub.compile()?;
        if sub.id.is_empty() {
            return Err(BrokerError::MalformedSubscription("missing id".into()));
        }
        if self.by_key.contains_key(&sub.id) {
            return Err(BrokerError::MalformedSubscription(format!(
                "duplicate subscription id {}",
                sub.id
            )));
        }
        let slot_index = self.entries.len();
        for (selector, sel) in sub.subject.entities.iter().enumerate() {
            let slot = Slot {
                sub: slot_index,
                selector,
            };
            match (&sel.id, &sel.entity_type) {
                (Some(id), _) => self.by_id.entry(id.clone()).or_default().push(slot),
                (None, Some(ty)) => self.by_type.entry(ty.clone()).or_default().push(slot),
                (None, None) => self.unkeyed.push(slot),
            }
        }
        self.by_key.insert(sub.id.clone(), slot_index);
        self.entries.push(Some(Entry { sub, patterns }));
        Ok(())
    }

    pub fn remove(&mut self, id: &str) -> Option<Subscription> {
        let index = self.by_key.remove(id)?;
        let entry = self.entries[index].take()?;
        let keep = |slots: &mut Vec<Slot>| slots.retain(|s| s.sub != index);
        for sel in &entry.sub.subject.entities {
            match (&sel.id, &sel.entity_type) {
                (Some(id), _) => self.by_id.get_mut(id).map(keep),
                (None, Some(ty)) => self.by_type.get_mut(ty).map(keep),
                (None, None) => Some(keep(&mut self.unkeyed)),
            };
        }
        Some(entry.sub)
    }

    pub fn get(&self, id: &str) -> Option<&Subscription> {
        self.by_key
            .get(id)
            .and_then(|&i| self.entries[i].as_ref())
            .map(|e| &e.sub)
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut Subscription> {
        let index = *self.by_key.get(id)?;
        self.entries[index].as_mut().map(|e| &mut e.sub)
    }

    /// Subscriptions in id order.
    pub fn iter(&self) -> impl Iterator<Item = &Subscription> {
        self.by_key
            .values()
            .filter_map(|&i| self.entries[i].as_ref())
            .map(|e| &e.sub)
    }

    pub fn len(&self) -> usize {
        self.by_key.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_key.is_empty()
    }

    /// Active subscriptions whose subject covers the entity and whose
    /// condition attributes are empty or intersect the changed set, ordered by
    /// subscription id.
    pub fn matching(&self, change: Change<'_>) -> Vec<&Subscription> {
        let id_slots = self.by_id.get(&change.entity.id).into_iter().flatten();
        let type_slots = self
            .by_type
            .get(&change.entity.entity_type)
            .into_iter()
            .flatten();
        let mut hits: Vec<usize> = id_slots
            .chain(type_slots)
            .chain(self.unkeyed.iter())
            .filter(|slot| {
                self.entries[slot.sub]
                    .as_ref()
                    .is_some_and(|e| e.selector_matches(slot.selector, change.entity))
            })
            .map(|slot| slot.sub)
            .collect();
        hits.sort_unstable();
        hits.dedup();
        let mut matched: Vec<&Subscription> = hits
            .into_iter()
            .filter_map(|i| self.entries[i].as_ref())
            .filter(|e| e.sub.status == SubscriptionStatus::Active)
            .filter(|e| e.condition_matches(change.changed))
            .map(|e| &e.sub)
            .collect();
        matched.sort_by(|a, b| a.id.cmp(&b.id));
        matched
    }
}
