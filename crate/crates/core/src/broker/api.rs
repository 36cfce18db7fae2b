use std::time::Duration;

use async_trait::async_trait;
use reqwest::{header, StatusCode};
use serde_json::{Map, Value};

use super::{Broker, BrokerError, EntityQuery, Subscription};
use crate::model::{self, render, ModelError, Representation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Upserted {
    Created(u64),
    Updated(u64),
}

impl Upserted {
    pub fn version(self) -> u64 {
        match self {
            Self::Created(v) | Self::Updated(v) => v,
        }
    }
}

/// Northbound view of the broker as used by the other services. All
/// documents are in the `keyValues` representation.
#[async_trait]
pub trait ContextApi: Send + Sync {
    async fn create_entity(&self, doc: &Value) -> Result<u64, BrokerError>;

    async fn update_attrs(
        &self,
        id: &str,
        attrs: &Map<String, Value>,
        expected_version: Option<u64>,
    ) -> Result<u64, BrokerError>;

    /// Document and version.
    async fn get_entity(&self, id: &str) -> Result<(Value, u64), BrokerError>;

    async fn list_entities(&self, query: &EntityQuery) -> Result<Vec<Value>, BrokerError>;

    async fn create_subscription(&self, sub: &Subscription) -> Result<String, BrokerError>;

    /// Create if absent, else update the listed attributes.
    async fn upsert(&self, doc: &Value) -> Result<Upserted, BrokerError> {
        match self.create_entity(doc).await {
            Ok(v) => Ok(Upserted::Created(v)),
            Err(BrokerError::AlreadyExists(id)) => {
                let mut attrs = doc.as_object().cloned().unwrap_or_default();
                attrs.remove("id");
                attrs.remove("type");
                self.update_attrs(&id, &attrs, None).await.map(Upserted::Updated)
            }
            Err(e) => Err(e),
        }
    }
}

#[async_trait]
impl ContextApi for Broker {
    async fn create_entity(&self, doc: &Value) -> Result<u64, BrokerError> {
        Broker::create_entity(self, model::normalize(doc, Representation::KeyValues)?)
    }

    async fn update_attrs(
        &self,
        id: &str,
        attrs: &Map<String, Value>,
        expected_version: Option<u64>,
    ) -> Result<u64, BrokerError> {
        let attrs = model::normalize_attrs(attrs, Representation::KeyValues)?;
        Broker::update_attrs(self, id, attrs, expected_version)
    }

    async fn get_entity(&self, id: &str) -> Result<(Value, u64), BrokerError> {
        let v = Broker::get_entity(self, id)?;
        Ok((render(&v.entity, Representation::KeyValues), v.version))
    }

    async fn list_entities(&self, query: &EntityQuery) -> Result<Vec<Value>, BrokerError> {
        Ok(Broker::list_entities(self, query)?
            .iter()
            .map(|e| render(e, Representation::KeyValues))
            .collect())
    }

    async fn create_subscription(&self, sub: &Subscription) -> Result<String, BrokerError> {
        Broker::create_subscription(self, sub.clone())
    }
}

/// HTTP client for the broker API.
#[derive(Debug, Clone)]
pub struct BrokerClient {
    base: String,
    http: reqwest::Client,
}

impl BrokerClient {
    pub fn new(base: impl Into<String>) -> Self {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(10))
            .build()
            .expect("http client");
        Self::with_client(base, http)
    }

    pub fn with_client(base: impl Into<String>, http: reqwest::Client) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    /// Total notifications awaiting delivery, from the diagnostics endpoint.
    pub async fn pending_deliveries(&self) -> Result<usize, BrokerError> {
        let body: Value = self.send_json(self.http.get(self.url("/admin/queues"))).await?;
        Ok(body["pending"].as_u64().unwrap_or_default() as usize)
    }

    /// Polls the queue-depth endpoint until it reads zero twice in a row.
    pub async fn quiesce(&self, every: Duration) -> Result<(), BrokerError> {
        let mut settled = 0;
        while settled < 2 {
            tokio::time::sleep(every).await;
            settled = if self.pending_deliveries().await? == 0 { settled + 1 } else { 0 };
        }
        Ok(())
    }

    pub async fn write_log(&self) -> Result<Vec<super::WriteRecord>, BrokerError> {
        self.send_json(self.http.get(self.url("/admin/writes"))).await
    }

    pub async fn delete_entity(&self, id: &str) -> Result<(), BrokerError> {
        let resp = self.send(self.http.delete(self.entity_url(id, ""))).await?;
        check(resp).await.map(|_| ())
    }

    pub async fn get_subscription(&self, id: &str) -> Result<Subscription, BrokerError> {
        self.send_json(self.http.get(self.url(&format!("/v2/subscriptions/{id}"))))
            .await
    }

    fn entity_url(&self, id: &str, suffix: &str) -> String {
        let mut url = reqwest::Url::parse(&self.url("/v2/entities/")).expect("base url");
        url.path_segments_mut()
            .expect("http url")
            .pop_if_empty()
            .push(id);
        format!("{url}{suffix}")
    }

    async fn send(&self, req: reqwest::RequestBuilder) -> Result<reqwest::Response, BrokerError> {
        req.send()
            .await
            .map_err(|e| BrokerError::Unavailable(e.without_url().to_string()))
    }

    async fn send_json<T: serde::de::DeserializeOwned>(
        &self,
        req: reqwest::RequestBuilder,
    ) -> Result<T, BrokerError> {
        let resp = check(self.send(req).await?).await?;
        resp.json()
            .await
            .map_err(|e| BrokerError::Unavailable(e.without_url().to_string()))
    }
}

fn version_of(resp: &reqwest::Response) -> u64 {
    resp.headers()
        .get(header::ETAG)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim_matches('"').parse().ok())
        .unwrap_or_default()
}

async fn check(resp: reqwest::Response) -> Result<reqwest::Response, BrokerError> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp);
    }
    let body: Value = resp.json().await.unwrap_or(Value::Null);
    let description = body["description"].as_str().unwrap_or_default().to_string();
    let code = body["error"].as_str().unwrap_or_default();
    let subject = body["subject"].as_str().map(str::to_string);
    Err(match (status, code) {
        (StatusCode::NOT_FOUND, _) => BrokerError::NotFound(subject.unwrap_or(description)),
        (StatusCode::UNPROCESSABLE_ENTITY, "AlreadyExists") => {
            BrokerError::AlreadyExists(subject.unwrap_or(description))
        }
        (StatusCode::PRECONDITION_FAILED, _) => BrokerError::VersionConflict {
            expected: body["expected"].as_u64().unwrap_or_default(),
            actual: body["actual"].as_u64().unwrap_or_default(),
        },
        (_, "BadFilter") => BrokerError::BadFilter(description),
        (_, "MalformedSubscription") => BrokerError::MalformedSubscription(description),
        (_, "MalformedAttribute") => BrokerError::Model(ModelError::MalformedAttribute {
            name: String::new(),
            reason: description,
        }),
        (s, _) if s.is_client_error() => {
            BrokerError::Model(ModelError::MalformedEntity(description))
        }
        (s, _) => BrokerError::Unavailable(format!("HTTP {s}")),
    })
}

#[async_trait]
impl ContextApi for BrokerClient {
    async fn create_entity(&self, doc: &Value) -> Result<u64, BrokerError> {
        let req = self
            .http
            .post(self.url("/v2/entities?options=keyValues"))
            .json(doc);
        let resp = self.send(req).await?;
        check(resp).await.map(|resp| version_of(&resp))
    }

    async fn update_attrs(
        &self,
        id: &str,
        attrs: &Map<String, Value>,
        expected_version: Option<u64>,
    ) -> Result<u64, BrokerError> {
        let mut req = self
            .http
            .patch(self.entity_url(id, "/attrs?options=keyValues"))
            .json(attrs);
        if let Some(v) = expected_version {
            req = req.header(header::IF_MATCH, format!("\"{v}\""));
        }
        let resp = check(self.send(req).await?).await?;
        Ok(version_of(&resp))
    }

    async fn get_entity(&self, id: &str) -> Result<(Value, u64), BrokerError> {
        let req = self.http.get(self.entity_url(id, "?options=keyValues"));
        let resp = check(self.send(req).await?).await?;
        let version = version_of(&resp);
        let doc = resp
            .json()
            .await
            .map_err(|e| BrokerError::Unavailable(e.without_url().to_string()))?;
        Ok((doc, version))
    }

    async fn list_entities(&self, query: &EntityQuery) -> Result<Vec<Value>, BrokerError> {
        let mut params = vec![("options".to_string(), "keyValues".to_string())];
        if let Some(t) = &query.entity_type {
            params.push(("type".into(), t.clone()));
        }
        if let Some(p) = &query.id_pattern {
            params.push(("idPattern".into(), p.clone()));
        }
        if !query.attr_equals.is_empty() {
            let q: Vec<String> = query
                .attr_equals
                .iter()
                .map(|(k, v)| match v {
                    Value::String(s) => format!("{k}=={s}"),
                    other => format!("{k}=={other}"),
                })
                .collect();
            params.push(("q".into(), q.join(";")));
        }
        self.send_json(self.http.get(self.url("/v2/entities")).query(&params))
            .await
    }

    async fn create_subscription(&self, sub: &Subscription) -> Result<String, BrokerError> {
        let req = self.http.post(self.url("/v2/subscriptions")).json(sub);
        let resp = check(self.send(req).await?).await?;
        resp.headers()
            .get(header::LOCATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|loc| loc.rsplit('/').next())
            .map(str::to_string)
            .ok_or_else(|| BrokerError::Unavailable("subscription created without Location".into()))
    }
}
