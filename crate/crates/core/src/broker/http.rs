use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};

use super::{Broker, BrokerError, EntityQuery, Subscription};
use crate::model::{self, render, Representation};

impl IntoResponse for BrokerError {
    fn into_response(self) -> Response {
        let status = match &self {
            Self::NotFound(_) => StatusCode::NOT_FOUND,
            Self::AlreadyExists(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Self::VersionConflict { .. } => StatusCode::PRECONDITION_FAILED,
            Self::Model(_) | Self::BadFilter(_) | Self::MalformedSubscription(_) => {
                StatusCode::BAD_REQUEST
            }
            Self::Unavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            Self::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let mut body = json!({"error": self.code(), "description": self.to_string()});
        match &self {
            Self::VersionConflict { expected, actual } => {
                body["expected"] = json!(expected);
                body["actual"] = json!(actual);
            }
            Self::NotFound(id) | Self::AlreadyExists(id) => body["subject"] = json!(id),
            _ => {}
        }
        (status, Json(body)).into_response()
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Params {
    options: Option<String>,
    #[serde(rename = "type")]
    entity_type: Option<String>,
    id_pattern: Option<String>,
    q: Option<String>,
}

impl Params {
    fn has_option(&self, name: &str) -> bool {
        self.options
            .as_deref()
            .is_some_and(|o| o.split(',').any(|x| x == name))
    }

    fn representation(&self) -> Representation {
        if self.has_option("keyValues") {
            Representation::KeyValues
        } else {
            Representation::Normalized
        }
    }
}

fn etag(version: u64) -> [(header::HeaderName, HeaderValue); 1] {
    [(
        header::ETAG,
        HeaderValue::from_str(&format!("\"{version}\"")).expect("ascii"),
    )]
}

fn if_match(headers: &HeaderMap) -> Result<Option<u64>, BrokerError> {
    let Some(raw) = headers.get(header::IF_MATCH) else {
        return Ok(None);
    };
    let text = raw.to_str().unwrap_or_default().trim();
    text.trim_start_matches("W/")
        .trim_matches('"')
        .parse()
        .map(Some)
        .map_err(|_| BrokerError::BadFilter(format!("If-Match `{text}` is not a version")))
}

fn body_object(body: &Value) -> Result<&serde_json::Map<String, Value>, BrokerError> {
    body.as_object().ok_or_else(|| {
        BrokerError::Model(model::ModelError::MalformedEntity(
            "body must be a JSON object".into(),
        ))
    })
}

async fn create_entity(
    State(broker): State<Arc<Broker>>,
    Query(params): Query<Params>,
    Json(body): Json<Value>,
) -> Result<Response, BrokerError> {
    let entity = model::normalize(&body, params.representation())?;
    let location = format!("/v2/entities/{}", entity.id);
    let id = entity.id.clone();
    let attrs = entity.attributes.clone();
    let (status, version) = match broker.create_entity(entity) {
        Ok(v) => (StatusCode::CREATED, v),
        Err(BrokerError::AlreadyExists(_)) if params.has_option("upsert") => {
            (StatusCode::NO_CONTENT, broker.update_attrs(&id, attrs, None)?)
        }
        Err(e) => return Err(e),
    };
    let mut response = (status, etag(version)).into_response();
    if status == StatusCode::CREATED {
        response.headers_mut().insert(
            header::LOCATION,
            HeaderValue::from_str(&location).map_err(|_| {
                BrokerError::Model(model::ModelError::MalformedEntity("id not header-safe".into()))
            })?,
        );
    }
    Ok(response)
}

async fn list_entities(
    State(broker): State<Arc<Broker>>,
    Query(params): Query<Params>,
) -> Result<Json<Vec<Value>>, BrokerError> {
    let mut query = EntityQuery {
        entity_type: params.entity_type.clone(),
        id_pattern: params.id_pattern.clone(),
        ..EntityQuery::default()
    };
    if let Some(q) = &params.q {
        query = query.parse_q(q)?;
    }
    let repr = params.representation();
    let entities = broker.list_entities(&query)?;
    Ok(Json(entities.iter().map(|e| render(e, repr)).collect()))
}

async fn get_entity(
    State(broker): State<Arc<Broker>>,
    Path(id): Path<String>,
    Query(params): Query<Params>,
) -> Result<Response, BrokerError> {
    let stored = broker.get_entity(&id)?;
    let doc = render(&stored.entity, params.representation());
    Ok((etag(stored.version), Json(doc)).into_response())
}

async fn update_attrs(
    State(broker): State<Arc<Broker>>,
    Path(id): Path<String>,
    Query(params): Query<Params>,
    headers: HeaderMap,
    Json(body): Json<Value>,
) -> Result<Response, BrokerError> {
    let expected = if_match(&headers)?;
    let attrs = model::normalize_attrs(body_object(&body)?, params.representation())?;
    let version = broker.update_attrs(&id, attrs, expected)?;
    Ok((StatusCode::NO_CONTENT, etag(version)).into_response())
}

async fn delete_entity(
    State(broker): State<Arc<Broker>>,
    Path(id): Path<String>,
) -> Result<StatusCode, BrokerError> {
    broker.delete_entity(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn create_subscription(
    State(broker): State<Arc<Broker>>,
    Json(body): Json<Value>,
) -> Result<Response, BrokerError> {
    let sub: Subscription = serde_json::from_value(body)
        .map_err(|e| BrokerError::MalformedSubscription(e.to_string()))?;
    let id = broker.create_subscription(sub)?;
    let location = format!("/v2/subscriptions/{id}");
    Ok((
        StatusCode::CREATED,
        [(header::LOCATION, HeaderValue::from_str(&location).expect("hex id"))],
    )
        .into_response())
}

async fn list_subscriptions(State(broker): State<Arc<Broker>>) -> Json<Vec<Subscription>> {
    Json(broker.list_subscriptions())
}

async fn get_subscription(
    State(broker): State<Arc<Broker>>,
    Path(id): Path<String>,
) -> Result<Json<Subscription>, BrokerError> {
    broker.get_subscription(&id).map(Json)
}

async fn delete_subscription(
    State(broker): State<Arc<Broker>>,
    Path(id): Path<String>,
) -> Result<StatusCode, BrokerError> {
    broker.delete_subscription(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

/// Diagnostics: notifications still waiting for delivery.
async fn queues(State(broker): State<Arc<Broker>>) -> Json<Value> {
    Json(json!({
        "pending": broker.pending_deliveries(),
        "subscriptions": broker.queue_depths(),
    }))
}

async fn writes(State(broker): State<Arc<Broker>>) -> Json<Value> {
    Json(json!(broker.write_log()))
}

/// The broker's HTTP API.
pub fn router(broker: Arc<Broker>) -> Router {
    Router::new()
        .route("/v2/entities", get(list_entities).post(create_entity))
        .route("/v2/entities/{id}", get(get_entity).delete(delete_entity))
        .route("/v2/entities/{id}/attrs", patch(update_attrs))
        .route(
            "/v2/subscriptions",
            get(list_subscriptions).post(create_subscription),
        )
        .route(
            "/v2/subscriptions/{id}",
            get(get_subscription).delete(delete_subscription),
        )
        .route("/admin/queues", get(queues))
        .route("/admin/writes", get(writes))
        .with_state(broker)
}
