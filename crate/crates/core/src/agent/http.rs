use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use super::{Agent, AgentError, AgentWrite, CommandReport, DeviceRegistration};
use crate::broker::{BrokerError, Notification};

impl IntoResponse for AgentError {
    fn into_response(self) -> Response {
        let status = match &self {
            Self::UnknownDevice(_) => StatusCode::NOT_FOUND,
            Self::DuplicateDevice(_) => StatusCode::CONFLICT,
            Self::MalformedPayload(_)
            | Self::MalformedCommand(_)
            | Self::InvalidRegistration(_)
            | Self::Template(_) => StatusCode::BAD_REQUEST,
            Self::Broker(BrokerError::Unavailable(_)) => StatusCode::SERVICE_UNAVAILABLE,
            Self::Broker(_) | Self::Contention { .. } | Self::NotNumeric { .. } => StatusCode::BAD_GATEWAY,
            Self::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({"error": self.to_string()}))).into_response()
    }
}

#[derive(Debug, Deserialize)]
struct MeasureParams {
    k: String,
}

async fn measure(
    State(agent): State<Arc<Agent>>,
    Query(params): Query<MeasureParams>,
    body: String,
) -> Result<Json<Vec<AgentWrite>>, AgentError> {
    agent.handle_measure(&params.k, &body).await.map(Json)
}

/// Answers only after every command has been handed to its actuator, so a
/// drained broker queue means the commands are out.
async fn notify(State(agent): State<Arc<Agent>>, Json(n): Json<Notification>) -> Json<CommandReport> {
    Json(agent.handle_notification(&n).await)
}

async fn list_devices(State(agent): State<Arc<Agent>>) -> Json<Vec<DeviceRegistration>> {
    Json(agent.devices())
}

async fn register(
    State(agent): State<Arc<Agent>>,
    Json(reg): Json<DeviceRegistration>,
) -> Result<StatusCode, AgentError> {
    agent.register_device(reg)?;
    Ok(StatusCode::CREATED)
}

/// Southbound measures on `/iot/d?k=<device>`, notifications on `/notify`
/// and provisioning on `/iot/devices`.
pub fn router(agent: Arc<Agent>) -> Router {
    Router::new()
        .route("/iot/d", post(measure))
        .route("/notify", post(notify))
        .route("/iot/devices", get(list_devices).post(register))
        .with_state(agent)
}
