//! Streaming occupancy aggregates and an hour-of-day occupancy forecast.

mod model;

pub use model::{occupancy_series, train, ForecastModel, Occupancy, OccupancySnapshot, SpotStatus};

use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Duration, DurationRound, Timelike, Utc};
use parking_lot::{Mutex, RwLock};
use serde_json::{json, Value};
use thiserror::Error;

use crate::broker::{BrokerError, ContextApi, EntityQuery, EntitySelector, Notification, Subscription, Upserted};
use crate::clock::{iso, SharedClock};

pub const FORECAST_ID: &str = "occupancyForecast:parking:1";
pub const FORECAST_TYPE: &str = "OccupancyForecast";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("spot `{0}` is not registered")]
    UnknownSpot(String),
    #[error("hour {0} is outside 0..=23")]
    BadHour(u32),
    #[error(transparent)]
    Broker(#[from] BrokerError),
}

impl IntoResponse for AnalyticsError {
    fn into_response(self) -> Response {
        let status = match &self {
            Self::Broker(_) => StatusCode::BAD_GATEWAY,
            _ => StatusCode::BAD_REQUEST,
        };
        (status, Json(json!({"error": self.to_string()}))).into_response()
    }
}

/// The forecast document for `for_hour`.
pub fn forecast_document(expected: f64, for_hour: DateTime<Utc>, computed_at: DateTime<Utc>) -> Value {
    json!({
        "id": FORECAST_ID,
        "type": FORECAST_TYPE,
        "expectedOccupied": expected,
        "forHour": iso(for_hour),
        "computedAt": iso(computed_at),
    })
}

pub async fn publish_forecast(
    api: &dyn ContextApi,
    expected: f64,
    for_hour: DateTime<Utc>,
    computed_at: DateTime<Utc>,
) -> Result<Upserted, AnalyticsError> {
    Ok(api.upsert(&forecast_document(expected, for_hour, computed_at)).await?)
}

/// Subscriptions feeding the worker: spot status and weather forecasts.
pub fn subscriptions(notify_url: &str) -> Vec<Subscription> {
    vec![
        Subscription::new(vec![EntitySelector::of_type("ParkingSpot")], notify_url)
            .on_change_of(&["status"])
            .notify_attrs(&["status"])
            .describe("analytics: spot status"),
        Subscription::new(vec![EntitySelector::pattern("weatherForecast:.*")], notify_url)
            .describe("analytics: weather"),
    ]
}

pub struct Analytics {
    api: Arc<dyn ContextApi>,
    clock: SharedClock,
    occupancy: Mutex<Occupancy>,
    model: RwLock<ForecastModel>,
    precipitation: Mutex<Option<f64>>,
    last_published: Mutex<Option<(DateTime<Utc>, f64)>>,
}

impl Analytics {
    pub fn new(api: Arc<dyn ContextApi>, clock: SharedClock, occupancy: Occupancy) -> Self {
        Self {
            api,
            clock,
            occupancy: Mutex::new(occupancy),
            model: RwLock::default(),
            precipitation: Mutex::default(),
            last_published: Mutex::default(),
        }
    }

    /// Loads the registered spots and their statuses from the broker.
    pub async fn from_broker(api: Arc<dyn ContextApi>, clock: SharedClock) -> Result<Self, AnalyticsError> {
        let spots = api.list_entities(&EntityQuery::of_type("ParkingSpot")).await?;
        let occupancy = Occupancy::new(spots.iter().filter_map(|d| {
            Some((
                d["id"].as_str()?.to_string(),
                d["status"].as_str().and_then(SpotStatus::parse).unwrap_or(SpotStatus::Free),
            ))
        }));
        Ok(Self::new(api, clock, occupancy))
    }

    pub fn snapshot(&self) -> OccupancySnapshot {
        self.occupancy.lock().snapshot(self.clock.now())
    }

    pub fn occupancy(&self) -> Occupancy {
        self.occupancy.lock().clone()
    }

    pub fn set_model(&self, model: ForecastModel) {
        *self.model.write() = model;
    }

    pub fn model(&self) -> ForecastModel {
        self.model.read().clone()
    }

    /// Folds a notification into the aggregates. Unknown spots are logged
    /// and skipped.
    pub fn on_notification(&self, n: &Notification) {
        for doc in &n.data {
            match doc["type"].as_str() {
                Some("ParkingSpot") => {
                    let (Some(id), Some(status)) = (doc["id"].as_str(), doc["status"].as_str().and_then(SpotStatus::parse))
                    else {
                        continue;
                    };
                    if let Err(e) = self.occupancy.lock().apply(id, status) {
                        tracing::warn!(error = %e, "spot update ignored");
                    }
                }
                Some("WeatherForecast") => {
                    if let Some(p) = doc["precipitationProbability"].as_f64() {
                        *self.precipitation.lock() = Some(p);
                    }
                }
                _ => {}
            }
        }
    }

    /// Forecast for the hour after now.
    pub fn next_hour_forecast(&self) -> (DateTime<Utc>, f64) {
        let now = self.clock.now();
        let for_hour = now.duration_trunc(Duration::hours(1)).expect("hour") + Duration::hours(1);
        let (current, total) = {
            let o = self.occupancy.lock();
            (o.occupied() as f64, o.total())
        };
        let value = self
            .model
            .read()
            .forecast(for_hour.hour(), *self.precipitation.lock(), current, total)
            .expect("hour in range");
        (for_hour, value)
    }

    /// Publishes the next-hour forecast unless it equals the last one sent.
    pub async fn refresh(&self) -> Result<Option<Upserted>, AnalyticsError> {
        let (for_hour, value) = self.next_hour_forecast();
        if *self.last_published.lock() == Some((for_hour, value)) {
            return Ok(None);
        }
        let done = publish_forecast(self.api.as_ref(), value, for_hour, self.clock.now()).await?;
        *self.last_published.lock() = Some((for_hour, value));
        Ok(Some(done))
    }
}

async fn notify(State(a): State<Arc<Analytics>>, Json(n): Json<Notification>) -> Result<StatusCode, AnalyticsError> {
    a.on_notification(&n);
    a.refresh().await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn snapshot(State(a): State<Arc<Analytics>>) -> Json<OccupancySnapshot> {
    Json(a.snapshot())
}

async fn model(State(a): State<Arc<Analytics>>) -> Json<ForecastModel> {
    Json(a.model())
}

/// `POST /notify`, `GET /occupancy` and `GET /model`.
pub fn router(analytics: Arc<Analytics>) -> Router {
    Router::new()
        .route("/notify", post(notify))
        .route("/occupancy", get(snapshot))
        .route("/model", get(model))
        .with_state(analytics)
}
