//! Stand-ins for the external weather API and the smart bulbs.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::Mutex;
use serde::Serialize;
use serde_json::{json, Value};

use crate::agent::{parking, parse_command};

/// The weather API document used throughout the parking scenario.
pub fn sample_weather() -> Value {
    json!({"temp": 27.50, "tempmin": 27.08, "tempmax": 27.60, "precipitation": 0.56, "wind": {"speed": 1.5}})
}

/// Serves scripted documents in order; the last one repeats.
pub struct WeatherStub {
    script: Vec<Value>,
    served: Mutex<usize>,
}

impl WeatherStub {
    /// An empty script serves the sample document.
    pub fn new(script: Vec<Value>) -> Arc<Self> {
        let script = if script.is_empty() { vec![sample_weather()] } else { script };
        Arc::new(Self {
            script,
            served: Mutex::new(0),
        })
    }

    pub fn next_document(&self) -> Value {
        let mut n = self.served.lock();
        let doc = self.script[(*n).min(self.script.len() - 1)].clone();
        *n += 1;
        doc
    }

    pub fn served(&self) -> usize {
        *self.served.lock()
    }
}

async fn weather(State(stub): State<Arc<WeatherStub>>) -> Json<Value> {
    Json(stub.next_document())
}

/// `GET /weather`.
pub fn weather_router(stub: Arc<WeatherStub>) -> Router {
    Router::new().route("/weather", get(weather)).with_state(stub)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BulbLogEntry {
    pub body: String,
    pub accepted: bool,
}

/// Records commands and keeps the last color per bulb.
#[derive(Default)]
pub struct BulbStub {
    state: Mutex<BTreeMap<String, String>>,
    log: Mutex<Vec<BulbLogEntry>>,
}

impl BulbStub {
    /// Bulbs for spots `1..=total`, all showing the free color.
    pub fn new(total: u32) -> Arc<Self> {
        let green = parking::bulb_color("free").expect("free has a color");
        Arc::new(Self {
            state: Mutex::new((1..=total).map(|s| (parking::bulb_device_id(s), green.to_string())).collect()),
            log: Mutex::default(),
        })
    }

    /// Applies one command body; malformed bodies are logged only.
    pub fn receive(&self, body: &str) -> bool {
        let accepted = match parse_command(body) {
            Ok(cmd) if cmd.command == "light" && ["red", "yellow", "green"].contains(&cmd.value.as_str()) => {
                self.state.lock().insert(cmd.device_id, cmd.value);
                true
            }
            _ => false,
        };
        self.log.lock().push(BulbLogEntry {
            body: body.to_string(),
            accepted,
        });
        accepted
    }

    pub fn state(&self) -> BTreeMap<String, String> {
        self.state.lock().clone()
    }

    pub fn color(&self, device: &str) -> Option<String> {
        self.state.lock().get(device).cloned()
    }

    pub fn log(&self) -> Vec<BulbLogEntry> {
        self.log.lock().clone()
    }

    /// Accepted command bodies in arrival order.
    pub fn commands(&self) -> Vec<String> {
        self.log.lock().iter().filter(|e| e.accepted).map(|e| e.body.clone()).collect()
    }
}

async fn command(State(stub): State<Arc<BulbStub>>, body: String) -> StatusCode {
    if stub.receive(&body) {
        StatusCode::OK
    } else {
        StatusCode::BAD_REQUEST
    }
}

async fn bulb_state(State(stub): State<Arc<BulbStub>>) -> Json<BTreeMap<String, String>> {
    Json(stub.state())
}

/// `POST /bulbs` takes commands; `GET /bulbs` shows the colors.
pub fn bulb_router(stub: Arc<BulbStub>) -> Router {
    Router::new()
        .route("/bulbs", post(command).get(bulb_state))
        .with_state(stub)
}
