//! The parking digital twin: scenario planning, device stubs, a wired-up
//! stack and the conformance check.

mod scenario;
mod stack;
mod stubs;
mod verify;

pub use scenario::{plan, EventKind, GroundTruth, ScenarioConfig, SimEvent, FIRST_PLATE};
pub use stack::{provisioning, run_scenario, SimReport, Stack, StackOptions, StackUrls, GATE};
pub use stubs::{bulb_router, sample_weather, weather_router, BulbLogEntry, BulbStub, WeatherStub};
pub use verify::{verify, Assertion, ConformanceReport, AVAILABILITY, BULBS, OCCUPANCY, REPLAY};

use thiserror::Error;

use crate::agent::AgentError;
use crate::auth::AuthError;
use crate::broker::BrokerError;
use crate::dataflow::DataflowError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error("measure `{payload}` rejected: {reason}")]
    Rejected { payload: String, reason: String },
    #[error(transparent)]
    Broker(#[from] BrokerError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Dataflow(#[from] DataflowError),
    #[error(transparent)]
    Auth(#[from] AuthError),
}

impl From<std::io::Error> for SimError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}
