//! Dataflow: periodic HTTP sources mapped into context entities, and the
//! notification-fed historical store.

mod history;
mod http;
mod mapping;
mod pipeline;

pub use history::{fold, HistoricalRecord, HistoryLimits, HistoryStore, HISTORY_FILE};
pub use http::{router, Listener};
pub use mapping::{render, weather_mapping, Cast, FieldMap, MappingSpec};
pub use pipeline::{load_pipelines, DocumentSource, HttpSource, Pipeline, PipelineSpec, SinkSpec, SourceSpec};

use thiserror::Error;

use crate::broker::{BrokerError, EntitySelector, Subscription};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataflowError {
    #[error("source path `{0}` not found")]
    MissingSourcePath(String),
    #[error("template {0}")]
    Template(String),
    #[error("cannot cast `{path}`: {reason}")]
    BadCast { path: String, reason: String },
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("range start is after its end")]
    BadRange,
    #[error("corrupt history at seq {seq}: {reason}")]
    CorruptRecord { seq: u64, reason: String },
    #[error("history is full ({max_records} records)")]
    StorageFull { max_records: usize },
    #[error(transparent)]
    Broker(#[from] BrokerError),
    #[error("io: {0}")]
    Io(String),
}

/// Every change of every entity, in `keyValues`, to `notify_url`.
pub fn history_subscription(notify_url: &str) -> Subscription {
    Subscription::new(vec![EntitySelector::pattern(".*")], notify_url).describe("history")
}
