//! Latest-state context broker with publish-subscribe.

mod api;
mod dispatch;
mod http;
mod store;
mod subscription;

pub use api::{BrokerClient, ContextApi, Upserted};
pub use dispatch::{
    deliver, DeliveryOutcome, HttpTransport, Notification, RetryPolicy, Transport,
    NOTIFICATION_TIME_HEADER,
};
pub use http::router;
pub use store::{Broker, BrokerConfig, EntityQuery, Versioned, WriteOp, WriteRecord};
pub use subscription::{
    Change, Condition, DeliveryStats, EntitySelector, HttpEndpoint, NotificationSpec, Subject,
    Subscription, SubscriptionRegistry, SubscriptionStatus,
};

use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BrokerError {
    #[error("entity `{0}` not found")]
    NotFound(String),
    #[error("entity `{0}` already exists")]
    AlreadyExists(String),
    #[error("version conflict: expected {expected}, stored {actual}")]
    VersionConflict { expected: u64, actual: u64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("bad filter: {0}")]
    BadFilter(String),
    #[error("malformed subscription: {0}")]
    MalformedSubscription(String),
    #[error("broker unavailable: {0}")]
    Unavailable(String),
    #[error("storage: {0}")]
    Storage(String),
}

impl BrokerError {
    /// Stable error code used in HTTP error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            Self::NotFound(_) => "NotFound",
            Self::AlreadyExists(_) => "AlreadyExists",
            Self::VersionConflict { .. } => "VersionConflict",
            Self::Model(ModelError::MalformedAttribute { .. }) => "MalformedAttribute",
            Self::Model(_) => "MalformedEntity",
            Self::BadFilter(_) => "BadFilter",
            Self::MalformedSubscription(_) => "MalformedSubscription",
            Self::Unavailable(_) => "Unavailable",
            Self::Storage(_) => "Storage",
        }
    }
}
