//! Identity management (users, roles, bearer tokens) and the policy
//! enforcement proxy that fronts the broker.

mod http;
mod identity;
mod policy;
mod proxy;

pub use http::{identity_router, Identity};
pub use identity::{IdentityStore, Introspection, IssuedToken, UserSpec};
pub use policy::{Alias, Permission, Policy, PolicyConfig, ACTIONS, MATRIX_PROBES};
pub use proxy::{proxy_router, Proxy, ProxyConfig, RemoteIntrospector, TokenIntrospector};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuthError {
    #[error("invalid credentials")]
    InvalidCredentials,
    #[error("authentication required")]
    Unauthorized,
    #[error("forbidden")]
    Forbidden,
    #[error("user `{0}` already exists")]
    DuplicateUser(String),
    #[error("unknown user `{0}`")]
    UnknownUser(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("upstream unavailable")]
    UpstreamUnavailable,
}

fn default_ttl() -> i64 {
    3600
}

/// Identity and proxy settings as one JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AuthConfig {
    #[serde(default = "default_ttl")]
    pub token_ttl_seconds: i64,
    pub policy: PolicyConfig,
    /// Users created at startup, e.g. the first admin.
    #[serde(default)]
    pub users: Vec<UserSpec>,
}

impl AuthConfig {
    pub fn parking(users: Vec<UserSpec>) -> Self {
        Self {
            token_ttl_seconds: default_ttl(),
            policy: PolicyConfig::parking(),
            users,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AuthError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| AuthError::InvalidConfig(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| AuthError::InvalidConfig(e.to_string()))
    }
}
