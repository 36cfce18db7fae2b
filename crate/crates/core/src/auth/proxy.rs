//! Policy enforcement point in front of the broker.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use axum::body::{to_bytes, Body, Bytes};
use axum::extract::{Request, State};
use axum::http::{header, HeaderMap, HeaderName, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::http::bearer;
use super::{AuthError, Identity, Introspection, Policy};

const MAX_BODY: usize = 8 << 20;

#[async_trait]
pub trait TokenIntrospector: Send + Sync {
    async fn introspect(&self, token: &str) -> Result<Introspection, String>;
}

#[async_trait]
impl TokenIntrospector for Identity {
    async fn introspect(&self, token: &str) -> Result<Introspection, String> {
        Ok(self.store.introspect(token))
    }
}

/// Introspects against a remote identity service.
pub struct RemoteIntrospector {
    url: String,
    client: reqwest::Client,
}

impl RemoteIntrospector {
    pub fn new(identity_base: &str) -> Self {
        Self {
            url: format!("{}/oauth/introspect", identity_base.trim_end_matches('/')),
            client: reqwest::Client::builder()
                .timeout(Duration::from_secs(5))
                .build()
                .expect("http client"),
        }
    }
}

#[async_trait]
impl TokenIntrospector for RemoteIntrospector {
    async fn introspect(&self, token: &str) -> Result<Introspection, String> {
        let resp = self
            .client
            .post(&self.url)
            .form(&[("token", token)])
            .send()
            .await
            .map_err(|e| e.without_url().to_string())?;
        resp.json().await.map_err(|e| e.without_url().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProxyConfig {
    pub upstream: String,
    /// Where unauthenticated clients are sent to obtain a token.
    pub login_url: String,
    #[serde(default = "yes")]
    pub strip_authorization: bool,
}

fn yes() -> bool {
    true
}

pub struct Proxy {
    config: ProxyConfig,
    policy: Policy,
    tokens: Arc<dyn TokenIntrospector>,
    client: reqwest::Client,
    upstream_calls: AtomicU64,
}

const HOP_BY_HOP: [&str; 8] = [
    "connection",
    "keep-alive",
    "proxy-authenticate",
    "proxy-authorization",
    "te",
    "trailer",
    "transfer-encoding",
    "upgrade",
];

fn hop_by_hop(name: &HeaderName) -> bool {
    HOP_BY_HOP.contains(&name.as_str())
}

impl Proxy {
    pub fn new(config: ProxyConfig, policy: Policy, tokens: Arc<dyn TokenIntrospector>) -> Arc<Self> {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(10))
            .redirect(reqwest::redirect::Policy::none())
            .build()
            .expect("http client");
        Arc::new(Self {
            config: ProxyConfig {
                upstream: config.upstream.trim_end_matches('/').to_string(),
                ..config
            },
            policy,
            tokens,
            client,
            upstream_calls: AtomicU64::new(0),
        })
    }

    /// Requests forwarded upstream so far.
    pub fn upstream_calls(&self) -> u64 {
        self.upstream_calls.load(Ordering::SeqCst)
    }

    fn challenge(&self) -> Response {
        let mut resp = (
            StatusCode::UNAUTHORIZED,
            Json(json!({
                "error": "Unauthorized",
                "description": "a valid bearer token is required",
                "login": self.config.login_url,
            })),
        )
            .into_response();
        let h = resp.headers_mut();
        h.insert(header::WWW_AUTHENTICATE, HeaderValue::from_static("Bearer realm=\"twinmesh\""));
        if let Ok(v) = HeaderValue::from_str(&self.config.login_url) {
            h.insert(HeaderName::from_static("x-login-url"), v);
        }
        resp
    }

    fn authority(&self) -> &str {
        self.config
            .upstream
            .split_once("://")
            .map_or(self.config.upstream.as_str(), |(_, rest)| rest)
    }

    fn scrub(&self, bytes: Bytes) -> Bytes {
        let needle = self.authority().as_bytes();
        if needle.is_empty() || !bytes.windows(needle.len()).any(|w| w == needle) {
            return bytes;
        }
        let text = String::from_utf8_lossy(&bytes)
            .replace(&self.config.upstream, "")
            .replace(self.authority(), "");
        Bytes::from(text)
    }

    async fn forward(&self, req: Request) -> Result<Response, AuthError> {
        let (parts, body) = req.into_parts();
        let target = parts.uri.path_and_query().map_or("/", |p| p.as_str());
        let body = to_bytes(body, MAX_BODY)
            .await
            .map_err(|_| AuthError::InvalidRequest("body too large".into()))?;
        let mut headers = HeaderMap::new();
        for (name, value) in &parts.headers {
            let strip_auth = self.config.strip_authorization && name == header::AUTHORIZATION;
            if hop_by_hop(name) || name == header::HOST || name == header::CONTENT_LENGTH || strip_auth {
                continue;
            }
            headers.append(name.clone(), value.clone());
        }
        self.upstream_calls.fetch_add(1, Ordering::SeqCst);
        let resp = self
            .client
            .request(parts.method, format!("{}{}", self.config.upstream, target))
            .headers(headers)
            .body(body)
            .send()
            .await
            .map_err(|_| AuthError::UpstreamUnavailable)?;
        let status = resp.status();
        let authority = self.authority().to_string();
        let mut out_headers = HeaderMap::new();
        for (name, value) in resp.headers() {
            let leaks = value.to_str().is_ok_and(|v| v.contains(&authority));
            if hop_by_hop(name) || name == header::CONTENT_LENGTH || leaks {
                continue;
            }
            out_headers.append(name.clone(), value.clone());
        }
        let bytes = resp.bytes().await.map_err(|_| AuthError::UpstreamUnavailable)?;
        let mut out = Response::new(Body::from(self.scrub(bytes)));
        *out.status_mut() = status;
        *out.headers_mut() = out_headers;
        Ok(out)
    }

    pub async fn handle(&self, req: Request) -> Response {
        let Some(token) = bearer(req.headers()) else {
            return self.challenge();
        };
        let who = match self.tokens.introspect(token).await {
            Ok(who) if who.active => who,
            Ok(_) => return self.challenge(),
            Err(e) => {
                tracing::warn!(error = %e, "introspection failed");
                return (
                    StatusCode::SERVICE_UNAVAILABLE,
                    Json(json!({"error": "IdentityUnavailable"})),
                )
                    .into_response();
            }
        };
        let target = req.uri().path_and_query().map_or("/", |p| p.as_str()).to_string();
        if !self.policy.check(who.roles.iter().map(String::as_str), req.method().as_str(), &target) {
            tracing::info!(method = %req.method(), path = req.uri().path(), "denied");
            return AuthError::Forbidden.into_response();
        }
        match self.forward(req).await {
            Ok(resp) => resp,
            Err(e) => e.into_response(),
        }
    }
}

async fn handle(State(proxy): State<Arc<Proxy>>, req: Request) -> Response {
    proxy.handle(req).await
}

/// Every path and method goes through [`Proxy::handle`].
pub fn proxy_router(proxy: Arc<Proxy>) -> Router {
    Router::new().fallback(handle).with_state(proxy)
}
