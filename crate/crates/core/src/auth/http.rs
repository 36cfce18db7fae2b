use std::collections::BTreeSet;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, post};
use axum::{Form, Json, Router};
use chrono::Duration;
use serde::Deserialize;
use serde_json::json;

use super::{AuthConfig, AuthError, IdentityStore, Introspection, IssuedToken, Policy};
use crate::clock::SharedClock;

impl IntoResponse for AuthError {
    fn into_response(self) -> Response {
        let (status, code) = match &self {
            Self::InvalidCredentials => (StatusCode::BAD_REQUEST, "invalid_grant"),
            Self::Unauthorized => (StatusCode::UNAUTHORIZED, "Unauthorized"),
            Self::Forbidden => (StatusCode::FORBIDDEN, "Forbidden"),
            Self::DuplicateUser(_) => (StatusCode::CONFLICT, "DuplicateUser"),
            Self::UnknownUser(_) => (StatusCode::NOT_FOUND, "UnknownUser"),
            Self::InvalidRequest(_) => (StatusCode::BAD_REQUEST, "invalid_request"),
            Self::InvalidConfig(_) => (StatusCode::INTERNAL_SERVER_ERROR, "InvalidConfig"),
            Self::UpstreamUnavailable => (StatusCode::BAD_GATEWAY, "UpstreamUnavailable"),
        };
        let mut resp = (status, Json(json!({"error": code, "description": self.to_string()}))).into_response();
        if status == StatusCode::UNAUTHORIZED {
            resp.headers_mut().insert(
                header::WWW_AUTHENTICATE,
                header::HeaderValue::from_static("Bearer realm=\"twinmesh\""),
            );
        }
        resp
    }
}

/// Identity store plus the policy guarding its management endpoints.
pub struct Identity {
    pub store: IdentityStore,
    pub policy: Policy,
}

impl Identity {
    pub fn new(config: &AuthConfig, clock: SharedClock) -> Result<Arc<Self>, AuthError> {
        let store = IdentityStore::new(Duration::seconds(config.token_ttl_seconds), clock);
        for u in &config.users {
            store.create_user(&u.username, &u.password, u.roles.clone())?;
        }
        Ok(Arc::new(Self {
            store,
            policy: Policy::compile(&config.policy)?,
        }))
    }

    /// Introspects the bearer token and checks `method` on `target`.
    pub fn authorize(&self, headers: &HeaderMap, method: &Method, target: &str) -> Result<Introspection, AuthError> {
        let token = bearer(headers).ok_or(AuthError::Unauthorized)?;
        let who = self.store.introspect(token);
        if !who.active {
            return Err(AuthError::Unauthorized);
        }
        if !self.policy.check(who.roles.iter().map(String::as_str), method.as_str(), target) {
            return Err(AuthError::Forbidden);
        }
        Ok(who)
    }
}

pub(crate) fn bearer(headers: &HeaderMap) -> Option<&str> {
    let value = headers.get(header::AUTHORIZATION)?.to_str().ok()?;
    let (scheme, token) = value.split_once(' ')?;
    scheme.eq_ignore_ascii_case("bearer").then(|| token.trim()).filter(|t| !t.is_empty())
}

#[derive(Debug, Deserialize)]
struct TokenForm {
    grant_type: String,
    username: Option<String>,
    password: Option<String>,
}

async fn token(State(id): State<Arc<Identity>>, Form(f): Form<TokenForm>) -> Result<Json<IssuedToken>, AuthError> {
    if f.grant_type != "password" {
        return Err(AuthError::InvalidRequest("unsupported grant_type".into()));
    }
    let (Some(user), Some(pass)) = (f.username, f.password) else {
        return Err(AuthError::InvalidRequest("username and password are required".into()));
    };
    id.store.issue_token(&user, &pass).map(Json)
}

#[derive(Debug, Deserialize)]
struct IntrospectForm {
    token: String,
}

async fn introspect(State(id): State<Arc<Identity>>, Form(f): Form<IntrospectForm>) -> Json<Introspection> {
    Json(id.store.introspect(&f.token))
}

#[derive(Debug, Deserialize)]
struct NewUser {
    username: String,
    password: String,
    #[serde(default)]
    roles: BTreeSet<String>,
}

async fn create_user(
    State(id): State<Arc<Identity>>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    body: axum::body::Bytes,
) -> Result<StatusCode, AuthError> {
    id.authorize(&headers, &method, uri.path())?;
    let u: NewUser = serde_json::from_slice(&body).map_err(|e| AuthError::InvalidRequest(e.to_string()))?;
    id.store.create_user(&u.username, &u.password, u.roles)?;
    Ok(StatusCode::CREATED)
}

async fn delete_user(
    State(id): State<Arc<Identity>>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    Path(name): Path<String>,
) -> Result<StatusCode, AuthError> {
    id.authorize(&headers, &method, uri.path())?;
    id.store.delete_user(&name)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn assign_role(
    State(id): State<Arc<Identity>>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    Path((name, role)): Path<(String, String)>,
) -> Result<StatusCode, AuthError> {
    id.authorize(&headers, &method, uri.path())?;
    id.store.assign_role(&name, &role)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn revoke_role(
    State(id): State<Arc<Identity>>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    Path((name, role)): Path<(String, String)>,
) -> Result<StatusCode, AuthError> {
    id.authorize(&headers, &method, uri.path())?;
    id.store.revoke_role(&name, &role)?;
    Ok(StatusCode::NO_CONTENT)
}

/// Token endpoint, introspection and user management.
pub fn identity_router(identity: Arc<Identity>) -> Router {
    Router::new()
        .route("/oauth/token", post(token))
        .route("/oauth/introspect", post(introspect))
        .route("/users", post(create_user))
        .route("/users/{name}", delete(delete_user))
        .route("/users/{name}/roles/{role}", post(assign_role).delete(revoke_role))
        .with_state(identity)
}
