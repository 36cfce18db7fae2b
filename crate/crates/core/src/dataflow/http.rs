use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};

use super::{DataflowError, HistoricalRecord, HistoryStore};
use crate::broker::Notification;
use crate::clock::parse_iso;

impl IntoResponse for DataflowError {
    fn into_response(self) -> Response {
        let status = match &self {
            Self::BadRange | Self::InvalidSpec(_) => StatusCode::BAD_REQUEST,
            Self::StorageFull { .. } => StatusCode::INSUFFICIENT_STORAGE,
            Self::Broker(_) => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({"error": self.to_string()}))).into_response()
    }
}

/// Notification sink in front of a [`HistoryStore`].
pub struct Listener {
    store: Arc<HistoryStore>,
    fail_next: AtomicUsize,
}

impl Listener {
    pub fn new(store: Arc<HistoryStore>) -> Arc<Self> {
        Arc::new(Self {
            store,
            fail_next: AtomicUsize::new(0),
        })
    }

    pub fn store(&self) -> &Arc<HistoryStore> {
        &self.store
    }

    /// Fault injection: answer the next `n` notifications with 500 and
    /// store nothing.
    pub fn fail_next(&self, n: usize) {
        self.fail_next.store(n, Ordering::SeqCst);
    }

    fn take_fault(&self) -> bool {
        self.fail_next
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok()
    }
}

async fn notify(State(l): State<Arc<Listener>>, Json(n): Json<Notification>) -> Result<Json<Value>, DataflowError> {
    if l.take_fault() {
        return Err(DataflowError::Io("injected fault".into()));
    }
    let seqs = l.store.append_notification(&n)?;
    Ok(Json(json!({"appended": seqs})))
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct HistoryParams {
    entity_id: String,
    from: Option<String>,
    to: Option<String>,
}

async fn history(
    State(l): State<Arc<Listener>>,
    Query(p): Query<HistoryParams>,
) -> Result<Json<Vec<HistoricalRecord>>, DataflowError> {
    let bound = |s: &Option<String>, default| match s {
        None => Ok(default),
        Some(s) => parse_iso(s).ok_or(DataflowError::BadRange),
    };
    let from = bound(&p.from, chrono::DateTime::<chrono::Utc>::MIN_UTC)?;
    let to = bound(&p.to, chrono::DateTime::<chrono::Utc>::MAX_UTC)?;
    l.store.query(&p.entity_id, from, to).map(Json)
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct ReplayParams {
    up_to_seq: Option<u64>,
}

async fn replay(
    State(l): State<Arc<Listener>>,
    Query(p): Query<ReplayParams>,
) -> Result<Json<BTreeMap<String, Value>>, DataflowError> {
    l.store.replay(p.up_to_seq).map(Json)
}

/// `POST /notify` appends; `GET /history` and `GET /replay` read back.
pub fn router(listener: Arc<Listener>) -> Router {
    Router::new()
        .route("/notify", post(notify))
        .route("/history", get(history))
        .route("/replay", get(replay))
        .with_state(listener)
}
