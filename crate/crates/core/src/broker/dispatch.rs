//! Asynchronous notification delivery.
//!
//! Each subscription owns a FIFO queue drained by its own task, so deliveries
//! for one subscription leave the broker in write order. Writers only enqueue;
//! the outcome of a delivery never reaches the write path.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::mpsc;

use super::subscription::DeliveryStats;
use crate::clock::{iso, SharedClock};

/// Wire body POSTed to a subscriber.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Notification {
    pub subscription_id: String,
    pub data: Vec<Value>,
}

pub const NOTIFICATION_TIME_HEADER: &str = "x-notification-time";

#[async_trait]
pub trait Transport: Send + Sync + 'static {
    /// POSTs the notification and returns the response status code.
    async fn post(&self, url: &str, notification: &Notification, sent_at: &str) -> Result<u16, String>;
}

#[derive(Debug, Clone)]
pub struct HttpTransport {
    client: reqwest::Client,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .expect("http client");
        Self { client }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(5))
    }
}

#[async_trait]
impl Transport for HttpTransport {
    async fn post(&self, url: &str, notification: &Notification, sent_at: &str) -> Result<u16, String> {
        self.client
            .post(url)
            .header(NOTIFICATION_TIME_HEADER, sent_at)
            .json(notification)
            .send()
            .await
            .map(|r| r.status().as_u16())
            .map_err(|e| e.without_url().to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Extra attempts after the first one.
    pub retries: u32,
    /// Delay before retry `k` (zero-based) is `backoff_base * 2^k`.
    pub backoff_base: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 3,
            backoff_base: Duration::from_millis(100),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeliveryOutcome {
    Delivered { attempts: u32 },
    Failed { attempts: u32, last_error: String },
}

impl DeliveryOutcome {
    pub fn is_delivered(&self) -> bool {
        matches!(self, Self::Delivered { .. })
    }
}

/// POSTs one notification, retrying non-2xx answers and connection errors.
pub async fn deliver(
    transport: &dyn Transport,
    url: &str,
    notification: &Notification,
    sent_at: &str,
    policy: RetryPolicy,
) -> DeliveryOutcome {
    let mut attempts = 0;
    loop {
        let error = match transport.post(url, notification, sent_at).await {
            Ok(status) if (200..300).contains(&status) => {
                return DeliveryOutcome::Delivered {
                    attempts: attempts + 1,
                }
            }
            Ok(status) => format!("HTTP {status}"),
            Err(e) => e,
        };
        if attempts >= policy.retries {
            return DeliveryOutcome::Failed {
                attempts: attempts + 1,
                last_error: error,
            };
        }
        tokio::time::sleep(policy.backoff_base * 2u32.saturating_pow(attempts)).await;
        attempts += 1;
    }
}

struct Job {
    notification: Notification,
    sent_at: String,
}

/// Handle used by the write path to enqueue notifications for one subscription.
pub(crate) struct Queue {
    tx: mpsc::UnboundedSender<Job>,
    depth: Arc<AtomicUsize>,
    total: Arc<AtomicUsize>,
}

impl Queue {
    pub(crate) fn push(&self, notification: Notification, sent_at: String) {
        self.depth.fetch_add(1, Ordering::SeqCst);
        self.total.fetch_add(1, Ordering::SeqCst);
        if self.tx.send(Job { notification, sent_at }).is_err() {
            self.depth.fetch_sub(1, Ordering::SeqCst);
            self.total.fetch_sub(1, Ordering::SeqCst);
        }
    }

    pub(crate) fn depth(&self) -> usize {
        self.depth.load(Ordering::SeqCst)
    }
}

pub(crate) struct Dispatcher {
    transport: Arc<dyn Transport>,
    policy: RetryPolicy,
    clock: SharedClock,
    total: Arc<AtomicUsize>,
    stats: Arc<Mutex<HashMap<String, DeliveryStats>>>,
    runtime: tokio::runtime::Handle,
}

impl Dispatcher {
    /// Must be called from within a Tokio runtime.
    pub(crate) fn new(transport: Arc<dyn Transport>, policy: RetryPolicy, clock: SharedClock) -> Self {
        Self {
            transport,
            policy,
            clock,
            total: Arc::default(),
            stats: Arc::default(),
            runtime: tokio::runtime::Handle::current(),
        }
    }

    pub(crate) fn open_queue(&self, subscription_id: &str, url: &str) -> Queue {
        let (tx, mut rx) = mpsc::unbounded_channel::<Job>();
        let depth = Arc::new(AtomicUsize::new(0));
        let queue = Queue {
            tx,
            depth: depth.clone(),
            total: self.total.clone(),
        };
        let transport = self.transport.clone();
        let policy = self.policy;
        let clock = self.clock.clone();
        let total = self.total.clone();
        let stats = self.stats.clone();
        let id = subscription_id.to_string();
        let url = url.to_string();
        stats.lock().entry(id.clone()).or_default();
        self.runtime.spawn(async move {
            while let Some(job) = rx.recv().await {
                let outcome = deliver(&*transport, &url, &job.notification, &job.sent_at, policy).await;
                {
                    let mut stats = stats.lock();
                    let entry = stats.entry(id.clone()).or_default();
                    match &outcome {
                        DeliveryOutcome::Delivered { .. } => {
                            entry.times_sent += 1;
                            entry.delivered_entities += job.notification.data.len() as u64;
                            entry.last_success = Some(iso(clock.now()));
                        }
                        DeliveryOutcome::Failed { last_error, .. } => {
                            entry.failures += 1;
                            entry.last_failure = Some(iso(clock.now()));
                            tracing::warn!(subscription = %id, error = %last_error, "notification dropped");
                        }
                    }
                }
                depth.fetch_sub(1, Ordering::SeqCst);
                total.fetch_sub(1, Ordering::SeqCst);
            }
        });
        queue
    }

    pub(crate) fn pending(&self) -> usize {
        self.total.load(Ordering::SeqCst)
    }

    pub(crate) fn stats(&self, subscription_id: &str) -> DeliveryStats {
        self.stats
            .lock()
            .get(subscription_id)
            .cloned()
            .unwrap_or_default()
    }
}
