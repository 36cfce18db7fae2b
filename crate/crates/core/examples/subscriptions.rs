//! Subscriptions against the broker: a condition on one attribute, an id
//! pattern with throttling, and the resulting deliveries at a local
//! receiver.
//!
//! cargo run --example subscriptions

use std::sync::Arc;

use axum::extract::State;
use axum::routing::post;
use axum::{Json, Router};
use parking_lot::Mutex;
use serde_json::json;
use twinmesh::broker::{Broker, BrokerConfig, ContextApi, EntitySelector, Notification, Subscription};
use twinmesh::service::Server;

type Inbox = Arc<Mutex<Vec<Notification>>>;

async fn receive(State(inbox): State<Inbox>, Json(n): Json<Notification>) {
    inbox.lock().push(n);
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let inbox = Inbox::default();
    let receiver = Server::local(Router::new().route("/notify", post(receive)).with_state(inbox.clone())).await?;
    let url = format!("{}/notify", receiver.url());

    let broker = Arc::new(Broker::with_http(BrokerConfig::default()));
    let status = broker.create_subscription(
        Subscription::new(vec![EntitySelector::of_type("ParkingSpot")], &url)
            .on_change_of(&["status"])
            .notify_attrs(&["status"])
            .describe("spot status"),
    )?;
    let busy = broker.create_subscription(
        Subscription::new(vec![EntitySelector::pattern("spot:5.*")], &url)
            .throttled(1.0)
            .describe("spots 5x, at most once a second"),
    )?;
    println!("subscriptions {status} and {busy}");

    let api: &dyn ContextApi = &*broker;
    api.create_entity(&json!({"id": "spot:51", "type": "ParkingSpot", "status": "free", "name": "51"})).await?;
    for status in ["occupied", "free", "occupied"] {
        let attrs = json!({"status": status});
        api.update_attrs("spot:51", attrs.as_object().unwrap(), None).await?;
    }
    // Changes `name` only: the status subscription stays quiet.
    api.update_attrs("spot:51", json!({"name": "fifty-one"}).as_object().unwrap(), None).await?;
    broker.quiesce(std::time::Duration::from_millis(10)).await;

    for n in inbox.lock().iter() {
        println!("{} <- {}", n.subscription_id, serde_json::to_string(&n.data)?);
    }
    for s in broker.list_subscriptions() {
        println!("{}: sent {} failures {}", s.description.unwrap_or_default(), s.notification.stats.times_sent, s.notification.stats.failures);
    }
    receiver.shutdown().await;
    Ok(())
}
