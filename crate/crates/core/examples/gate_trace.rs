//! One vehicle enters the car park: the gate sensor's measure becomes three
//! context writes and one bulb command.
//!
//! cargo run --example gate_trace

use std::sync::Arc;

use serde_json::json;
use twinmesh::agent::{parking, Agent, AgentConfig, CommandLog};
use twinmesh::broker::{Broker, BrokerConfig, ContextApi, Notification};
use twinmesh::sim::provisioning;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let broker = Arc::new(Broker::with_http(BrokerConfig::default()));
    for doc in provisioning(1450) {
        ContextApi::upsert(&*broker, &doc).await?;
    }

    let bulbs = Arc::new(CommandLog::default());
    let agent = Agent::new(broker.clone(), bulbs.clone(), AgentConfig::default());
    agent.register_device(parking::sensor("gate"))?;
    agent.register_device(parking::bulb(51, "http://bulbs.invalid/bulbs"))?;

    let payload = "id|123456|t|car|p|51";
    println!("measure  {payload}");
    for w in agent.handle_measure("gate", payload).await? {
        let (doc, _) = ContextApi::get_entity(&*broker, &w.entity_id).await?;
        println!("{:?} v{} {}", w.kind, w.version, serde_json::to_string_pretty(&doc)?);
    }

    // The broker would deliver this to the agent's /notify endpoint.
    let (spot, _) = ContextApi::get_entity(&*broker, "spot:51").await?;
    let n = Notification {
        subscription_id: "actuators".into(),
        data: vec![json!({"id": spot["id"], "type": spot["type"], "status": spot["status"]})],
    };
    agent.handle_notification(&n).await;
    for (endpoint, wire) in bulbs.entries() {
        println!("command  {wire}  -> {endpoint}");
    }
    Ok(())
}
