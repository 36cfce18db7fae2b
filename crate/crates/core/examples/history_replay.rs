//! The history store records every notification; folding a prefix of it
//! rebuilds the broker state as of that point.
//!
//! cargo run --example history_replay

use twinmesh::broker::{ContextApi, EntityQuery};
use twinmesh::sim::{plan, ScenarioConfig, Stack, StackOptions};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let config = ScenarioConfig {
        total_spots: 60,
        duration_ticks: 30,
        seed: 7,
        ..ScenarioConfig::default()
    };
    let truth = plan(&config)?;
    let stack = Stack::start(StackOptions::new(config.total_spots, dir.path())).await?;
    stack.run(&truth).await?;

    let store = stack.listener.store();
    println!("{} records in {}", store.len(), store.path().display());
    let provisioned = config.total_spots as u64 + 1;
    for up_to in [provisioned, provisioned + 3, store.len() as u64] {
        let state = store.replay(Some(up_to))?;
        let available = &state["parking:1"]["availableSpotNumber"];
        println!("up to seq {up_to:4}: {} entities, availableSpotNumber {available}", state.len());
    }

    let live = ContextApi::list_entities(&*stack.broker, &EntityQuery::default()).await?;
    let replayed = store.replay(None)?;
    let same = live.iter().all(|d| replayed.get(d["id"].as_str().unwrap()) == Some(d));
    println!("full replay equals broker state: {same}");

    let spot = truth.event_log[0].spot;
    for r in store.query(&format!("spot:{spot}"), chrono::DateTime::<chrono::Utc>::MIN_UTC, chrono::Utc::now())? {
        println!("seq {} at {}: {}", r.seq, r.received_at, serde_json::to_string(&r.attrs)?);
    }
    stack.shutdown().await;
    Ok(())
}
