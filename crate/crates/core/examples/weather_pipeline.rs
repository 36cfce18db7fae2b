//! Poll a weather API, reshape the document and upsert it as a
//! `WeatherForecast` entity. The clock is pinned so the entity id is stable.
//!
//! cargo run --example weather_pipeline

use std::collections::BTreeMap;
use std::sync::Arc;

use twinmesh::broker::{Broker, BrokerConfig, ContextApi};
use twinmesh::clock::ManualClock;
use twinmesh::dataflow::{weather_mapping, HttpSource, Pipeline};
use twinmesh::service::Server;
use twinmesh::sim::{sample_weather, weather_router, WeatherStub};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cooler = sample_weather();
    cooler["temp"] = 19.0.into();
    let stub = WeatherStub::new(vec![sample_weather(), cooler]);
    let api = Server::local(weather_router(stub.clone())).await?;

    let broker = Arc::new(Broker::with_http(BrokerConfig::default()));
    let clock = ManualClock::at("2020-08-03T09:12:00Z");
    let source = Arc::new(HttpSource::new(&format!("{}/weather", api.url()), BTreeMap::new()));
    let pipeline = Pipeline::new(source, weather_mapping(), broker.clone(), Arc::new(clock.clone()));

    println!("mapping: {}", serde_json::to_string(&weather_mapping())?);
    for _ in 0..2 {
        let outcome = pipeline.tick().await?;
        println!("tick -> {outcome:?}");
    }
    let (doc, version) = ContextApi::get_entity(&*broker, "weatherForecast:2020-08-03T09").await?;
    println!("version {version}: {}", serde_json::to_string_pretty(&doc)?);
    println!("polls {} upserts {} documents served {}", pipeline.polls(), pipeline.upserts(), stub.served());
    api.shutdown().await;
    Ok(())
}
