use std::sync::Arc;

use serde_json::{json, Value};
use twinmesh::agent::{parking, Agent, AgentConfig, CommandLog};
use twinmesh::analytics::FORECAST_ID;
use twinmesh::broker::{BrokerClient, ContextApi};
use twinmesh::sim::{plan, ScenarioConfig, Stack, StackOptions};

fn small(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        seed,
        total_spots: 80,
        duration_ticks: 60,
        ..ScenarioConfig::default()
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn two_agents_share_one_counter() {
    let dir = tempfile::tempdir().unwrap();
    let stack = Stack::start(StackOptions::new(200, dir.path())).await.unwrap();
    // A second agent process writing to the same broker: only CAS keeps the
    // counter exact across the two.
    let other = Arc::new(Agent::new(
        Arc::new(BrokerClient::new(&stack.urls.broker)),
        Arc::new(CommandLog::default()),
        AgentConfig::default(),
    ));
    for k in 0..40 {
        stack.agent.register_device(parking::sensor(&format!("a{k}"))).unwrap();
        other.register_device(parking::sensor(&format!("b{k}"))).unwrap();
    }
    let mut tasks = tokio::task::JoinSet::new();
    for k in 0..40u32 {
        let (a, b) = (stack.agent.clone(), other.clone());
        tasks.spawn(async move { a.handle_measure(&format!("a{k}"), &format!("id|{}|t|car|p|{}", 800 + k, k + 1)).await });
        tasks.spawn(async move { b.handle_measure(&format!("b{k}"), &format!("id|{}|t|car|p|{}", 900 + k, k + 101)).await });
    }
    while let Some(r) = tasks.join_next().await {
        r.unwrap().unwrap();
    }
    stack.settle().await;
    let (parking, _) = ContextApi::get_entity(&*stack.broker, "parking:1").await.unwrap();
    assert_eq!(parking["availableSpotNumber"], 200 - 80);
    stack.shutdown().await;
}

#[tokio::test]
async fn departure_frees_the_spot_and_turns_the_bulb_green() {
    let dir = tempfile::tempdir().unwrap();
    let stack = Stack::start(StackOptions::new(60, dir.path())).await.unwrap();
    stack.send_measure("id|123456|t|car|p|51").await.unwrap();
    stack.settle().await;
    assert_eq!(stack.bulbs.color("bulb:0051").as_deref(), Some("yellow"));
    stack.send_measure("id|123456|t|car|d|51").await.unwrap();
    stack.settle().await;
    let (spot, _) = ContextApi::get_entity(&*stack.broker, "spot:51").await.unwrap();
    assert_eq!(spot["status"], "free");
    assert_eq!(spot["refVehicle"], Value::Null);
    let (parking, _) = ContextApi::get_entity(&*stack.broker, "parking:1").await.unwrap();
    assert_eq!(parking["availableSpotNumber"], 60);
    assert_eq!(stack.bulbs.commands(), ["bulb:0051@light|yellow", "bulb:0051@light|green"]);
    // The vehicle record stays behind.
    assert!(ContextApi::get_entity(&*stack.broker, "vehicle:501").await.is_ok());
    stack.shutdown().await;
}

#[tokio::test]
async fn agent_http_errors() {
    let dir = tempfile::tempdir().unwrap();
    let stack = Stack::start(StackOptions::new(10, dir.path())).await.unwrap();
    let http = reqwest::Client::new();
    let url = format!("{}/iot/d", stack.urls.agent);
    let status = |k: &'static str, body: &'static str| {
        let req = http.post(&url).query(&[("k", k)]).body(body);
        async move { req.send().await.unwrap().status().as_u16() }
    };
    assert_eq!(status("nobody", "id|1|t|car|p|1").await, 404);
    assert_eq!(status("gate", "id|1|t").await, 400);
    // Spot 99 does not exist in a 10-spot lot.
    assert_eq!(status("gate", "id|1|t|car|p|99").await, 502);
    let devices: Vec<Value> = http.get(format!("{}/iot/devices", stack.urls.agent)).send().await.unwrap().json().await.unwrap();
    assert_eq!(devices.len(), 11);
    stack.shutdown().await;
}

#[tokio::test]
async fn history_endpoints_answer_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(4);
    let truth = plan(&config).unwrap();
    let stack = Stack::start(StackOptions::new(config.total_spots, dir.path())).await.unwrap();
    stack.run(&truth).await.unwrap();
    let http = reqwest::Client::new();
    let replay: Value = http.get(format!("{}/replay", stack.urls.history)).send().await.unwrap().json().await.unwrap();
    let (parking, _) = ContextApi::get_entity(&*stack.broker, "parking:1").await.unwrap();
    assert_eq!(replay["parking:1"], parking);

    let first = &truth.event_log[0];
    let records: Vec<Value> = http
        .get(format!("{}/history", stack.urls.history))
        .query(&[("entityId", format!("spot:{}", first.spot))])
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert!(records.len() >= 2);
    assert_eq!(records[0]["attrs"]["status"], "free");
    let bad = http
        .get(format!("{}/history", stack.urls.history))
        .query(&[("entityId", "spot:1"), ("from", "yesterday")])
        .send()
        .await
        .unwrap();
    assert_eq!(bad.status(), 400);
    stack.shutdown().await;
}

#[tokio::test]
async fn analytics_and_weather_join_the_stack() {
    let dir = tempfile::tempdir().unwrap();
    let mut options = StackOptions::new(40, dir.path());
    options.analytics = true;
    options.weather_script = Some(vec![]);
    let stack = Stack::start(options).await.unwrap();
    let pipeline = stack.pipeline.clone().unwrap();
    pipeline.tick().await.unwrap();
    stack.send_measure("id|123456|t|car|p|3").await.unwrap();
    stack.send_measure("id|123457|t|car|p|4").await.unwrap();
    stack.settle().await;

    let snapshot: Value = reqwest::get(format!("{}/occupancy", stack.urls.analytics.clone().unwrap()))
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!((snapshot["occupied"].clone(), snapshot["free"].clone()), (json!(2), json!(38)));
    // No samples yet, so the forecast falls back to the live count.
    let (forecast, _) = ContextApi::get_entity(&*stack.broker, FORECAST_ID).await.unwrap();
    assert_eq!(forecast["expectedOccupied"], json!(2.0));
    let weather = stack.broker.list_entities(&twinmesh::broker::EntityQuery::of_type("WeatherForecast")).unwrap();
    assert_eq!(weather.len(), 1);
    stack.shutdown().await;
}
