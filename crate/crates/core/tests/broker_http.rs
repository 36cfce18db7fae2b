use std::sync::Arc;
use std::time::Duration;

use serde_json::json;
use twinmesh::broker::{self, Broker, BrokerClient, BrokerConfig, BrokerError, ContextApi, EntityQuery, EntitySelector, Subscription};
use twinmesh::service::Server;

async fn served() -> (Arc<Broker>, Server, BrokerClient) {
    let broker = Arc::new(Broker::with_http(BrokerConfig {
        record_writes: true,
        ..BrokerConfig::default()
    }));
    let server = Server::local(broker::router(broker.clone())).await.unwrap();
    let client = BrokerClient::new(server.url());
    (broker, server, client)
}

#[tokio::test]
async fn client_round_trips_key_values() {
    let (_b, server, api) = served().await;
    let doc = json!({"id": "spot:51", "type": "ParkingSpot", "name": "51", "status": "free", "refOffStreetParking": "parking:1"});
    assert_eq!(api.create_entity(&doc).await.unwrap(), 1);
    let (back, version) = api.get_entity("spot:51").await.unwrap();
    assert_eq!((back, version), (doc, 1));
    assert!(matches!(api.create_entity(&json!({"id": "spot:51", "type": "ParkingSpot"})).await, Err(BrokerError::AlreadyExists(id)) if id == "spot:51"));
    assert!(matches!(api.get_entity("spot:52").await, Err(BrokerError::NotFound(_))));
    server.shutdown().await;
}

#[tokio::test]
async fn if_match_rejects_stale_versions() {
    let (_b, server, api) = served().await;
    api.create_entity(&json!({"id": "parking:1", "type": "OffStreetParking", "availableSpotNumber": 10})).await.unwrap();
    let set = |n: i64| json!({"availableSpotNumber": n}).as_object().cloned().unwrap();
    assert_eq!(api.update_attrs("parking:1", &set(9), Some(1)).await.unwrap(), 2);
    let stale = api.update_attrs("parking:1", &set(8), Some(1)).await.unwrap_err();
    assert_eq!(stale, BrokerError::VersionConflict { expected: 1, actual: 2 });
    let (doc, _) = api.get_entity("parking:1").await.unwrap();
    assert_eq!(doc["availableSpotNumber"], 9);
    server.shutdown().await;
}

#[tokio::test]
async fn ids_with_reserved_characters_survive_the_url() {
    let (_b, server, api) = served().await;
    api.create_entity(&json!({"id": "weatherForecast:2020-08-03T09", "type": "WeatherForecast", "temperature": 27.5}))
        .await
        .unwrap();
    let (doc, _) = api.get_entity("weatherForecast:2020-08-03T09").await.unwrap();
    assert_eq!(doc["temperature"], 27.5);
    server.shutdown().await;
}

#[tokio::test]
async fn filters_by_type_pattern_and_value() {
    let (_b, server, api) = served().await;
    for (id, status) in [("spot:1", "free"), ("spot:2", "occupied"), ("spot:10", "occupied")] {
        api.create_entity(&json!({"id": id, "type": "ParkingSpot", "status": status})).await.unwrap();
    }
    api.create_entity(&json!({"id": "vehicle:501", "type": "Vehicle"})).await.unwrap();
    let spots = api.list_entities(&EntityQuery::of_type("ParkingSpot")).await.unwrap();
    assert_eq!(spots.len(), 3);
    let busy = api
        .list_entities(&EntityQuery::of_type("ParkingSpot").where_eq("status", json!("occupied")))
        .await
        .unwrap();
    let ids: Vec<_> = busy.iter().map(|d| d["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["spot:10", "spot:2"]);
    let one = api.list_entities(&EntityQuery::default().with_pattern("spot:1")).await.unwrap();
    assert_eq!(one.len(), 1);
    assert_eq!(api.list_entities(&EntityQuery::default()).await.unwrap().len(), 4);
    server.shutdown().await;
}

#[tokio::test]
async fn subscriptions_over_http() {
    let (broker, server, api) = served().await;
    let bad = Subscription::new(vec![EntitySelector::pattern("spot:(")], "http://127.0.0.1:9/notify");
    assert!(matches!(api.create_subscription(&bad).await, Err(BrokerError::MalformedSubscription(_))));
    let not_http = Subscription::new(vec![EntitySelector::of_type("ParkingSpot")], "ftp://host/");
    assert!(matches!(api.create_subscription(&not_http).await, Err(BrokerError::MalformedSubscription(_))));

    let ok = Subscription::new(vec![EntitySelector::of_type("ParkingSpot")], "http://127.0.0.1:9/notify")
        .on_change_of(&["status"])
        .describe("unreachable subscriber");
    let id = api.create_subscription(&ok).await.unwrap();
    assert_eq!(id.len(), 24);
    let stored = api.get_subscription(&id).await.unwrap();
    assert_eq!(stored.subject.condition.attrs, ["status"]);

    // The subscriber refuses connections; the write still succeeds and the
    // failure is counted once the retries run out.
    api.create_entity(&json!({"id": "spot:1", "type": "ParkingSpot", "status": "free"})).await.unwrap();
    api.quiesce(Duration::from_millis(20)).await.unwrap();
    let stats = broker.get_subscription(&id).unwrap().notification.stats;
    assert_eq!((stats.times_sent, stats.failures), (0, 1));
    assert!(stats.last_failure.is_some());
    server.shutdown().await;
}

#[tokio::test]
async fn write_log_is_exposed() {
    let (_b, server, api) = served().await;
    api.upsert(&json!({"id": "vehicle:501", "type": "Vehicle", "vehicleType": "car"})).await.unwrap();
    api.upsert(&json!({"id": "vehicle:501", "type": "Vehicle", "vehicleType": "van"})).await.unwrap();
    api.delete_entity("vehicle:501").await.unwrap();
    let log = api.write_log().await.unwrap();
    let versions: Vec<_> = log.iter().map(|w| w.version).collect();
    assert_eq!(versions, [1, 2, 2]);
    server.shutdown().await;
}
