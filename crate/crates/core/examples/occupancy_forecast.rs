//! Train the hour-of-day occupancy model on synthetic history and publish
//! the next-hour forecast as an `OccupancyForecast` entity.
//!
//! cargo run --example occupancy_forecast

use std::sync::Arc;

use chrono::{Duration, TimeZone, Utc};
use twinmesh::analytics::{train, Analytics, Occupancy, FORECAST_ID};
use twinmesh::broker::{Broker, BrokerConfig, ContextApi};
use twinmesh::clock::ManualClock;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    // A week of hourly samples: busy office hours, quiet nights.
    let start = Utc.with_ymd_and_hms(2020, 7, 27, 0, 0, 0).unwrap();
    let samples: Vec<_> = (0..24 * 7)
        .map(|h| {
            let t = start + Duration::hours(h);
            let hour = h % 24;
            let busy = if (8..18).contains(&hour) { 1100.0 } else { 150.0 };
            (t, busy + (h % 5) as f64 * 10.0)
        })
        .collect();
    let model = train(&samples).with_weather_coefficient(-200.0);
    println!("means 07h {:.1}  09h {:.1}  23h {:.1}", model.per_hour_means[7], model.per_hour_means[9], model.per_hour_means[23]);

    let broker = Arc::new(Broker::with_http(BrokerConfig::default()));
    let clock = ManualClock::at("2020-08-03T08:20:00Z");
    let analytics = Analytics::new(broker.clone(), Arc::new(clock.clone()), Occupancy::all_free(1450));
    analytics.set_model(model);

    let (hour, expected) = analytics.next_hour_forecast();
    println!("forecast for {hour}: {expected:.1} of {} spots", analytics.occupancy().total());
    analytics.refresh().await?;
    let (doc, version) = ContextApi::get_entity(&*broker, FORECAST_ID).await?;
    println!("v{version} {}", serde_json::to_string_pretty(&doc)?);

    // Same hour and value: nothing new is written.
    println!("second refresh -> {:?}", analytics.refresh().await?);
    Ok(())
}
