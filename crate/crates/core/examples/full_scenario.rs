//! Seeded parking scenarios on a fresh stack each, checked against the
//! planned ground truth.
//!
//! cargo run --example full_scenario -- 3

use twinmesh::sim::{run_scenario, ScenarioConfig};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let mut all_passed = true;
    for seed in 0..seeds {
        let dir = tempfile::tempdir()?;
        let config = ScenarioConfig {
            seed,
            ..ScenarioConfig::default()
        };
        let run = run_scenario(&config, dir.path()).await?;
        let occupied = run.truth.occupied_spots.len();
        println!("seed {seed}: {} events, {occupied} spots occupied at the end", run.truth.event_log.len());
        print!("{}", run.report);
        all_passed &= run.report.passed();
    }
    println!("{}", if all_passed { "all scenarios conform" } else { "some scenarios FAILED" });
    Ok(())
}
