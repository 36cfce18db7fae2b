use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::SimError;

pub const FIRST_PLATE: u64 = 123456;

fn default_total() -> u32 {
    1450
}

fn default_types() -> Vec<String> {
    vec!["car".into()]
}

fn default_first_spot() -> Option<u32> {
    Some(51)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScenarioConfig {
    #[serde(default = "default_total")]
    pub total_spots: u32,
    #[serde(default)]
    pub seed: u64,
    pub duration_ticks: u32,
    pub arrival_rate: f64,
    pub departure_rate: f64,
    /// Spot taken by the first arrival, when free.
    #[serde(default = "default_first_spot")]
    pub first_spot: Option<u32>,
    #[serde(default = "default_types")]
    pub vehicle_types: Vec<String>,
    #[serde(default)]
    pub weather_script: Vec<Value>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            total_spots: default_total(),
            seed: 0,
            duration_ticks: 200,
            arrival_rate: 0.6,
            departure_rate: 0.3,
            first_spot: default_first_spot(),
            vehicle_types: default_types(),
            weather_script: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    pub fn check(&self) -> Result<(), SimError> {
        let rate_ok = |r: f64| (0.0..=1.0).contains(&r);
        if self.total_spots == 0 {
            return Err(SimError::Config("totalSpots must be at least 1".into()));
        }
        if !rate_ok(self.arrival_rate) || !rate_ok(self.departure_rate) {
            return Err(SimError::Config("rates must lie in [0, 1]".into()));
        }
        if self.vehicle_types.is_empty() {
            return Err(SimError::Config("vehicleTypes must not be empty".into()));
        }
        if self.first_spot.is_some_and(|s| s == 0 || s > self.total_spots) {
            return Err(SimError::Config("firstSpot is outside the lot".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| SimError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum EventKind {
    Arrival,
    Departure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimEvent {
    pub tick: u32,
    pub kind: EventKind,
    pub spot: u32,
    pub plate: String,
    pub vehicle_type: String,
}

impl SimEvent {
    /// The Ultralight measure the gate sensor sends for this event.
    pub fn payload(&self) -> String {
        let key = match self.kind {
            EventKind::Arrival => "p",
            EventKind::Departure => "d",
        };
        format!("id|{}|t|{}|{key}|{}", self.plate, self.vehicle_type, self.spot)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GroundTruth {
    /// Spot number to plate.
    pub occupied_spots: BTreeMap<u32, String>,
    pub free_spots: BTreeSet<u32>,
    pub closed_spots: BTreeSet<u32>,
    pub event_log: Vec<SimEvent>,
}

impl GroundTruth {
    pub fn all_free(total: u32) -> Self {
        Self {
            free_spots: (1..=total).collect(),
            ..Self::default()
        }
    }

    /// Measure payloads in send order.
    pub fn trace(&self) -> Vec<String> {
        self.event_log.iter().map(SimEvent::payload).collect()
    }

    /// True when the three sets partition `1..=total`.
    pub fn is_partition(&self, total: u32) -> bool {
        let mut seen = BTreeSet::new();
        let all = self
            .occupied_spots
            .keys()
            .chain(&self.free_spots)
            .chain(&self.closed_spots);
        for s in all {
            if !seen.insert(*s) {
                return false;
            }
        }
        seen == (1..=total).collect()
    }
}

/// Plans the whole run from the config alone. Each tick draws one arrival
/// and then one departure; arrivals take a random free spot (the configured
/// first spot for the very first one) and departures leave a random
/// occupied spot.
pub fn plan(config: &ScenarioConfig) -> Result<GroundTruth, SimError> {
    config.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut truth = GroundTruth::all_free(config.total_spots);
    let mut next_plate = FIRST_PLATE;
    for tick in 0..config.duration_ticks {
        let arrive = rng.random_bool(config.arrival_rate);
        let pick = rng.random::<u64>();
        let ty = &config.vehicle_types[rng.random_range(0..config.vehicle_types.len())];
        if arrive && !truth.free_spots.is_empty() {
            let spot = match config.first_spot {
                Some(s) if next_plate == FIRST_PLATE && truth.free_spots.contains(&s) => s,
                _ => *truth
                    .free_spots
                    .iter()
                    .nth((pick % truth.free_spots.len() as u64) as usize)
                    .expect("non-empty"),
            };
            let plate = format!("{next_plate:06}");
            next_plate += 1;
            truth.free_spots.remove(&spot);
            truth.occupied_spots.insert(spot, plate.clone());
            truth.event_log.push(SimEvent {
                tick,
                kind: EventKind::Arrival,
                spot,
                plate,
                vehicle_type: ty.clone(),
            });
        }
        let depart = rng.random_bool(config.departure_rate);
        let pick = rng.random::<u64>();
        if depart && !truth.occupied_spots.is_empty() {
            let (&spot, _) = truth
                .occupied_spots
                .iter()
                .nth((pick % truth.occupied_spots.len() as u64) as usize)
                .expect("non-empty");
            let plate = truth.occupied_spots.remove(&spot).expect("occupied");
            let vehicle_type = truth
                .event_log
                .iter()
                .rev()
                .find(|e| e.plate == plate)
                .map(|e| e.vehicle_type.clone())
                .expect("arrived before");
            truth.free_spots.insert(spot);
            truth.event_log.push(SimEvent {
                tick,
                kind: EventKind::Departure,
                spot,
                plate,
                vehicle_type,
            });
        }
    }
    Ok(truth)
}
