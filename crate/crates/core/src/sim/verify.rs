use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::GroundTruth;
use crate::agent::parking::{bulb_color, bulb_device_id, PARKING_ID};

const MAX_LISTED: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub failures: Vec<String>,
}

impl Assertion {
    fn from_failures(name: &str, mut failures: Vec<String>) -> Self {
        if failures.len() > MAX_LISTED {
            let more = failures.len() - MAX_LISTED;
            failures.truncate(MAX_LISTED);
            failures.push(format!("... and {more} more"));
        }
        Self {
            name: name.into(),
            passed: failures.is_empty(),
            failures,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConformanceReport {
    pub assertions: Vec<Assertion>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.name == name)
    }
}

impl fmt::Display for ConformanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.assertions {
            writeln!(f, "{} {}", if a.passed { "PASS" } else { "FAIL" }, a.name)?;
            for line in &a.failures {
                writeln!(f, "    {line}")?;
            }
        }
        Ok(())
    }
}

pub const OCCUPANCY: &str = "(a) occupied spots match ground truth";
pub const AVAILABILITY: &str = "(b) availableSpotNumber equals free spots";
pub const BULBS: &str = "(c) bulb colors follow spot status";
pub const REPLAY: &str = "(d) history replay equals broker state";

fn spot_number(id: &str) -> Option<u32> {
    id.strip_prefix("spot:")?.parse().ok()
}

/// Compares the settled system against the planned ground truth.
/// `broker` holds every entity in `keyValues` form.
pub fn verify(
    truth: &GroundTruth,
    broker: &[Value],
    bulbs: &BTreeMap<String, String>,
    replay: &BTreeMap<String, Value>,
) -> ConformanceReport {
    let by_id: BTreeMap<&str, &Value> = broker
        .iter()
        .filter_map(|d| Some((d["id"].as_str()?, d)))
        .collect();
    let spots: Vec<(u32, &Value)> = broker
        .iter()
        .filter(|d| d["type"] == "ParkingSpot")
        .filter_map(|d| Some((spot_number(d["id"].as_str()?)?, d)))
        .collect();

    let mut occupancy = Vec::new();
    let occupied: BTreeSet<u32> = spots
        .iter()
        .filter(|(_, d)| d["status"] == "occupied")
        .map(|(n, _)| *n)
        .collect();
    let expected: BTreeSet<u32> = truth.occupied_spots.keys().copied().collect();
    for n in expected.difference(&occupied) {
        occupancy.push(format!("spot:{n} should be occupied"));
    }
    for n in occupied.difference(&expected) {
        occupancy.push(format!("spot:{n} should not be occupied"));
    }
    for (n, plate) in &truth.occupied_spots {
        let Some(doc) = by_id.get(format!("spot:{n}").as_str()) else { continue };
        let vehicle = doc["refVehicle"].as_str().and_then(|v| by_id.get(v));
        let seen = vehicle.and_then(|v| v["vehiclePlateIdentifier"].as_str());
        if seen != Some(plate.as_str()) {
            occupancy.push(format!("spot:{n} refers to plate {seen:?}, expected {plate}"));
        }
    }

    let mut availability = Vec::new();
    let available = by_id.get(PARKING_ID).map(|d| d["availableSpotNumber"].clone());
    let free = truth.free_spots.len() as u64;
    if available.as_ref().and_then(Value::as_f64) != Some(free as f64) {
        availability.push(format!("{PARKING_ID} has {available:?}, expected {free}"));
    }

    let mut bulb_failures = Vec::new();
    for (n, doc) in &spots {
        let want = doc["status"].as_str().and_then(bulb_color);
        let device = bulb_device_id(*n);
        let have = bulbs.get(&device).map(String::as_str);
        if want != have {
            bulb_failures.push(format!("{device} shows {have:?}, status wants {want:?}"));
        }
    }

    let mut replay_failures = Vec::new();
    for (id, doc) in &by_id {
        match replay.get(*id) {
            None => replay_failures.push(format!("{id} missing from history")),
            Some(r) if r != *doc => replay_failures.push(format!("{id}: history {r} != broker {doc}")),
            _ => {}
        }
    }
    for id in replay.keys().filter(|id| !by_id.contains_key(id.as_str())) {
        replay_failures.push(format!("{id} in history but not in the broker"));
    }

    ConformanceReport {
        assertions: vec![
            Assertion::from_failures(OCCUPANCY, occupancy),
            Assertion::from_failures(AVAILABILITY, availability),
            Assertion::from_failures(BULBS, bulb_failures),
            Assertion::from_failures(REPLAY, replay_failures),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn world() -> (GroundTruth, Vec<Value>, BTreeMap<String, String>) {
        let mut truth = GroundTruth::all_free(2);
        truth.free_spots.remove(&1);
        truth.occupied_spots.insert(1, "123456".into());
        let broker = vec![
            json!({"id": "parking:1", "type": "OffStreetParking", "availableSpotNumber": 1}),
            json!({"id": "spot:1", "type": "ParkingSpot", "status": "occupied", "refVehicle": "vehicle:501"}),
            json!({"id": "spot:2", "type": "ParkingSpot", "status": "free"}),
            json!({"id": "vehicle:501", "type": "Vehicle", "vehiclePlateIdentifier": "123456"}),
        ];
        let bulbs = BTreeMap::from([("bulb:0001".into(), "yellow".into()), ("bulb:0002".into(), "green".into())]);
        (truth, broker, bulbs)
    }

    fn replay_of(docs: &[Value]) -> BTreeMap<String, Value> {
        docs.iter().map(|d| (d["id"].as_str().unwrap().to_string(), d.clone())).collect()
    }

    #[test]
    fn consistent_world_passes() {
        let (truth, broker, bulbs) = world();
        let report = verify(&truth, &broker, &bulbs, &replay_of(&broker));
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn each_assertion_flags_its_own_fault() {
        let (truth, broker, mut bulbs) = world();
        let mut replay = replay_of(&broker);
        replay.remove("vehicle:501");
        bulbs.insert("bulb:0002".into(), "red".into());
        let mut wrong = broker.clone();
        wrong[0]["availableSpotNumber"] = json!(2);
        let report = verify(&truth, &wrong, &bulbs, &replay);
        assert!(report.get(OCCUPANCY).unwrap().passed);
        assert!(!report.get(AVAILABILITY).unwrap().passed);
        assert_eq!(report.get(BULBS).unwrap().failures.len(), 1);
        let d = report.get(REPLAY).unwrap();
        assert!(d.failures.iter().any(|f| f.contains("vehicle:501 missing")), "{d:?}");
    }

    #[test]
    fn empty_world_is_vacuous_except_parking() {
        let truth = GroundTruth::all_free(0);
        let broker = vec![json!({"id": "parking:1", "type": "OffStreetParking", "availableSpotNumber": 0})];
        assert!(verify(&truth, &broker, &BTreeMap::new(), &replay_of(&broker)).passed());
    }
}
