//! Registrations for the parking deployment: the entrance sensor and one
//! indicator bulb per spot.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use super::registry::{Adjust, DeviceRegistration, EntityTemplate, ExpansionAction, ExpansionRule, IdSequence};

pub const PARKING_ID: &str = "parking:1";
pub const FIRST_VEHICLE_SEQ: u64 = 501;

/// Light color shown for a spot status.
pub fn bulb_color(status: &str) -> Option<&'static str> {
    match status {
        "closed" => Some("red"),
        "occupied" => Some("yellow"),
        "free" => Some("green"),
        _ => None,
    }
}

/// Device id of the bulb above `spot`, e.g. `bulb:0051`.
pub fn bulb_device_id(spot: u32) -> String {
    format!("bulb:{spot:04}")
}

pub fn spot_id(spot: u32) -> String {
    format!("spot:{spot}")
}

fn spot_action(set_attrs: Value, delta: i64) -> [ExpansionAction; 2] {
    let set_attrs: BTreeMap<String, Value> = serde_json::from_value(set_attrs).expect("object");
    [
        ExpansionAction {
            target_id_template: "spot:{p}".into(),
            target_type: "ParkingSpot".into(),
            set_attrs,
            adjust: None,
        },
        ExpansionAction {
            target_id_template: PARKING_ID.into(),
            target_type: "OffStreetParking".into(),
            set_attrs: BTreeMap::new(),
            adjust: Some(Adjust {
                attr_name: "availableSpotNumber".into(),
                delta,
            }),
        },
    ]
}

/// The gate sensor. `p` reports an arrival at a spot and `d` a departure;
/// `id` carries the plate and `t` the vehicle type.
pub fn sensor(device_key: &str) -> DeviceRegistration {
    DeviceRegistration {
        device_key: device_key.into(),
        entity: EntityTemplate {
            id_template: "vehicle:{@seq}".into(),
            entity_type: "Vehicle".into(),
            sequence: Some(IdSequence {
                key: "id".into(),
                start: FIRST_VEHICLE_SEQ,
            }),
        },
        attr_map: BTreeMap::from([
            ("id".into(), "vehiclePlateIdentifier".into()),
            ("t".into(), "vehicleType".into()),
        ]),
        commands: BTreeMap::new(),
        endpoint: None,
        expansion_rules: vec![
            ExpansionRule {
                trigger: "p".into(),
                actions: spot_action(
                    json!({"status": "occupied", "refVehicle": "{@entityId}", "refOffStreetParking": PARKING_ID}),
                    -1,
                )
                .into(),
            },
            ExpansionRule {
                trigger: "d".into(),
                actions: spot_action(
                    json!({"status": "free", "refVehicle": null, "refOffStreetParking": PARKING_ID}),
                    1,
                )
                .into_iter()
                .map(|mut a| {
                    a.target_id_template = a.target_id_template.replace("{p}", "{d}");
                    a
                })
                .collect(),
            },
        ],
    }
}

/// The bulb for `spot`, commanded at `endpoint`.
pub fn bulb(spot: u32, endpoint: &str) -> DeviceRegistration {
    DeviceRegistration {
        device_key: bulb_device_id(spot),
        entity: EntityTemplate {
            id_template: spot_id(spot),
            entity_type: "ParkingSpot".into(),
            sequence: None,
        },
        attr_map: BTreeMap::new(),
        commands: BTreeMap::from([("light".into(), "status".into())]),
        endpoint: Some(endpoint.into()),
        expansion_rules: vec![],
    }
}
