use std::collections::BTreeMap;

use chrono::{DateTime, Timelike, Utc};
use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::dataflow::HistoricalRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SpotStatus {
    Free,
    Occupied,
    Closed,
}

impl SpotStatus {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "free" => Some(Self::Free),
            "occupied" => Some(Self::Occupied),
            "closed" => Some(Self::Closed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OccupancySnapshot {
    pub occupied: u32,
    pub free: u32,
    pub closed: u32,
    pub as_of: String,
}

/// Status of every registered spot, with running counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Occupancy {
    spots: BTreeMap<String, SpotStatus>,
    counts: [u32; 3],
}

fn slot(s: SpotStatus) -> usize {
    match s {
        SpotStatus::Free => 0,
        SpotStatus::Occupied => 1,
        SpotStatus::Closed => 2,
    }
}

impl Occupancy {
    pub fn new(spots: impl IntoIterator<Item = (String, SpotStatus)>) -> Self {
        let mut o = Self::default();
        for (id, status) in spots {
            if let Some(old) = o.spots.insert(id, status) {
                o.counts[slot(old)] -= 1;
            }
            o.counts[slot(status)] += 1;
        }
        o
    }

    /// `n` spots `spot:1..=n`, all free.
    pub fn all_free(n: u32) -> Self {
        Self::new((1..=n).map(|i| (format!("spot:{i}"), SpotStatus::Free)))
    }

    pub fn total(&self) -> u32 {
        self.spots.len() as u32
    }

    pub fn occupied(&self) -> u32 {
        self.counts[1]
    }

    pub fn status(&self, spot: &str) -> Option<SpotStatus> {
        self.spots.get(spot).copied()
    }

    pub fn apply(&mut self, spot: &str, status: SpotStatus) -> Result<(), AnalyticsError> {
        let old = self
            .spots
            .get_mut(spot)
            .ok_or_else(|| AnalyticsError::UnknownSpot(spot.into()))?;
        self.counts[slot(*old)] -= 1;
        self.counts[slot(status)] += 1;
        *old = status;
        Ok(())
    }

    pub fn snapshot(&self, as_of: DateTime<Utc>) -> OccupancySnapshot {
        OccupancySnapshot {
            free: self.counts[0],
            occupied: self.counts[1],
            closed: self.counts[2],
            as_of: crate::clock::iso(as_of),
        }
    }
}

/// Occupied count after each spot status record, replayed from `initial`.
pub fn occupancy_series(
    initial: &Occupancy,
    records: &[HistoricalRecord],
) -> Vec<(DateTime<Utc>, f64)> {
    let mut live = initial.clone();
    let mut series = Vec::new();
    for r in records.iter().filter(|r| r.entity_type == "ParkingSpot") {
        let (Some(status), Some(at)) = (
            r.attrs.get("status").and_then(|s| s.as_str()).and_then(SpotStatus::parse),
            r.received(),
        ) else {
            continue;
        };
        if live.apply(&r.entity_id, status).is_ok() {
            series.push((at, live.occupied() as f64));
        }
    }
    series
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ForecastModel {
    pub per_hour_means: [f64; 24],
    pub sample_counts: [u64; 24],
    #[serde(default)]
    pub weather_coefficient: f64,
}

impl Default for ForecastModel {
    fn default() -> Self {
        Self {
            per_hour_means: [0.0; 24],
            sample_counts: [0; 24],
            weather_coefficient: 0.0,
        }
    }
}

/// Per-hour arithmetic means. Samples are summed in sorted order so the
/// result does not depend on input order.
pub fn train(history: &[(DateTime<Utc>, f64)]) -> ForecastModel {
    let mut by_hour: [Vec<f64>; 24] = Default::default();
    for (t, v) in history {
        by_hour[t.hour() as usize].push(*v);
    }
    let mut model = ForecastModel::default();
    for (h, samples) in by_hour.iter_mut().enumerate() {
        if samples.is_empty() {
            continue;
        }
        samples.sort_by(f64::total_cmp);
        model.sample_counts[h] = samples.len() as u64;
        model.per_hour_means[h] = samples.iter().sum::<f64>() / samples.len() as f64;
    }
    model
}

impl ForecastModel {
    pub fn with_weather_coefficient(mut self, c: f64) -> Self {
        self.weather_coefficient = c;
        self
    }

    /// Expected occupied spots at `hour`. Hours without samples fall back
    /// to `current`.
    pub fn forecast(
        &self,
        hour: u32,
        precipitation: Option<f64>,
        current: f64,
        total_spots: u32,
    ) -> Result<f64, AnalyticsError> {
        let h = usize::try_from(hour).ok().filter(|h| *h < 24).ok_or(AnalyticsError::BadHour(hour))?;
        let base = if self.sample_counts[h] == 0 {
            current
        } else {
            self.per_hour_means[h]
        };
        let scaled = match precipitation {
            Some(p) if self.weather_coefficient != 0.0 => base * (1.0 + self.weather_coefficient * p),
            _ => base,
        };
        Ok(scaled.clamp(0.0, total_spots as f64))
    }
}
