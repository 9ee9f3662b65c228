use serde::{Deserialize, Serialize};

use crate::bursts::{burst_stats, BurstSet};
use crate::error::{Error, Result};
use crate::timeseries::EmergenceSeries;

/// Mean, population std and median.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
}

impl Summary {
    /// All zeros for an empty slice.
    pub fn of(xs: &[f64]) -> Summary {
        if xs.is_empty() {
            return Summary::default();
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 {
            sorted[mid]
        } else {
            (sorted[mid - 1] + sorted[mid]) / 2.0
        };
        Summary { mean, std, median }
    }
}

/// Per-entity values behind every group statistic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityFeatures {
    pub duration: f64,
    pub volume: f64,
    pub velocity: f64,
    pub n_bursts: f64,
    /// `None` when the entity has no bursts.
    pub burst_duration: Option<f64>,
    pub burst_value: Option<f64>,
}

pub fn entity_features(series: &EmergenceSeries, bursts: &BurstSet) -> EntityFeatures {
    let bs = burst_stats(bursts);
    let has = bs.n_bursts > 0;
    EntityFeatures {
        duration: series.duration() as f64,
        volume: series.volume() as f64,
        velocity: series.velocity(),
        n_bursts: bs.n_bursts as f64,
        burst_duration: has.then_some(bs.mean_norm_duration),
        burst_value: has.then_some(bs.mean_norm_value),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Duration,
    Volume,
    Velocity,
    NBursts,
    BurstDuration,
    BurstValue,
}

impl Feature {
    pub const ALL: [Feature; 6] = [
        Feature::Duration,
        Feature::Volume,
        Feature::Velocity,
        Feature::NBursts,
        Feature::BurstDuration,
        Feature::BurstValue,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Feature::Duration => "duration",
            Feature::Volume => "volume",
            Feature::Velocity => "velocity",
            Feature::NBursts => "bursts",
            Feature::BurstDuration => "burst_duration",
            Feature::BurstValue => "burst_value",
        }
    }

    pub fn value(self, f: &EntityFeatures) -> Option<f64> {
        match self {
            Feature::Duration => Some(f.duration),
            Feature::Volume => Some(f.volume),
            Feature::Velocity => Some(f.velocity),
            Feature::NBursts => Some(f.n_bursts),
            Feature::BurstDuration => f.burst_duration,
            Feature::BurstValue => f.burst_value,
        }
    }
}

/// Values of one feature across a group, skipping entities where it is
/// undefined.
pub fn features_for(feature: Feature, members: &[EntityFeatures]) -> Vec<f64> {
    members.iter().filter_map(|m| feature.value(m)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub group: String,
    pub n: usize,
    pub duration: Summary,
    pub volume: Summary,
    pub velocity: Summary,
    pub n_bursts: Summary,
    /// Entities with at least one burst; the burst duration and value rows
    /// are computed over these only.
    pub n_with_bursts: usize,
    pub burst_duration: Summary,
    pub burst_value: Summary,
}

impl GroupStats {
    pub fn summary(&self, feature: Feature) -> &Summary {
        match feature {
            Feature::Duration => &self.duration,
            Feature::Volume => &self.volume,
            Feature::Velocity => &self.velocity,
            Feature::NBursts => &self.n_bursts,
            Feature::BurstDuration => &self.burst_duration,
            Feature::BurstValue => &self.burst_value,
        }
    }
}

pub fn descriptive_stats(group: &str, members: &[EntityFeatures]) -> Result<GroupStats> {
    if members.is_empty() {
        return Err(Error::EmptyGroup);
    }
    let s = |f: Feature| Summary::of(&features_for(f, members));
    Ok(GroupStats {
        group: group.to_owned(),
        n: members.len(),
        duration: s(Feature::Duration),
        volume: s(Feature::Volume),
        velocity: s(Feature::Velocity),
        n_bursts: s(Feature::NBursts),
        n_with_bursts: members.iter().filter(|m| m.burst_duration.is_some()).count(),
        burst_duration: s(Feature::BurstDuration),
        burst_value: s(Feature::BurstValue),
    })
}

/// One row per group, mean/std/median triples per statistic.
pub fn stats_table_csv(rows: &[GroupStats]) -> String {
    let mut out = String::from("group,n");
    for f in Feature::ALL {
        for part in ["mean", "std", "median"] {
            out.push_str(&format!(",{}_{}", f.as_str(), part));
        }
    }
    out.push_str(",n_with_bursts\n");
    for r in rows {
        out.push_str(&format!("{},{}", r.group, r.n));
        for f in Feature::ALL {
            let s = r.summary(f);
            out.push_str(&format!(",{},{},{}", s.mean, s.std, s.median));
        }
        out.push_str(&format!(",{}\n", r.n_with_bursts));
    }
    out
}
