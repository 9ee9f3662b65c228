//! Per-entity daily emergence series and the normalization primitives used
//! to compare them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Dataset, Day, EmergingEntity, Stream};

/// What one unit of series volume counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeMode {
    /// Distinct documents per day.
    #[default]
    Documents,
    /// Mention records per day.
    Occurrences,
}

/// Daily mention counts from the first mention up to the day before
/// incorporation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmergenceSeries {
    pub entity_id: String,
    pub start_day: Day,
    pub values: Vec<u32>,
    /// `(news, social)`; a document tagged with both streams is counted
    /// under news so the two always sum to `values`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream_breakdown: Option<(Vec<u32>, Vec<u32>)>,
}

impl EmergenceSeries {
    /// Days from first mention to incorporation.
    pub fn duration(&self) -> usize {
        self.values.len()
    }

    pub fn volume(&self) -> u64 {
        self.values.iter().map(|&v| u64::from(v)).sum()
    }

    pub fn velocity(&self) -> f64 {
        self.volume() as f64 / self.duration() as f64
    }

    pub fn creation_day(&self) -> Day {
        self.start_day + self.values.len() as Day
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| f64::from(v)).collect()
    }
}

/// Builds the series of one retained entity.
pub fn series_for(entity: &EmergingEntity, mode: VolumeMode) -> EmergenceSeries {
    let start_day = entity.first_day();
    let len = (entity.meta.creation_day - start_day) as usize;
    let mut values = vec![0u32; len];
    let mut news = vec![0u32; len];
    let mut social = vec![0u32; len];
    for doc in &entity.docs {
        let idx = (doc.day - start_day) as usize;
        let weight = match mode {
            VolumeMode::Documents => 1,
            VolumeMode::Occurrences => doc.occurrences,
        };
        values[idx] += weight;
        match doc.streams.primary() {
            Some(Stream::News) => news[idx] += weight,
            Some(Stream::Social) => social[idx] += weight,
            None => {}
        }
    }
    EmergenceSeries {
        entity_id: entity.meta.entity_id.clone(),
        start_day,
        values,
        stream_breakdown: Some((news, social)),
    }
}

pub fn build_series(dataset: &Dataset, entity_id: &str) -> Result<EmergenceSeries> {
    dataset
        .get(entity_id)
        .map(|e| series_for(e, VolumeMode::Documents))
        .ok_or_else(|| Error::UnknownEntity(entity_id.to_owned()))
}

/// Series of every entity in the dataset, in dataset order.
pub fn build_all(dataset: &Dataset, mode: VolumeMode) -> Vec<EmergenceSeries> {
    use rayon::prelude::*;
    dataset.entities.par_iter().map(|e| series_for(e, mode)).collect()
}

/// Resamples `series` to `len` points by linear interpolation, mapping
/// output position `i` to source position `i * (n - 1) / (len - 1)`.
pub fn interpolate(series: &[f64], len: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if n == 0 {
        return Err(Error::param("cannot interpolate an empty series"));
    }
    if len < 1 {
        return Err(Error::param("interpolation target length must be at least 1"));
    }
    if len == 1 {
        if n == 1 {
            return Ok(vec![series[0]]);
        }
        return Err(Error::param("target length 1 needs a length-1 source"));
    }
    if n == len {
        return Ok(series.to_vec());
    }
    if n == 1 {
        return Ok(vec![series[0]; len]);
    }
    let last = (n - 1) as f64;
    let denom = (len - 1) as f64;
    let out = (0..len)
        .map(|i| {
            if i == len - 1 {
                return series[n - 1];
            }
            let pos = i as f64 * last / denom;
            let lo = pos.floor() as usize;
            let frac = pos - lo as f64;
            if frac == 0.0 {
                series[lo]
            } else {
                series[lo] + (series[lo + 1] - series[lo]) * frac
            }
        })
        .collect();
    Ok(out)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub fn pop_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Z-scores with the population standard deviation. Constant input maps
/// to all zeros.
pub fn standardize(series: &[f64]) -> Vec<f64> {
    if series.is_empty() {
        return Vec::new();
    }
    if series.iter().all(|&x| x == series[0]) {
        return vec![0.0; series.len()];
    }
    let m = mean(series);
    let centered: Vec<f64> = series.iter().map(|x| x - m).collect();
    let sd = (centered.iter().map(|c| c * c).sum::<f64>() / series.len() as f64).sqrt();
    if sd == 0.0 {
        return vec![0.0; series.len()];
    }
    centered.iter().map(|c| c / sd).collect()
}

/// `entity_id,start_day,v0,v1,...` rows.
pub fn series_to_csv(series: &[EmergenceSeries]) -> String {
    let mut out = String::from("entity_id,start_day,values\n");
    for s in series {
        out.push_str(&s.entity_id);
        out.push(',');
        out.push_str(&s.start_day.to_string());
        for v in &s.values {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}
