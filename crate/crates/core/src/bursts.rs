//! Burst detection by thresholding a trailing moving average.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Day;
use crate::timeseries::{mean, pop_std};

pub const DEFAULT_WINDOW: usize = 7;
pub const DEFAULT_CUTOFF_SIGMA: f64 = 1.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    /// `mean(MA) + k * std(MA)`.
    #[default]
    MeanCentered,
    /// `k * std(MA)`; not shift invariant.
    BareSigma,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BurstParams {
    pub window: usize,
    pub cutoff_sigma: f64,
    pub threshold: ThresholdMode,
}

impl Default for BurstParams {
    fn default() -> Self {
        BurstParams {
            window: DEFAULT_WINDOW,
            cutoff_sigma: DEFAULT_CUTOFF_SIGMA,
            threshold: ThresholdMode::MeanCentered,
        }
    }
}

/// Inclusive index interval of a burst; `peak` is the moving-average
/// maximum inside it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Burst {
    pub start: usize,
    pub end: usize,
    pub peak: f64,
}

impl Burst {
    pub fn width(&self) -> usize {
        self.end - self.start + 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BurstSet {
    pub bursts: Vec<Burst>,
    pub source_length: usize,
    /// Sum of the raw series, used to normalize burst heights.
    pub source_sum: f64,
    pub window: usize,
    pub cutoff_sigma: f64,
    pub threshold: f64,
}

impl BurstSet {
    pub fn len(&self) -> usize {
        self.bursts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bursts.is_empty()
    }
}

/// Trailing mean over up to `window` samples, truncated at the left edge.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window < 1 {
        return Err(Error::param("moving-average window must be at least 1"));
    }
    let out = (0..series.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let slice = &series[lo..=i];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect();
    Ok(out)
}

pub fn detect_bursts(series: &[f64], params: &BurstParams) -> Result<BurstSet> {
    let ma = moving_average(series, params.window)?;
    let mut set = BurstSet {
        bursts: Vec::new(),
        source_length: series.len(),
        source_sum: series.iter().sum(),
        window: params.window,
        cutoff_sigma: params.cutoff_sigma,
        threshold: f64::INFINITY,
    };
    if series.is_empty() || series.iter().all(|&x| x == series[0]) {
        return Ok(set);
    }
    let sigma = pop_std(&ma);
    let threshold = match params.threshold {
        ThresholdMode::MeanCentered => mean(&ma) + params.cutoff_sigma * sigma,
        ThresholdMode::BareSigma => params.cutoff_sigma * sigma,
    };
    set.threshold = threshold;

    let mut open: Option<Burst> = None;
    for (i, &v) in ma.iter().enumerate() {
        if v > threshold {
            match open.as_mut() {
                Some(b) => {
                    b.end = i;
                    b.peak = b.peak.max(v);
                }
                None => {
                    open = Some(Burst {
                        start: i,
                        end: i,
                        peak: v,
                    })
                }
            }
        } else if let Some(b) = open.take() {
            set.bursts.push(b);
        }
    }
    set.bursts.extend(open);
    Ok(set)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BurstStats {
    pub n_bursts: usize,
    /// Mean of burst width over series length.
    pub mean_norm_duration: f64,
    /// Mean of burst peak over series volume.
    pub mean_norm_value: f64,
}

pub fn burst_stats(bs: &BurstSet) -> BurstStats {
    if bs.bursts.is_empty() {
        return BurstStats::default();
    }
    let n = bs.bursts.len() as f64;
    let len = bs.source_length as f64;
    let dur = bs.bursts.iter().map(|b| b.width() as f64 / len).sum::<f64>() / n;
    let val = if bs.source_sum > 0.0 {
        bs.bursts.iter().map(|b| b.peak / bs.source_sum).sum::<f64>() / n
    } else {
        0.0
    };
    BurstStats {
        n_bursts: bs.bursts.len(),
        mean_norm_duration: dur,
        mean_norm_value: val,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BurstInterval {
    pub start: usize,
    pub end: usize,
    pub start_day: Day,
    pub end_day: Day,
    pub rel_start: f64,
    pub rel_end: f64,
    pub peak: f64,
}

/// Export form of an entity's bursts in absolute days and relative time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityBursts {
    pub entity_id: String,
    pub start_day: Day,
    pub source_length: usize,
    pub source_sum: f64,
    pub threshold: f64,
    pub bursts: Vec<BurstInterval>,
}

impl EntityBursts {
    pub fn new(entity_id: &str, start_day: Day, bs: &BurstSet) -> Self {
        let len = bs.source_length as f64;
        EntityBursts {
            entity_id: entity_id.to_owned(),
            start_day,
            source_length: bs.source_length,
            source_sum: bs.source_sum,
            threshold: bs.threshold,
            bursts: bs
                .bursts
                .iter()
                .map(|b| BurstInterval {
                    start: b.start,
                    end: b.end,
                    start_day: start_day + b.start as Day,
                    end_day: start_day + b.end as Day,
                    rel_start: b.start as f64 / len,
                    rel_end: (b.end + 1) as f64 / len,
                    peak: b.peak,
                })
                .collect(),
        }
    }

    pub fn to_burst_set(&self, params: &BurstParams) -> BurstSet {
        BurstSet {
            bursts: self
                .bursts
                .iter()
                .map(|b| Burst {
                    start: b.start,
                    end: b.end,
                    peak: b.peak,
                })
                .collect(),
            source_length: self.source_length,
            source_sum: self.source_sum,
            window: params.window,
            cutoff_sigma: params.cutoff_sigma,
            threshold: self.threshold,
        }
    }
}
