use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Dataset, EmergingEntity, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamClass {
    NewsFirst,
    SocialFirst,
    SameTime,
    OnlyNews,
    OnlySocial,
}

impl StreamClass {
    pub const ALL: [StreamClass; 5] = [
        StreamClass::NewsFirst,
        StreamClass::SocialFirst,
        StreamClass::SameTime,
        StreamClass::OnlyNews,
        StreamClass::OnlySocial,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StreamClass::NewsFirst => "news_first",
            StreamClass::SocialFirst => "social_first",
            StreamClass::SameTime => "same_time",
            StreamClass::OnlyNews => "only_news",
            StreamClass::OnlySocial => "only_social",
        }
    }
}

pub fn stream_class(entity: &EmergingEntity) -> StreamClass {
    match (entity.first_day_in(Stream::News), entity.first_day_in(Stream::Social)) {
        (Some(n), Some(s)) if n < s => StreamClass::NewsFirst,
        (Some(n), Some(s)) if s < n => StreamClass::SocialFirst,
        (Some(_), Some(_)) => StreamClass::SameTime,
        (Some(_), None) => StreamClass::OnlyNews,
        // Every retained entity has at least one document.
        (None, _) => StreamClass::OnlySocial,
    }
}

/// Entity ids per class, each list in dataset order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamPartition {
    pub news_first: Vec<String>,
    pub social_first: Vec<String>,
    pub same_time: Vec<String>,
    pub only_news: Vec<String>,
    pub only_social: Vec<String>,
}

impl StreamPartition {
    pub fn class(&self, class: StreamClass) -> &[String] {
        match class {
            StreamClass::NewsFirst => &self.news_first,
            StreamClass::SocialFirst => &self.social_first,
            StreamClass::SameTime => &self.same_time,
            StreamClass::OnlyNews => &self.only_news,
            StreamClass::OnlySocial => &self.only_social,
        }
    }

    fn class_mut(&mut self, class: StreamClass) -> &mut Vec<String> {
        match class {
            StreamClass::NewsFirst => &mut self.news_first,
            StreamClass::SocialFirst => &mut self.social_first,
            StreamClass::SameTime => &mut self.same_time,
            StreamClass::OnlyNews => &mut self.only_news,
            StreamClass::OnlySocial => &mut self.only_social,
        }
    }

    pub fn total(&self) -> usize {
        StreamClass::ALL.iter().map(|&c| self.class(c).len()).sum()
    }
}

pub fn partition_by_stream(dataset: &Dataset) -> StreamPartition {
    let mut p = StreamPartition::default();
    for e in &dataset.entities {
        p.class_mut(stream_class(e)).push(e.id().to_owned());
    }
    p
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossStreamLag {
    /// Mean days from first news mention to first social mention, over
    /// news-first entities.
    pub news_to_social: Option<f64>,
    pub social_to_news: Option<f64>,
    pub n_news_first: usize,
    pub n_social_first: usize,
    pub n_same_time: usize,
}

/// Mean lag between first appearances, per direction. Same-day entities
/// have no direction and are only counted.
pub fn cross_stream_lag(dataset: &Dataset) -> Result<CrossStreamLag> {
    let mut ns = Vec::new();
    let mut sn = Vec::new();
    let mut same = 0;
    for e in &dataset.entities {
        if let (Some(n), Some(s)) = (e.first_day_in(Stream::News), e.first_day_in(Stream::Social)) {
            match n.cmp(&s) {
                std::cmp::Ordering::Less => ns.push((s - n) as f64),
                std::cmp::Ordering::Greater => sn.push((n - s) as f64),
                std::cmp::Ordering::Equal => same += 1,
            }
        }
    }
    if ns.is_empty() && sn.is_empty() && same == 0 {
        return Err(Error::param("no entity appears in both streams"));
    }
    let avg = |xs: &[f64]| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    Ok(CrossStreamLag {
        news_to_social: avg(&ns),
        social_to_news: avg(&sn),
        n_news_first: ns.len(),
        n_social_first: sn.len(),
        n_same_time: same,
    })
}
