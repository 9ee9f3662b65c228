use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::describe::{descriptive_stats, EntityFeatures, GroupStats, Summary};
use crate::error::{Error, Result};
use crate::ingest::EntityMeta;

pub const NULL_CLASS: &str = "(none)";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeRow {
    /// `None` for the null class.
    pub type_label: Option<String>,
    pub stats: GroupStats,
    pub n_with_pageviews: usize,
    pub pageviews: Summary,
    /// Popularity rank by descending mean pageviews among labeled rows.
    pub rank: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeReport {
    pub min_count: usize,
    /// Labeled rows sorted by type name, then the null-class row if any.
    pub rows: Vec<TypeRow>,
}

impl TypeReport {
    pub fn stats_rows(&self) -> Vec<GroupStats> {
        self.rows.iter().map(|r| r.stats.clone()).collect()
    }

    /// Rows ranked by popularity: `rank,type,n,n_with_pageviews,mean,std,median`.
    pub fn popularity_csv(&self) -> String {
        let mut ranked: Vec<&TypeRow> = self.rows.iter().filter(|r| r.rank.is_some()).collect();
        ranked.sort_by_key(|r| r.rank);
        let mut out = String::from("rank,type,n,n_with_pageviews,pageviews_mean,pageviews_std,pageviews_median\n");
        for r in ranked {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.rank.expect("filtered"),
                r.type_label.as_deref().unwrap_or(NULL_CLASS),
                r.stats.n,
                r.n_with_pageviews,
                r.pageviews.mean,
                r.pageviews.std,
                r.pageviews.median
            ));
        }
        out
    }
}

/// Per-type statistics. An entity counts toward every one of its labels;
/// labels with fewer than `min_count` entities are dropped. Label-free
/// entities form the null-class row.
pub fn type_report(entities: &[(&EntityMeta, EntityFeatures)], min_count: usize) -> Result<TypeReport> {
    if entities.is_empty() {
        return Err(Error::EmptyGroup);
    }
    let mut by_type: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut null = Vec::new();
    for (i, (meta, _)) in entities.iter().enumerate() {
        if meta.type_labels.is_empty() {
            null.push(i);
        }
        for label in &meta.type_labels {
            by_type.entry(label.as_str()).or_default().push(i);
        }
    }

    let row = |label: Option<&str>, members: &[usize]| -> Result<TypeRow> {
        let feats: Vec<EntityFeatures> = members.iter().map(|&i| entities[i].1).collect();
        let views: Vec<f64> = members
            .iter()
            .filter_map(|&i| entities[i].0.pageviews)
            .map(|v| v as f64)
            .collect();
        Ok(TypeRow {
            type_label: label.map(str::to_owned),
            stats: descriptive_stats(label.unwrap_or(NULL_CLASS), &feats)?,
            n_with_pageviews: views.len(),
            pageviews: Summary::of(&views),
            rank: None,
        })
    };

    let mut rows = by_type
        .iter()
        .filter(|(_, members)| members.len() >= min_count)
        .map(|(label, members)| row(Some(label), members))
        .collect::<Result<Vec<_>>>()?;

    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| {
        let key = |r: &TypeRow| if r.n_with_pageviews > 0 { r.pageviews.mean } else { f64::NEG_INFINITY };
        key(&rows[b])
            .total_cmp(&key(&rows[a]))
            .then_with(|| rows[a].type_label.cmp(&rows[b].type_label))
    });
    for (rank, idx) in order.into_iter().enumerate() {
        rows[idx].rank = Some(rank + 1);
    }

    if !null.is_empty() {
        rows.push(row(None, &null)?);
    }
    Ok(TypeReport { min_count, rows })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;

    fn meta(labels: &[&str], pageviews: Option<u64>) -> EntityMeta {
        EntityMeta {
            entity_id: "e".into(),
            creation_day: 0,
            type_labels: labels.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>(),
            pageviews,
        }
    }

    fn feats(duration: f64) -> EntityFeatures {
        EntityFeatures {
            duration,
            volume: 10.0,
            velocity: 10.0 / duration,
            n_bursts: 1.0,
            burst_duration: Some(0.1),
            burst_value: Some(0.2),
        }
    }

    #[test]
    fn multi_label_counts_in_every_row() {
        let metas = [meta(&["Person", "Athlete"], Some(10)), meta(&["Person"], Some(30)), meta(&[], None)];
        let entities: Vec<_> = metas.iter().map(|m| (m, feats(10.0))).collect();
        let report = type_report(&entities, 1).unwrap();
        let labels: Vec<_> = report.rows.iter().map(|r| r.type_label.clone()).collect();
        assert_eq!(labels, vec![Some("Athlete".into()), Some("Person".into()), None]);
        assert_eq!(report.rows[0].stats.n, 1);
        assert_eq!(report.rows[1].stats.n, 2);
        assert_eq!(report.rows[1].pageviews.mean, 20.0);
        assert_eq!(report.rows[1].rank, Some(1));
        assert_eq!(report.rows[0].rank, Some(2));
        assert_eq!(report.rows[2].rank, None);
    }

    #[test]
    fn threshold_drops_rare_labels() {
        let metas = [meta(&["Person", "Athlete"], Some(10)), meta(&["Person"], Some(30))];
        let entities: Vec<_> = metas.iter().map(|m| (m, feats(10.0))).collect();
        let report = type_report(&entities, 2).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].rank, Some(1));
    }
}
