//! Kruskal-Wallis omnibus test, Dunn's pairwise post-hoc test and the
//! Holm-Bonferroni step-down adjustment.
//!
//! p-values use the chi-square and normal approximations; they are
//! reasonable once every group has about five or more members.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use super::describe::{features_for, EntityFeatures, Feature};
use crate::error::{Error, Result};

/// Significance level used for the report flags.
pub const ALPHA: f64 = 0.05;

struct Ranked {
    /// Rank sum per group.
    rank_sums: Vec<f64>,
    sizes: Vec<usize>,
    total: usize,
    /// Sum of `t^3 - t` over tie groups.
    tie_term: f64,
}

fn rank_groups<S: AsRef<[f64]>>(groups: &[S]) -> Result<Ranked> {
    if groups.len() < 2 {
        return Err(Error::param("need at least two groups"));
    }
    if groups.iter().any(|g| g.as_ref().is_empty()) {
        return Err(Error::EmptyGroup);
    }
    let mut pooled: Vec<(f64, usize)> = groups
        .iter()
        .enumerate()
        .flat_map(|(g, xs)| xs.as_ref().iter().map(move |&x| (x, g)))
        .collect();
    if pooled.iter().any(|(x, _)| x.is_nan()) {
        return Err(Error::param("NaN in test input"));
    }
    let total = pooled.len();
    if total < 3 {
        return Err(Error::param("need at least three observations"));
    }
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut rank_sums = vec![0.0; groups.len()];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < total {
        let mut j = i + 1;
        while j < total && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        // Positions i..j share the midrank of ranks i+1..=j.
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &(_, g) in &pooled[i..j] {
            rank_sums[g] += midrank;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    Ok(Ranked {
        rank_sums,
        sizes: groups.iter().map(|g| g.as_ref().len()).collect(),
        total,
        tie_term,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KruskalWallis {
    pub h: f64,
    pub p: f64,
    pub df: usize,
    pub n: usize,
}

pub fn kruskal_wallis<S: AsRef<[f64]>>(groups: &[S]) -> Result<KruskalWallis> {
    let r = rank_groups(groups)?;
    let n = r.total as f64;
    let df = groups.len() - 1;
    let correction = 1.0 - r.tie_term / (n * n * n - n);
    if correction <= 0.0 {
        return Ok(KruskalWallis { h: 0.0, p: 1.0, df, n: r.total });
    }
    let sum: f64 = r.rank_sums.iter().zip(&r.sizes).map(|(s, &k)| s * s / k as f64).sum();
    let h = ((12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0)) / correction).max(0.0);
    let chi = ChiSquared::new(df as f64).expect("df >= 1");
    Ok(KruskalWallis {
        h,
        p: chi.sf(h),
        df,
        n: r.total,
    })
}

/// Holm-Bonferroni step-down adjustment; output order matches input.
pub fn holm_adjust(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (rank, &idx) in order.iter().enumerate() {
        let candidate = ((m - rank) as f64 * p[idx]).min(1.0);
        running = running.max(candidate);
        adjusted[idx] = running;
    }
    adjusted
}

/// Pairwise Dunn results; matrices are `g x g`, symmetric in the p-values,
/// antisymmetric in `z`, with a unit p-value diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DunnResult {
    pub z: Vec<Vec<f64>>,
    pub p_raw: Vec<Vec<f64>>,
    pub p_adjusted: Vec<Vec<f64>>,
}

pub fn dunn_posthoc<S: AsRef<[f64]>>(groups: &[S]) -> Result<DunnResult> {
    let r = rank_groups(groups)?;
    let g = groups.len();
    let n = r.total as f64;
    let mean_rank: Vec<f64> = r.rank_sums.iter().zip(&r.sizes).map(|(s, &k)| s / k as f64).collect();
    let var_unit = n * (n + 1.0) / 12.0 - r.tie_term / (12.0 * (n - 1.0));
    let normal = Normal::new(0.0, 1.0).expect("standard normal");

    let mut z = vec![vec![0.0; g]; g];
    let mut p_raw = vec![vec![1.0; g]; g];
    let mut pairs = Vec::new();
    let mut raw = Vec::new();
    for i in 0..g {
        for j in i + 1..g {
            let se = (var_unit * (1.0 / r.sizes[i] as f64 + 1.0 / r.sizes[j] as f64)).sqrt();
            let (zij, p) = if se > 0.0 {
                let zij = (mean_rank[i] - mean_rank[j]) / se;
                (zij, (2.0 * normal.sf(zij.abs())).min(1.0))
            } else {
                (0.0, 1.0)
            };
            z[i][j] = zij;
            z[j][i] = -zij;
            p_raw[i][j] = p;
            p_raw[j][i] = p;
            pairs.push((i, j));
            raw.push(p);
        }
    }
    let adj = holm_adjust(&raw);
    let mut p_adjusted = vec![vec![1.0; g]; g];
    for (&(i, j), &p) in pairs.iter().zip(&adj) {
        p_adjusted[i][j] = p;
        p_adjusted[j][i] = p;
    }
    Ok(DunnResult { z, p_raw, p_adjusted })
}

/// Omnibus and post-hoc tests of one feature across groups.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureComparison {
    pub feature: Feature,
    pub groups: Vec<String>,
    pub kruskal_wallis: KruskalWallis,
    pub dunn: DunnResult,
}

/// Runs the tests for every feature that has data in all groups.
pub fn compare_groups(groups: &[(String, Vec<EntityFeatures>)]) -> Vec<FeatureComparison> {
    let names: Vec<String> = groups.iter().map(|(n, _)| n.clone()).collect();
    Feature::ALL
        .iter()
        .filter_map(|&feature| {
            let values: Vec<Vec<f64>> = groups.iter().map(|(_, m)| features_for(feature, m)).collect();
            let kw = kruskal_wallis(&values).ok()?;
            let dunn = dunn_posthoc(&values).ok()?;
            Some(FeatureComparison {
                feature,
                groups: names.clone(),
                kruskal_wallis: kw,
                dunn,
            })
        })
        .collect()
}

/// `feature,group_a,group_b,z,p_raw,p_adjusted,significant` plus one omnibus
/// row per feature (`group_b` empty, `z` holding H).
pub fn significance_csv(comparisons: &[FeatureComparison]) -> String {
    let mut out = String::from("feature,group_a,group_b,statistic,p_raw,p_adjusted,significant\n");
    for c in comparisons {
        let kw = &c.kruskal_wallis;
        out.push_str(&format!(
            "{},kruskal_wallis,,{},{},{},{}\n",
            c.feature.as_str(),
            kw.h,
            kw.p,
            kw.p,
            kw.p < ALPHA
        ));
        for i in 0..c.groups.len() {
            for j in i + 1..c.groups.len() {
                let p = c.dunn.p_adjusted[i][j];
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    c.feature.as_str(),
                    c.groups[i],
                    c.groups[j],
                    c.dunn.z[i][j],
                    c.dunn.p_raw[i][j],
                    p,
                    p < ALPHA
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kw_hand_example() {
        let kw = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert!((kw.h - 27.0 / 7.0).abs() < 1e-9);
        assert_eq!(kw.df, 1);
    }

    #[test]
    fn kw_identical_groups() {
        let kw = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(kw.h.abs() < 1e-12);
        let flat = kruskal_wallis(&[vec![2.0, 2.0], vec![2.0, 2.0]]).unwrap();
        assert_eq!((flat.h, flat.p), (0.0, 1.0));
    }

    #[test]
    fn kw_with_ties_matches_hand_value() {
        // pooled [1,2,2,3 | 2,3,4]: ranks 1,3,3,5.5 | 3,5.5,7 -> R = 12.5, 15.5
        // H0 = 12/56 * (12.5^2/4 + 15.5^2/3) - 24; ties: t=3 (24), t=2 (6)
        let kw = kruskal_wallis(&[vec![1.0, 2.0, 2.0, 3.0], vec![2.0, 3.0, 4.0]]).unwrap();
        let h0 = 12.0 / 56.0 * (12.5f64.powi(2) / 4.0 + 15.5f64.powi(2) / 3.0) - 24.0;
        let expected = h0 / (1.0 - 30.0 / 336.0);
        assert!((kw.h - expected).abs() < 1e-12);
    }

    #[test]
    fn kw_input_errors() {
        assert!(kruskal_wallis(&[vec![1.0, 2.0, 3.0]]).is_err());
        assert!(kruskal_wallis(&[vec![1.0], vec![]]).is_err());
        assert!(kruskal_wallis(&[vec![1.0], vec![2.0]]).is_err());
    }

    #[test]
    fn holm_examples() {
        assert_eq!(holm_adjust(&[0.01, 0.04]), vec![0.02, 0.04]);
        assert_eq!(holm_adjust(&[0.04, 0.01]), vec![0.04, 0.02]);
        assert_eq!(holm_adjust(&[0.3]), vec![0.3]);
        assert_eq!(holm_adjust(&[0.5, 0.6, 0.7]), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn dunn_two_groups_unadjusted() {
        let d = dunn_posthoc(&[vec![1.0, 2.0, 3.0, 4.0], vec![3.5, 5.0, 6.0, 7.0]]).unwrap();
        assert_eq!(d.p_adjusted[0][1], d.p_raw[0][1]);
        assert_eq!(d.p_adjusted[1][1], 1.0);
        assert_eq!(d.z[1][0], -d.z[0][1]);
    }

    #[test]
    fn dunn_separated_groups() {
        let a: Vec<f64> = (1..=10).map(f64::from).collect();
        let b: Vec<f64> = (100..=110).map(f64::from).collect();
        let c: Vec<f64> = (1000..=1010).map(f64::from).collect();
        let d = dunn_posthoc(&[a, b, c]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!(d.p_adjusted[i][j] < 0.05, "({i}, {j}) = {}", d.p_adjusted[i][j]);
                }
            }
        }
    }

    mod props {
        use proptest::prelude::*;

        use super::super::*;

        proptest! {
            #[test]
            fn holm_monotone(p in prop::collection::vec(0.0f64..1.0, 1..20)) {
                let adj = holm_adjust(&p);
                for i in 0..p.len() {
                    prop_assert!(adj[i] >= p[i]);
                    prop_assert!(adj[i] <= 1.0);
                    for j in 0..p.len() {
                        if p[i] < p[j] {
                            prop_assert!(adj[i] <= adj[j]);
                        }
                    }
                }
            }

            #[test]
            fn kw_rank_invariant(groups in prop::collection::vec(prop::collection::vec(-50i32..50, 1..15), 2..5)) {
                let raw: Vec<Vec<f64>> = groups.iter().map(|g| g.iter().map(|&x| f64::from(x)).collect()).collect();
                let total: usize = raw.iter().map(Vec::len).sum();
                prop_assume!(total >= 3);
                let transformed: Vec<Vec<f64>> = raw.iter().map(|g| g.iter().map(|&x| (x / 10.0).exp() + 3.0).collect()).collect();
                let a = kruskal_wallis(&raw).unwrap();
                let b = kruskal_wallis(&transformed).unwrap();
                prop_assert!((a.h - b.h).abs() < 1e-9);
            }
        }
    }
}
