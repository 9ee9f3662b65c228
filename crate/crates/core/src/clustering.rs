//! Ward-linkage agglomerative clustering over a precomputed dissimilarity
//! matrix, plus flat cuts and truncated views of the resulting tree.
//!
//! Ward's criterion assumes Euclidean input. Here it is applied to burst
//! dissimilarities through the Lance-Williams recurrence
//!
//! ```text
//! d(i+j, k)^2 = ((n_i + n_k) d(i,k)^2 + (n_j + n_k) d(j,k)^2 - n_k d(i,j)^2) / (n_i + n_j + n_k)
//! ```
//!
//! which stays reducible for any dissimilarity, so the nearest-neighbor
//! chain yields the same hierarchy as the naive closest-pair loop.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::DistanceMatrix;

/// One agglomeration step. Leaves are nodes `0..n`; step `s` creates node
/// `n + s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub labels: Vec<String>,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn n_leaves(&self) -> usize {
        self.labels.len()
    }

    pub fn root(&self) -> usize {
        self.n_leaves() + self.merges.len() - 1
    }

    /// Merge record of an internal node, `None` for leaves.
    pub fn merge_of(&self, node: usize) -> Option<&Merge> {
        node.checked_sub(self.n_leaves()).and_then(|s| self.merges.get(s))
    }

    pub fn size_of(&self, node: usize) -> usize {
        self.merge_of(node).map_or(1, |m| m.size)
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> usize {
        let (ra, rb) = (self.find(a), self.find(b));
        let root = ra.min(rb);
        self.parent[ra.max(rb)] = root;
        root
    }
}

/// Working matrix of squared distances between active clusters.
struct Working {
    n: usize,
    sq: Vec<f64>,
}

impl Working {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.n * i - i * (i + 1) / 2 + (j - i - 1)
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.sq[self.idx(i, j)]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.sq[k] = v;
    }
}

/// Converts `(a, b, height)` merges between representative leaf indices
/// into a dendrogram with node ids. `steps` must already be in merge order.
fn label_steps(labels: Vec<String>, steps: &[(usize, usize, f64)]) -> Dendrogram {
    let n = labels.len();
    let mut uf = UnionFind::new(n);
    let mut node_of = (0..n).collect::<Vec<_>>();
    let mut size_of = vec![1usize; n];
    let mut merges = Vec::with_capacity(steps.len());
    for (s, &(a, b, height)) in steps.iter().enumerate() {
        let (ra, rb) = (uf.find(a), uf.find(b));
        let (na, nb) = (node_of[ra], node_of[rb]);
        let size = size_of[ra] + size_of[rb];
        let root = uf.union(ra, rb);
        node_of[root] = n + s;
        size_of[root] = size;
        merges.push(Merge {
            left: na.min(nb),
            right: na.max(nb),
            height,
            size,
        });
    }
    Dendrogram { labels, merges }
}

/// Ward-linkage HAC via the nearest-neighbor chain: O(n^2) time, one
/// condensed working copy of the matrix.
///
/// Ties in the nearest-neighbor search go to the previous chain element,
/// then to the lowest cluster index; merges of equal height keep the order
/// in which the chain found them.
pub fn hac_ward(dm: &DistanceMatrix) -> Result<Dendrogram> {
    let n = dm.len();
    if n < 2 {
        return Err(Error::param("clustering needs at least two entities"));
    }
    if dm.condensed().iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(Error::InvalidMatrix("entries must be finite and nonnegative".into()));
    }
    let mut w = Working {
        n,
        sq: dm.condensed().iter().map(|d| d * d).collect(),
    };
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut chain: Vec<usize> = Vec::with_capacity(n);
    let mut steps: Vec<(usize, usize, f64)> = Vec::with_capacity(n - 1);

    while steps.len() < n - 1 {
        if chain.is_empty() {
            chain.push(active.iter().position(|&a| a).expect("an active cluster remains"));
        }
        let (a, b, d_ab) = loop {
            let a = *chain.last().expect("chain is nonempty");
            let prev = chain.len().checked_sub(2).map(|i| chain[i]);
            let (mut best, mut best_d) = match prev {
                Some(p) => (p, w.get(a, p)),
                None => (usize::MAX, f64::INFINITY),
            };
            for x in 0..n {
                if x == a || !active[x] {
                    continue;
                }
                let d = w.get(a, x);
                if d < best_d || (best == usize::MAX && d == best_d) {
                    best = x;
                    best_d = d;
                }
            }
            if Some(best) == prev {
                break (a, best, best_d);
            }
            chain.push(best);
        };
        chain.pop();
        chain.pop();

        // The merged cluster keeps the lower index.
        let (keep, gone) = (a.min(b), a.max(b));
        let (ni, nj) = (size[keep] as f64, size[gone] as f64);
        for k in 0..n {
            if !active[k] || k == keep || k == gone {
                continue;
            }
            let nk = size[k] as f64;
            let updated = ((ni + nk) * w.get(keep, k) + (nj + nk) * w.get(gone, k) - nk * d_ab) / (ni + nj + nk);
            w.set(keep, k, updated.max(0.0));
        }
        active[gone] = false;
        size[keep] += size[gone];
        steps.push((keep, gone, d_ab.sqrt()));
    }

    steps.sort_by(|x, y| x.2.total_cmp(&y.2));
    Ok(label_steps(dm.labels().to_vec(), &steps))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlatClustering {
    /// Cluster id per leaf; ids are numbered by first leaf occurrence.
    pub labels: Vec<usize>,
    pub k: usize,
}

impl FlatClustering {
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == cluster).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// Undoes the `k - 1` highest merges.
pub fn cut(d: &Dendrogram, k: usize) -> Result<FlatClustering> {
    let n = d.n_leaves();
    if k < 1 || k > n {
        return Err(Error::param(format!("cut k = {k} outside 1..={n}")));
    }
    let mut uf = UnionFind::new(n + d.merges.len());
    for (s, m) in d.merges.iter().take(n - k).enumerate() {
        uf.union(m.left, n + s);
        uf.union(m.right, n + s);
    }
    let mut ids = std::collections::HashMap::new();
    let labels = (0..n)
        .map(|leaf| {
            let root = uf.find(leaf);
            let next = ids.len();
            *ids.entry(root).or_insert(next)
        })
        .collect();
    Ok(FlatClustering { labels, k })
}

/// Dendrogram view limited to the top merge generations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruncatedNode {
    Leaf {
        node: usize,
        entity_id: String,
    },
    /// Collapsed subtree.
    Group {
        node: usize,
        size: usize,
        height: f64,
    },
    Merge {
        node: usize,
        size: usize,
        height: f64,
        children: Vec<TruncatedNode>,
    },
}

impl TruncatedNode {
    pub fn node_count(&self) -> usize {
        match self {
            TruncatedNode::Merge { children, .. } => 1 + children.iter().map(TruncatedNode::node_count).sum::<usize>(),
            _ => 1,
        }
    }

    pub fn size(&self) -> usize {
        match self {
            TruncatedNode::Leaf { .. } => 1,
            TruncatedNode::Group { size, .. } | TruncatedNode::Merge { size, .. } => *size,
        }
    }
}

pub fn truncate(d: &Dendrogram, levels: usize) -> TruncatedNode {
    fn walk(d: &Dendrogram, node: usize, depth: usize, levels: usize) -> TruncatedNode {
        match d.merge_of(node) {
            None => TruncatedNode::Leaf {
                node,
                entity_id: d.labels[node].clone(),
            },
            Some(m) if depth >= levels => TruncatedNode::Group {
                node,
                size: m.size,
                height: m.height,
            },
            Some(m) => TruncatedNode::Merge {
                node,
                size: m.size,
                height: m.height,
                children: vec![walk(d, m.left, depth + 1, levels), walk(d, m.right, depth + 1, levels)],
            },
        }
    }
    walk(d, d.root(), 0, levels)
}

/// Fraction of entities whose cluster's majority label matches their own.
pub fn purity(clusters: &FlatClustering, truth: &[usize]) -> f64 {
    let mut hits = 0;
    for c in 0..clusters.k {
        let mut counts = std::collections::HashMap::new();
        for i in clusters.members(c) {
            *counts.entry(truth[i]).or_insert(0usize) += 1;
        }
        hits += counts.values().copied().max().unwrap_or(0);
    }
    hits as f64 / truth.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("e{i}")).collect()
    }

    fn points(xs: &[f64]) -> DistanceMatrix {
        let rows: Vec<Vec<f64>> = xs.iter().map(|a| xs.iter().map(|b| (a - b).abs()).collect()).collect();
        DistanceMatrix::from_square(labels(xs.len()), &rows).unwrap()
    }

    #[test]
    fn nearest_points_merge_first() {
        let d = hac_ward(&points(&[0.0, 1.0, 10.0])).unwrap();
        assert_eq!((d.merges[0].left, d.merges[0].right), (0, 1));
        assert_eq!(d.merges[0].height, 1.0);
        // Ward height for {0,1} vs {10}: sqrt(2 * 2 * 1 / 3) * |centroid gap| = sqrt(4/3) * 9.5
        let expected = (4.0f64 / 3.0).sqrt() * 9.5;
        assert!((d.merges[1].height - expected).abs() < 1e-12);
        assert_eq!(d.merges[1].size, 3);
    }

    #[test]
    fn zero_distance_pair_merges_at_zero() {
        let d = hac_ward(&points(&[5.0, 5.0, 9.0])).unwrap();
        assert_eq!(d.merges[0].height, 0.0);
        assert_eq!((d.merges[0].left, d.merges[0].right), (0, 1));
    }

    #[test]
    fn rejects_tiny_input() {
        let dm = DistanceMatrix::from_condensed(labels(1), vec![]).unwrap();
        assert!(hac_ward(&dm).is_err());
    }

    #[test]
    fn cuts() {
        let d = hac_ward(&points(&[0.0, 1.0, 10.0, 11.0, 30.0])).unwrap();
        let one = cut(&d, 1).unwrap();
        assert!(one.labels.iter().all(|&l| l == 0));
        let all = cut(&d, 5).unwrap();
        assert_eq!(all.labels, vec![0, 1, 2, 3, 4]);
        let two = cut(&d, 2).unwrap();
        assert_eq!(two.sizes().iter().sum::<usize>(), 5);
        assert_eq!(two.labels[0], two.labels[1]);
        assert!(cut(&d, 0).is_err());
        assert!(cut(&d, 6).is_err());
    }

    #[test]
    fn truncation_shapes() {
        let d = hac_ward(&points(&[0.0, 1.0, 10.0, 11.0, 30.0, 31.5])).unwrap();
        let top = truncate(&d, 1);
        match &top {
            TruncatedNode::Merge { children, size, .. } => {
                assert_eq!(*size, 6);
                assert_eq!(children.len(), 2);
                let k2 = cut(&d, 2).unwrap().sizes();
                let mut got: Vec<_> = children.iter().map(TruncatedNode::size).collect();
                let mut want = k2;
                got.sort();
                want.sort();
                assert_eq!(got, want);
            }
            other => panic!("expected merge at root, got {other:?}"),
        }
        let full = truncate(&d, 5);
        assert_eq!(full.node_count(), 2 * 6 - 1);
    }

    #[test]
    fn purity_counts_majorities() {
        let c = FlatClustering {
            labels: vec![0, 0, 0, 1, 1],
            k: 2,
        };
        assert_eq!(purity(&c, &[0, 0, 1, 1, 1]), 0.8);
    }

    mod props {
        use proptest::prelude::*;

        use super::*;

        fn arb_matrix() -> impl Strategy<Value = DistanceMatrix> {
            (2usize..25).prop_flat_map(|n| {
                prop::collection::vec(0.0f64..1.0, n * (n - 1) / 2)
                    .prop_map(move |data| DistanceMatrix::from_condensed(labels(n), data).unwrap())
            })
        }

        proptest! {
            #[test]
            fn heights_monotone(dm in arb_matrix()) {
                let d = hac_ward(&dm).unwrap();
                prop_assert_eq!(d.merges.len(), dm.len() - 1);
                prop_assert!(d.merges.windows(2).all(|w| w[0].height <= w[1].height));
                prop_assert_eq!(d.merges.last().unwrap().size, dm.len());
            }

            #[test]
            fn cuts_refine(dm in arb_matrix()) {
                let d = hac_ward(&dm).unwrap();
                let n = dm.len();
                for k in 2..=n {
                    let fine = cut(&d, k).unwrap();
                    let coarse = cut(&d, k - 1).unwrap();
                    prop_assert_eq!(fine.sizes().len(), k);
                    prop_assert!(fine.sizes().iter().all(|&s| s > 0));
                    for i in 0..n {
                        for j in 0..n {
                            if fine.labels[i] == fine.labels[j] {
                                prop_assert_eq!(coarse.labels[i], coarse.labels[j]);
                            }
                        }
                    }
                }
            }

            #[test]
            fn permutation_invariant_partitions(dm in arb_matrix(), seed in any::<u64>()) {
                use rand::seq::SliceRandom;
                use rand::SeedableRng;
                let n = dm.len();
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
                let permuted = dm.subset(&perm);
                let a = hac_ward(&dm).unwrap();
                let b = hac_ward(&permuted).unwrap();
                for (x, y) in a.merges.iter().zip(&b.merges) {
                    prop_assert!((x.height - y.height).abs() < 1e-9);
                }
                let k = n.div_ceil(2);
                let ca = cut(&a, k).unwrap();
                let cb = cut(&b, k).unwrap();
                for i in 0..n {
                    for j in 0..n {
                        prop_assert_eq!(
                            ca.labels[perm[i]] == ca.labels[perm[j]],
                            cb.labels[i] == cb.labels[j]
                        );
                    }
                }
            }

            #[test]
            fn truncation_bounded(dm in arb_matrix(), levels in 1usize..8) {
                let d = hac_ward(&dm).unwrap();
                let t = truncate(&d, levels);
                prop_assert!(t.node_count() < 1 << (levels + 1));
                prop_assert_eq!(t.size(), dm.len());
            }
        }
    }
}
