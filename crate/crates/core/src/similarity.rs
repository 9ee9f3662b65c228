//! Burst similarity between entities and the distance matrix fed to
//! clustering.
//!
//! Series are not temporally aligned, so bursts are compared in relative
//! time: every burst is mapped onto `[0, 1)` of its own series before
//! overlap is measured.

use std::io::{self, Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bursts::BurstSet;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelInterval {
    pub start: f64,
    pub end: f64,
    /// Burst peak relative to the entity's highest burst, in `(0, 1]`.
    pub weight: f64,
}

impl RelInterval {
    pub fn len(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelativeBurstProfile {
    pub entity_id: String,
    pub intervals: Vec<RelInterval>,
}

impl RelativeBurstProfile {
    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    fn total_len(&self) -> f64 {
        self.intervals.iter().map(RelInterval::len).sum()
    }

    fn total_mass(&self) -> f64 {
        self.intervals.iter().map(|iv| iv.len() * iv.weight).sum()
    }
}

/// Maps burst `[s, e]` of a length-`L` series onto `[s/L, (e+1)/L)`.
pub fn to_relative_profile(entity_id: &str, bs: &BurstSet) -> RelativeBurstProfile {
    let len = bs.source_length.max(1) as f64;
    let top = bs.bursts.iter().map(|b| b.peak).fold(0.0f64, f64::max);
    let intervals = bs
        .bursts
        .iter()
        .map(|b| RelInterval {
            start: b.start as f64 / len,
            end: (b.end + 1) as f64 / len,
            weight: if top > 0.0 { b.peak / top } else { 1.0 },
        })
        .collect();
    RelativeBurstProfile {
        entity_id: entity_id.to_owned(),
        intervals,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityKind {
    /// Overlap length over union length.
    #[default]
    Jaccard,
    /// Each profile is a step function at its burst weights; ratio of the
    /// integrals of the pointwise min and max.
    PeakWeighted,
}

impl std::str::FromStr for SimilarityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jaccard" => Ok(SimilarityKind::Jaccard),
            "peak-weighted" => Ok(SimilarityKind::PeakWeighted),
            other => Err(Error::param(format!("unknown similarity `{other}`"))),
        }
    }
}

/// Two-pointer sweep over both sorted interval lists. Calls `f` with each
/// pairwise overlap in position order; the sweep is the same whichever
/// profile comes first.
fn for_each_overlap(a: &[RelInterval], b: &[RelInterval], mut f: impl FnMut(f64, &RelInterval, &RelInterval)) {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let lo = a[i].start.max(b[j].start);
        let hi = a[i].end.min(b[j].end);
        if hi > lo {
            f(hi - lo, &a[i], &b[j]);
        }
        if a[i].end < b[j].end {
            i += 1;
        } else if b[j].end < a[i].end {
            j += 1;
        } else {
            i += 1;
            j += 1;
        }
    }
}

/// Burst similarity with the default (Jaccard) overlap.
pub fn bsim(a: &RelativeBurstProfile, b: &RelativeBurstProfile) -> f64 {
    bsim_with(a, b, SimilarityKind::Jaccard)
}

pub fn bsim_with(a: &RelativeBurstProfile, b: &RelativeBurstProfile, kind: SimilarityKind) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let (inter, union) = match kind {
        SimilarityKind::Jaccard => {
            let mut inter = 0.0;
            for_each_overlap(&a.intervals, &b.intervals, |len, _, _| inter += len);
            (inter, a.total_len() + b.total_len() - inter)
        }
        SimilarityKind::PeakWeighted => {
            let mut min_mass = 0.0;
            for_each_overlap(&a.intervals, &b.intervals, |len, x, y| min_mass += len * x.weight.min(y.weight));
            (min_mass, a.total_mass() + b.total_mass() - min_mass)
        }
    };
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Pairwise dissimilarities in condensed upper-triangular form.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
    labels: Vec<String>,
}

#[inline]
fn condensed_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    n * i - i * (i + 1) / 2 + (j - i - 1)
}

impl DistanceMatrix {
    pub fn from_condensed(labels: Vec<String>, data: Vec<f64>) -> Result<Self> {
        let n = labels.len();
        if data.len() != n * n.saturating_sub(1) / 2 {
            return Err(Error::InvalidMatrix(format!(
                "condensed length {} does not match n = {n}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|d| !d.is_finite() || **d < 0.0) {
            return Err(Error::InvalidMatrix(format!("entry {bad} is not a finite nonnegative distance")));
        }
        Ok(DistanceMatrix { n, data, labels })
    }

    /// Accepts a full square matrix; it must be symmetric with a zero
    /// diagonal.
    pub fn from_square(labels: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let n = labels.len();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidMatrix("matrix is not n x n".into()));
        }
        let mut data = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            if rows[i][i] != 0.0 {
                return Err(Error::InvalidMatrix(format!("nonzero diagonal at {i}")));
            }
            for j in i + 1..n {
                if rows[i][j] != rows[j][i] {
                    return Err(Error::InvalidMatrix(format!("asymmetric at ({i}, {j})")));
                }
                data.push(rows[i][j]);
            }
        }
        Self::from_condensed(labels, data)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn condensed(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Less => self.data[condensed_index(self.n, i, j)],
            std::cmp::Ordering::Greater => self.data[condensed_index(self.n, j, i)],
        }
    }

    pub fn max_entry(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// Restricts the matrix to the given rows, in the given order.
    pub fn subset(&self, idx: &[usize]) -> DistanceMatrix {
        let mut data = Vec::with_capacity(idx.len() * idx.len().saturating_sub(1) / 2);
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                data.push(self.get(i, j));
            }
        }
        DistanceMatrix {
            n: idx.len(),
            data,
            labels: idx.iter().map(|&i| self.labels[i].clone()).collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("entity_id");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for i in 0..self.n {
            out.push_str(&self.labels[i]);
            for j in 0..self.n {
                out.push(',');
                out.push_str(&format!("{}", self.get(i, j)));
            }
            out.push('\n');
        }
        out
    }
}

/// Splits the condensed buffer into one mutable slice per row.
fn rows_mut(data: &mut [f64], n: usize) -> Vec<(usize, &mut [f64])> {
    let mut rows = Vec::with_capacity(n);
    let mut rest = data;
    for i in 0..n.saturating_sub(1) {
        let (row, tail) = rest.split_at_mut(n - 1 - i);
        rows.push((i, row));
        rest = tail;
    }
    rows
}

/// L2 norm of every row of the full similarity matrix (diagonal included).
fn row_norms(profiles: &[RelativeBurstProfile], kind: SimilarityKind) -> Vec<f64> {
    profiles
        .par_iter()
        .map(|p| profiles.iter().map(|q| bsim_with(p, q, kind).powi(2)).sum::<f64>().sqrt())
        .collect()
}

/// Distance between `i` and `j` from their raw similarity and row norms.
///
/// Rows are L2-normalized and symmetrized, then divided by the larger of the
/// two normalized self-similarities so that identical profiles land at
/// distance 0 and every entry stays in `[0, 1]`.
#[inline]
fn adjusted_distance(sim: f64, self_i: f64, norm_i: f64, self_j: f64, norm_j: f64) -> f64 {
    let si = self_i / norm_i;
    let sj = self_j / norm_j;
    let sym = 0.5 * (sim / norm_i + sim / norm_j);
    let scale = si.max(sj);
    if scale <= 0.0 {
        return 1.0;
    }
    (1.0 - sym / scale).clamp(0.0, 1.0)
}

pub fn build_distance_matrix(profiles: &[RelativeBurstProfile]) -> Result<DistanceMatrix> {
    build_distance_matrix_with(profiles, SimilarityKind::Jaccard)
}

pub fn build_distance_matrix_with(profiles: &[RelativeBurstProfile], kind: SimilarityKind) -> Result<DistanceMatrix> {
    let n = profiles.len();
    if n < 2 {
        return Err(Error::param("distance matrix needs at least two entities"));
    }
    let norms = row_norms(profiles, kind);
    let selfs: Vec<f64> = profiles.iter().map(|p| bsim_with(p, p, kind)).collect();
    let mut data = vec![0.0; n * (n - 1) / 2];
    rows_mut(&mut data, n).into_par_iter().for_each(|(i, row)| {
        for (off, cell) in row.iter_mut().enumerate() {
            let j = i + 1 + off;
            let sim = bsim_with(&profiles[i], &profiles[j], kind);
            *cell = adjusted_distance(sim, selfs[i], norms[i], selfs[j], norms[j]);
        }
    });
    Ok(DistanceMatrix {
        n,
        data,
        labels: profiles.iter().map(|p| p.entity_id.clone()).collect(),
    })
}

/// Row-normalized `1 - SM` before symmetrization, as a dense row-major
/// `n x n` matrix. Asymmetric in general, with a nonzero diagonal.
pub fn raw_distance_rows(profiles: &[RelativeBurstProfile], kind: SimilarityKind) -> Vec<Vec<f64>> {
    let norms = row_norms(profiles, kind);
    profiles
        .par_iter()
        .zip(&norms)
        .map(|(p, &norm)| profiles.iter().map(|q| 1.0 - bsim_with(p, q, kind) / norm).collect())
        .collect()
}

pub fn raw_distance_csv(profiles: &[RelativeBurstProfile], kind: SimilarityKind) -> String {
    let rows = raw_distance_rows(profiles, kind);
    let mut out = String::from("entity_id");
    for p in profiles {
        out.push(',');
        out.push_str(&p.entity_id);
    }
    out.push('\n');
    for (p, row) in profiles.iter().zip(rows) {
        out.push_str(&p.entity_id);
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// Binary tile format: a 32-byte header (`EMDMTILE`, version, reserved,
/// `n`, tile size; all little-endian) followed by the square tiles
/// `(bi, bj)` with `bi <= bj` in row-major block order. Each tile holds the
/// full rectangular block of the symmetric matrix, rows then columns, as
/// little-endian `f64`.
pub mod tiles {
    use super::*;

    pub const MAGIC: &[u8; 8] = b"EMDMTILE";
    pub const VERSION: u32 = 1;
    pub const HEADER_LEN: usize = 32;

    #[derive(Clone, Copy, Debug, PartialEq, Eq)]
    pub struct Header {
        pub n: u64,
        pub tile: u64,
    }

    fn write_header<W: Write>(w: &mut W, h: Header) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&0u32.to_le_bytes())?;
        w.write_all(&h.n.to_le_bytes())?;
        w.write_all(&h.tile.to_le_bytes())
    }

    pub fn read_header<R: Read>(r: &mut R) -> Result<Header> {
        let mut buf = [0u8; HEADER_LEN];
        r.read_exact(&mut buf)?;
        if &buf[..8] != MAGIC {
            return Err(Error::InvalidMatrix("bad tile file magic".into()));
        }
        let version = u32::from_le_bytes(buf[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::InvalidMatrix(format!("unsupported tile version {version}")));
        }
        let n = u64::from_le_bytes(buf[16..24].try_into().expect("8 bytes"));
        let tile = u64::from_le_bytes(buf[24..32].try_into().expect("8 bytes"));
        if tile == 0 {
            return Err(Error::InvalidMatrix("tile size 0".into()));
        }
        Ok(Header { n, tile })
    }

    fn blocks(n: usize, tile: usize) -> Vec<(usize, usize)> {
        let nb = n.div_ceil(tile);
        (0..nb).flat_map(|bi| (bi..nb).map(move |bj| (bi, bj))).collect()
    }

    fn tile_bytes(n: usize, tile: usize, bi: usize, bj: usize, get: impl Fn(usize, usize) -> f64) -> Vec<u8> {
        let rows = bi * tile..((bi + 1) * tile).min(n);
        let cols = bj * tile..((bj + 1) * tile).min(n);
        let mut out = Vec::with_capacity(rows.len() * cols.len() * 8);
        for i in rows {
            for j in cols.clone() {
                out.extend_from_slice(&get(i, j).to_le_bytes());
            }
        }
        out
    }

    pub fn write_matrix<W: Write>(w: &mut W, dm: &DistanceMatrix, tile: usize) -> Result<()> {
        if tile == 0 {
            return Err(Error::param("tile size must be positive"));
        }
        let n = dm.len();
        write_header(
            w,
            Header {
                n: n as u64,
                tile: tile as u64,
            },
        )?;
        for (bi, bj) in blocks(n, tile) {
            w.write_all(&tile_bytes(n, tile, bi, bj, |i, j| dm.get(i, j)))?;
        }
        Ok(())
    }

    /// Computes the adjusted distance matrix tile by tile and streams it to
    /// `w` without materializing it. At most `max_resident` tiles are held
    /// in memory at once; output bytes do not depend on the worker count.
    pub fn stream_matrix<W: Write>(
        w: &mut W,
        profiles: &[RelativeBurstProfile],
        kind: SimilarityKind,
        tile: usize,
        max_resident: usize,
    ) -> Result<()> {
        if tile == 0 {
            return Err(Error::param("tile size must be positive"));
        }
        let n = profiles.len();
        if n < 2 {
            return Err(Error::param("distance matrix needs at least two entities"));
        }
        let norms = row_norms(profiles, kind);
        let selfs: Vec<f64> = profiles.iter().map(|p| bsim_with(p, p, kind)).collect();
        let get = |i: usize, j: usize| {
            if i == j {
                0.0
            } else {
                let sim = bsim_with(&profiles[i], &profiles[j], kind);
                adjusted_distance(sim, selfs[i], norms[i], selfs[j], norms[j])
            }
        };
        write_header(
            w,
            Header {
                n: n as u64,
                tile: tile as u64,
            },
        )?;
        let all = blocks(n, tile);
        for batch in all.chunks(max_resident.max(1)) {
            let bufs: Vec<Vec<u8>> = batch
                .par_iter()
                .map(|&(bi, bj)| tile_bytes(n, tile, bi, bj, get))
                .collect();
            for b in bufs {
                w.write_all(&b)?;
            }
        }
        Ok(())
    }

    pub fn read_matrix<R: Read>(r: &mut R, labels: Vec<String>) -> Result<DistanceMatrix> {
        let h = read_header(r)?;
        let n = h.n as usize;
        let tile = h.tile as usize;
        if labels.len() != n {
            return Err(Error::InvalidMatrix(format!("{} labels for n = {n}", labels.len())));
        }
        let mut data = vec![0.0; n * n.saturating_sub(1) / 2];
        let mut cell = [0u8; 8];
        for (bi, bj) in blocks(n, tile) {
            for i in bi * tile..((bi + 1) * tile).min(n) {
                for j in bj * tile..((bj + 1) * tile).min(n) {
                    r.read_exact(&mut cell)?;
                    if i < j {
                        data[condensed_index(n, i, j)] = f64::from_le_bytes(cell);
                    }
                }
            }
        }
        DistanceMatrix::from_condensed(labels, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bursts::Burst;

    fn profile(id: &str, ivs: &[(f64, f64)]) -> RelativeBurstProfile {
        RelativeBurstProfile {
            entity_id: id.into(),
            intervals: ivs
                .iter()
                .map(|&(start, end)| RelInterval { start, end, weight: 1.0 })
                .collect(),
        }
    }

    fn burst_set(len: usize, bursts: &[(usize, usize)]) -> BurstSet {
        BurstSet {
            bursts: bursts
                .iter()
                .map(|&(start, end)| Burst { start, end, peak: 1.0 })
                .collect(),
            source_length: len,
            source_sum: 1.0,
            window: 7,
            cutoff_sigma: 1.5,
            threshold: 0.0,
        }
    }

    #[test]
    fn relative_profile_examples() {
        let p = to_relative_profile("E", &burst_set(10, &[(2, 3)]));
        assert_eq!((p.intervals[0].start, p.intervals[0].end), (0.2, 0.4));
        assert!(to_relative_profile("E", &burst_set(10, &[])).is_empty());
        let full = to_relative_profile("E", &burst_set(10, &[(0, 9)]));
        assert_eq!((full.intervals[0].start, full.intervals[0].end), (0.0, 1.0));
    }

    #[test]
    fn bsim_examples() {
        let a = profile("a", &[(0.1, 0.3), (0.6, 0.7)]);
        assert_eq!(bsim(&a, &a), 1.0);
        assert_eq!(bsim(&profile("a", &[(0.0, 0.2)]), &profile("b", &[(0.5, 0.7)])), 0.0);
        let half = bsim(&profile("a", &[(0.0, 2.0 / 3.0)]), &profile("b", &[(1.0 / 3.0, 1.0)]));
        assert!((half - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(bsim(&profile("a", &[]), &profile("b", &[])), 1.0);
        assert_eq!(bsim(&profile("a", &[]), &a), 0.0);
    }

    #[test]
    fn peak_weighted_reduces_to_jaccard_at_unit_weights() {
        let a = profile("a", &[(0.0, 0.5)]);
        let b = profile("b", &[(0.25, 0.75)]);
        assert_eq!(bsim_with(&a, &b, SimilarityKind::PeakWeighted), bsim(&a, &b));
        let mut c = b.clone();
        c.intervals[0].weight = 0.5;
        // min mass 0.25 * 0.5; max mass 0.5 + 0.25 - 0.125
        let expected = 0.125 / 0.625;
        assert!((bsim_with(&a, &c, SimilarityKind::PeakWeighted) - expected).abs() < 1e-12);
    }

    #[test]
    fn identical_pair_has_zero_distance() {
        let p = profile("a", &[(0.0, 0.3)]);
        let mut q = p.clone();
        q.entity_id = "b".into();
        let dm = build_distance_matrix(&[p, q]).unwrap();
        assert_eq!(dm.get(0, 1), 0.0);
    }

    #[test]
    fn disjoint_pair_is_farthest() {
        let ps = vec![
            profile("a", &[(0.0, 0.2)]),
            profile("b", &[(0.5, 0.7)]),
            profile("c", &[(0.1, 0.3)]),
        ];
        let dm = build_distance_matrix(&ps).unwrap();
        assert_eq!(dm.get(0, 1), 1.0);
        assert_eq!(dm.get(0, 1), dm.max_entry());
    }

    #[test]
    fn early_late_groups_separate() {
        let ps = vec![
            profile("e1", &[(0.0, 0.1)]),
            profile("e2", &[(0.02, 0.12)]),
            profile("l1", &[(0.9, 1.0)]),
            profile("l2", &[(0.85, 0.97)]),
        ];
        let dm = build_distance_matrix(&ps).unwrap();
        let within = dm.get(0, 1).max(dm.get(2, 3));
        let between = [(0, 2), (0, 3), (1, 2), (1, 3)].map(|(i, j)| dm.get(i, j));
        assert!(between.iter().all(|&b| b > within));
    }

    #[test]
    fn too_few_profiles() {
        assert!(build_distance_matrix(&[profile("a", &[])]).is_err());
    }

    #[test]
    fn square_validation() {
        let labels = vec!["a".to_string(), "b".to_string()];
        assert!(DistanceMatrix::from_square(labels.clone(), &[vec![0.0, 1.0], vec![2.0, 0.0]]).is_err());
        assert!(DistanceMatrix::from_square(labels.clone(), &[vec![1.0, 1.0], vec![1.0, 0.0]]).is_err());
        assert!(DistanceMatrix::from_square(labels, &[vec![0.0, -1.0], vec![-1.0, 0.0]]).is_err());
    }

    #[test]
    fn tiles_round_trip_and_stream_agree() {
        let ps: Vec<_> = (0..23)
            .map(|i| {
                let s = (i % 7) as f64 / 10.0;
                profile(&format!("e{i}"), &[(s, s + 0.15), (0.8, 0.8 + (i % 3) as f64 / 20.0 + 0.01)])
            })
            .collect();
        let dm = build_distance_matrix(&ps).unwrap();
        let mut a = Vec::new();
        tiles::write_matrix(&mut a, &dm, 5).unwrap();
        let mut b = Vec::new();
        tiles::stream_matrix(&mut b, &ps, SimilarityKind::Jaccard, 5, 2).unwrap();
        assert_eq!(a, b);
        let back = tiles::read_matrix(&mut a.as_slice(), dm.labels().to_vec()).unwrap();
        assert_eq!(back, dm);
    }

    mod props {
        use proptest::prelude::*;

        use super::super::*;

        fn arb_profile() -> impl Strategy<Value = RelativeBurstProfile> {
            prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 0..6).prop_map(|cuts| {
                let mut pts: Vec<f64> = cuts.into_iter().flat_map(|(a, b)| [a, b]).collect();
                pts.sort_by(f64::total_cmp);
                pts.dedup();
                let intervals = pts
                    .chunks_exact(2)
                    .map(|w| RelInterval { start: w[0], end: w[1], weight: 1.0 })
                    .collect();
                RelativeBurstProfile { entity_id: String::new(), intervals }
            })
        }

        proptest! {
            #[test]
            fn bsim_rescaling_invariant(a in arb_profile(), b in arb_profile(), scale in 0.1f64..1.0) {
                let shrink = |p: &RelativeBurstProfile| RelativeBurstProfile {
                    entity_id: p.entity_id.clone(),
                    intervals: p.intervals.iter().map(|iv| RelInterval { start: iv.start * scale, end: iv.end * scale, weight: 1.0 }).collect(),
                };
                prop_assert!((bsim(&a, &b) - bsim(&shrink(&a), &shrink(&b))).abs() < 1e-9);
            }

            #[test]
            fn matrix_entries_in_range(ps in prop::collection::vec(arb_profile(), 2..12)) {
                let dm = build_distance_matrix(&ps).unwrap();
                for i in 0..ps.len() {
                    prop_assert_eq!(dm.get(i, i), 0.0);
                    for j in 0..ps.len() {
                        let d = dm.get(i, j);
                        prop_assert!((0.0..=1.0).contains(&d));
                        prop_assert_eq!(d, dm.get(j, i));
                    }
                }
            }
        }
    }
}
