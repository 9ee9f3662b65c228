use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{interpolate, standardize};

/// Pointwise mean and population std of a group's standardized series,
/// each stretched so first mention and incorporation line up.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSignature {
    pub length: usize,
    pub mean_curve: Vec<f64>,
    pub std_curve: Vec<f64>,
    pub n_members: usize,
}

impl GroupSignature {
    /// Relative position in `[0, 1]` of the mean curve's maximum.
    pub fn argmax_position(&self) -> f64 {
        let (idx, _) = self
            .mean_curve
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
        if self.length <= 1 {
            0.0
        } else {
            idx as f64 / (self.length - 1) as f64
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("position,mean,std\n");
        let denom = (self.length.max(2) - 1) as f64;
        for (i, (m, s)) in self.mean_curve.iter().zip(&self.std_curve).enumerate() {
            out.push_str(&format!("{},{},{}\n", i as f64 / denom, m, s));
        }
        out
    }
}

/// `length` defaults to the longest member.
pub fn group_signature<I, S>(series: I, length: Option<usize>) -> Result<GroupSignature>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[f64]>,
{
    let members: Vec<S> = series.into_iter().collect();
    if members.is_empty() {
        return Err(Error::EmptyGroup);
    }
    if members.iter().any(|m| m.as_ref().is_empty()) {
        return Err(Error::param("group member with an empty series"));
    }
    let len = length.unwrap_or_else(|| members.iter().map(|m| m.as_ref().len()).max().unwrap_or(1));
    if len == 0 {
        return Err(Error::param("signature length must be positive"));
    }

    // Welford accumulation keeps memory at O(len) for large groups.
    let mut mean = vec![0.0; len];
    let mut m2 = vec![0.0; len];
    for (k, member) in members.iter().enumerate() {
        let z = standardize(member.as_ref());
        let stretched = if len == 1 && z.len() > 1 {
            vec![z[0]]
        } else {
            interpolate(&z, len)?
        };
        let count = (k + 1) as f64;
        for ((mu, acc), x) in mean.iter_mut().zip(m2.iter_mut()).zip(stretched) {
            let delta = x - *mu;
            *mu += delta / count;
            *acc += delta * (x - *mu);
        }
    }
    let n = members.len() as f64;
    Ok(GroupSignature {
        length: len,
        std_curve: m2.iter().map(|v| (v / n).max(0.0).sqrt()).collect(),
        mean_curve: mean,
        n_members: members.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_members() {
        let x = vec![0.0, 3.0, 1.0, 0.0];
        let sig = group_signature(vec![x.clone(), x.clone(), x.clone()], None).unwrap();
        assert_eq!(sig.mean_curve, standardize(&x));
        assert!(sig.std_curve.iter().all(|&s| s == 0.0));
        assert_eq!(sig.n_members, 3);
    }

    #[test]
    fn mirrored_members_cancel() {
        let a = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let b: Vec<f64> = a.iter().rev().copied().collect();
        let sig = group_signature([a, b], None).unwrap();
        assert!(sig.mean_curve[2].abs() < 1e-12);
    }

    #[test]
    fn single_member_reproduces_input() {
        let x = vec![1.0, 5.0, 2.0];
        let sig = group_signature([x.clone()], Some(7)).unwrap();
        assert_eq!(sig.mean_curve, interpolate(&standardize(&x), 7).unwrap());
    }

    #[test]
    fn stretches_to_longest_member() {
        let sig = group_signature([vec![1.0, 2.0], vec![1.0, 2.0, 3.0, 4.0, 0.0]], None).unwrap();
        assert_eq!(sig.length, 5);
        assert!(sig.std_curve.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn empty_group_errors() {
        assert!(matches!(group_signature(Vec::<Vec<f64>>::new(), None), Err(Error::EmptyGroup)));
    }
}
