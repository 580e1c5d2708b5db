//! Finite-sample-corrected order statistics.

use crate::error::{Error, Result};

/// 1-based rank `clamp(⌈level·(n+1)⌉, 1, n)`.
pub fn conformal_rank(n: usize, level: f64) -> usize {
    // The small guard keeps exact products such as 0.8·5 from rounding up to 5.
    let k = (level * (n as f64 + 1.0) - 1e-9).ceil();
    if k.is_nan() || k < 1.0 {
        1
    } else {
        (k as usize).min(n)
    }
}

/// The `conformal_rank(n, level)`-th smallest score.
pub fn conformal_quantile(scores: &[f64], level: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Empty("conformity scores"));
    }
    let mut buf = scores.to_vec();
    Ok(kth_smallest(&mut buf, conformal_rank(scores.len(), level)))
}

/// Rank-`k` (1-based) order statistic; reorders `values`.
pub(crate) fn kth_smallest(values: &mut [f64], k: usize) -> f64 {
    let (_, v, _) = values.select_nth_unstable_by(k - 1, f64::total_cmp);
    *v
}

/// Upper conformal bound of `values`: its `level` conformal quantile.
pub(crate) fn upper_quantile(values: &mut [f64], level: f64) -> f64 {
    let k = conformal_rank(values.len(), level);
    kth_smallest(values, k)
}

/// Lower conformal bound: the mirror image, `−q_level(−values)`.
pub(crate) fn lower_quantile(values: &mut [f64], level: f64) -> f64 {
    let n = values.len();
    let k = conformal_rank(n, level);
    kth_smallest(values, n + 1 - k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(conformal_quantile(&[1.0, 2.0, 3.0, 4.0], 0.8).unwrap(), 4.0);
        assert_eq!(conformal_quantile(&[3.0, 1.0, 2.0], 1.0).unwrap(), 3.0);
        assert_eq!(conformal_quantile(&[5.0], 0.1).unwrap(), 5.0);
        let nine: Vec<f64> = (1..=9).map(f64::from).collect();
        assert_eq!(conformal_quantile(&nine, 0.8).unwrap(), 8.0);
        assert_eq!(conformal_quantile(&[1.0, 3.0], 0.8).unwrap(), 3.0);
        assert!(conformal_quantile(&[], 0.5).is_err());
    }

    #[test]
    fn rank_guard_only_absorbs_rounding() {
        assert_eq!(conformal_rank(4, 0.8), 4);
        assert_eq!(conformal_rank(9, 0.8), 8);
        assert_eq!(conformal_rank(10, 0.8), 9);
        assert_eq!(conformal_rank(10, 0.0), 1);
    }

    #[test]
    fn lower_mirrors_upper() {
        let v = [4.0, -1.0, 2.5, 7.0, 0.0];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        for level in [0.1, 0.5, 0.8, 1.0] {
            let lo = lower_quantile(&mut v.to_vec(), level);
            assert_eq!(lo, -conformal_quantile(&neg, level).unwrap());
        }
    }
}
