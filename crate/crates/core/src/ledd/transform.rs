//! Target transforms: signed log and percentile clamping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `sign(x) · ln(1 + |x|)`.
pub fn signed_log(x: f64) -> f64 {
    x.signum() * x.abs().ln_1p()
}

/// Inverse of [`signed_log`].
pub fn signed_exp(y: f64) -> f64 {
    y.signum() * y.abs().exp_m1()
}

/// Linear interpolation between order statistics at position `(n − 1)·p`.
/// `sorted` must be ascending and non-empty.
pub fn interpolated_quantile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sorted_copy(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WinsorBounds {
    pub lo: f64,
    pub hi: f64,
}

impl WinsorBounds {
    pub fn fit(xs: &[f64], lo_pct: f64, hi_pct: f64) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::Empty("winsorize input"));
        }
        if !(0.0..=1.0).contains(&lo_pct) || !(0.0..=1.0).contains(&hi_pct) || lo_pct >= hi_pct {
            return Err(Error::invalid(format!(
                "need 0 <= lo < hi <= 1, got ({lo_pct}, {hi_pct})"
            )));
        }
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("winsorize input contains non-finite values"));
        }
        let sorted = sorted_copy(xs);
        Ok(Self {
            lo: interpolated_quantile(&sorted, lo_pct),
            hi: interpolated_quantile(&sorted, hi_pct),
        })
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    pub fn apply(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.clamp(x)).collect()
    }
}

/// Clamps `xs` to its own `lo_pct` and `hi_pct` interpolated quantiles.
pub fn winsorize(xs: &[f64], lo_pct: f64, hi_pct: f64) -> Result<Vec<f64>> {
    Ok(WinsorBounds::fit(xs, lo_pct, hi_pct)?.apply(xs))
}

/// How targets are clamped when building supervised samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WinsorPolicy {
    /// Fit bounds on every produced target.
    FitAll {
        lo_pct: f64,
        hi_pct: f64,
    },
    /// Apply externally fitted bounds (e.g. from a training partition).
    Fixed(WinsorBounds),
    Skip,
}

impl Default for WinsorPolicy {
    fn default() -> Self {
        WinsorPolicy::FitAll {
            lo_pct: 0.05,
            hi_pct: 0.95,
        }
    }
}
