//! Cohort generator configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Horizon, FEATURE_NAMES};
use crate::error::{Error, Result};

const DEFAULT_SPEC: &str = include_str!("../../data/default_cohort.json");

/// Fixed standardization applied before the linear ground-truth functions,
/// in feature order.
pub const FEATURE_CENTERS: [f64; 9] = [78.0, 0.5, 400.0, 4.0, 60.0, 300.0, 400.0, 3.0, 0.0];
pub const FEATURE_SCALES: [f64; 9] = [10.6, 0.5, 200.0, 3.0, 60.0, 300.0, 200.0, 3.0, 0.2];

/// `intercept + coefficients · x̃` over the standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFn {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LinearFn {
    pub fn eval_standardized(&self, z: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(z)
                .map(|(c, v)| c * v)
                .sum::<f64>()
    }
}

pub fn standardize(x: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(FEATURE_CENTERS.iter().zip(&FEATURE_SCALES))
        .map(|(v, (c, s))| (v - c) / s)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortSpec {
    pub n_patients: usize,
    /// Inclusive range of index visits per patient.
    pub visits_per_patient: [usize; 2],
    /// Logit of the probability that the change is exactly zero.
    pub zero_prob_fn: LinearFn,
    /// When set, the zero-probability intercept is re-solved so the mean
    /// zero probability over the generated features hits this rate.
    #[serde(default)]
    pub target_zero_rate: Option<f64>,
    /// Conditional mean of the raw non-zero fractional change.
    pub effect_fn: LinearFn,
    pub noise_sd_base: f64,
    pub horizon_noise_multiplier: BTreeMap<Horizon, f64>,
    /// Percentile clamp applied to transformed targets, per horizon; `None` disables it.
    #[serde(default)]
    pub winsorize: Option<(f64, f64)>,
    pub seed: u64,
}

impl CohortSpec {
    pub fn bundled() -> Self {
        serde_json::from_str(DEFAULT_SPEC).expect("bundled cohort spec is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: CohortSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn horizons(&self) -> Vec<Horizon> {
        self.horizon_noise_multiplier.keys().copied().collect()
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.visits_per_patient;
        if self.n_patients == 0 || lo == 0 || lo > hi {
            return Err(Error::invalid(
                "cohort needs patients and a non-empty visit range starting at 1 or more",
            ));
        }
        for (name, f) in [
            ("zero_prob_fn", &self.zero_prob_fn),
            ("effect_fn", &self.effect_fn),
        ] {
            if f.coefficients.len() != FEATURE_NAMES.len() {
                return Err(Error::ArityMismatch {
                    expected: FEATURE_NAMES.len(),
                    found: f.coefficients.len(),
                });
            }
            if !f.intercept.is_finite() || f.coefficients.iter().any(|c| !c.is_finite()) {
                return Err(Error::invalid(format!(
                    "{name} has non-finite coefficients"
                )));
            }
        }
        if let Some(rate) = self.target_zero_rate {
            if !(rate > 0.0 && rate < 1.0) {
                return Err(Error::invalid(format!(
                    "target_zero_rate must lie in (0, 1), got {rate}"
                )));
            }
        }
        if !(self.noise_sd_base > 0.0 && self.noise_sd_base.is_finite()) {
            return Err(Error::invalid("noise_sd_base must be positive"));
        }
        if self.horizon_noise_multiplier.is_empty() {
            return Err(Error::invalid("at least one horizon is required"));
        }
        let mut prev = 0.0;
        for (h, &m) in &self.horizon_noise_multiplier {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(Error::invalid(format!(
                    "noise multiplier for {h} must be non-negative"
                )));
            }
            if m < prev {
                return Err(Error::invalid(
                    "noise multipliers must be non-decreasing from 6M to 4Y",
                ));
            }
            prev = m;
        }
        if let Some((lo, hi)) = self.winsorize {
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
                return Err(Error::invalid(
                    "winsorize percentiles must satisfy 0 <= lo < hi <= 1",
                ));
            }
        }
        Ok(())
    }
}
