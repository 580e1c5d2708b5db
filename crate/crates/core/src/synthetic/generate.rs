//! Zero-inflated cohorts with known conditional structure.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::conformal::PredictionInterval;
use crate::data::{Dataset, Horizon, SupervisedSample};
use crate::error::Result;
use crate::learners::sigmoid;
use crate::ledd::{signed_log, WinsorBounds};
use crate::synthetic::spec::{standardize, CohortSpec};

pub const AGE_MEAN: f64 = 77.98;
pub const AGE_SD: f64 = 10.59;
pub const AGE_RANGE: (f64, f64) = (40.0, 100.0);
pub const MALE_FRACTION: f64 = 0.645;
/// Probability that LEDD is unchanged between consecutive history visits.
const HISTORY_HOLD_PROB: f64 = 0.7;

/// One index visit and the random numbers that decide its outcome.
#[derive(Debug, Clone)]
struct IndexVisit {
    patient: usize,
    date: NaiveDate,
    features: Vec<f64>,
    zero_u: f64,
    noise_z: f64,
}

fn truncated_normal<R: Rng>(rng: &mut R, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        let v = mean + sd * z;
        if (lo..=hi).contains(&v) {
            return v;
        }
    }
}

fn patient_visits(spec: &CohortSpec, patient: usize) -> Vec<IndexVisit> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(patient as u64 + 1);

    let [lo, hi] = spec.visits_per_patient;
    let n_visits = rng.random_range(lo..=hi);
    let age0 = truncated_normal(&mut rng, AGE_MEAN, AGE_SD, AGE_RANGE.0, AGE_RANGE.1);
    let sex = if rng.random::<f64>() < MALE_FRACTION {
        1.0
    } else {
        0.0
    };
    let base_ledd = LogNormal::new(400f64.ln(), 0.45)
        .expect("valid")
        .sample(&mut rng);
    let stay = LogNormal::new(3.5f64.ln(), 0.6).expect("valid");
    let start = NaiveDate::from_ymd_opt(2012, 1, 1).expect("valid")
        + Duration::days(rng.random_range(0..2000));

    let mut out = Vec::with_capacity(n_visits);
    let mut day = 0i64;
    let mut ledd = base_ledd;
    let mut ledd_sum = 0.0;
    for i in 0..n_visits {
        let gap = if i == 0 {
            0
        } else {
            rng.random_range(14..=180)
        };
        day += gap;
        let prev = ledd;
        if i > 0 && rng.random::<f64>() >= HISTORY_HOLD_PROB {
            let step: f64 = StandardNormal.sample(&mut rng);
            ledd *= (0.2 * step).exp();
        }
        ledd_sum += ledd;
        let recent = if i == 0 {
            0.0
        } else {
            signed_log((ledd - prev) / prev)
        };
        let features = vec![
            age0 + day as f64 / 365.25,
            sex,
            ledd_sum / (i + 1) as f64,
            stay.sample(&mut rng),
            gap as f64,
            day as f64,
            ledd,
            i as f64,
            recent,
        ];
        out.push(IndexVisit {
            patient,
            date: start + Duration::days(day),
            features,
            zero_u: rng.random(),
            noise_z: StandardNormal.sample(&mut rng),
        });
    }
    out
}

/// Known conditional structure of a generated cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: CohortSpec,
    /// Zero-probability intercept actually used.
    pub zero_intercept: f64,
    /// Target clamp per horizon, when enabled.
    pub bounds: BTreeMap<Horizon, WinsorBounds>,
}

impl GroundTruth {
    /// `P(change = 0 | x)`.
    pub fn zero_prob(&self, x: &[f64]) -> f64 {
        let z = standardize(x);
        let f = &self.spec.zero_prob_fn;
        sigmoid(
            self.zero_intercept
                + f.coefficients
                    .iter()
                    .zip(&z)
                    .map(|(c, v)| c * v)
                    .sum::<f64>(),
        )
    }

    /// Mean of the raw fractional change given that it is non-zero.
    pub fn conditional_mean(&self, x: &[f64]) -> f64 {
        self.spec.effect_fn.eval_standardized(&standardize(x))
    }

    pub fn noise_sd(&self, horizon: Horizon) -> f64 {
        self.spec.noise_sd_base
            * self
                .spec
                .horizon_noise_multiplier
                .get(&horizon)
                .copied()
                .unwrap_or(1.0)
    }

    /// Maps a raw change onto the target scale (signed log, then clamp).
    pub fn transform(&self, horizon: Horizon, raw: f64) -> f64 {
        let t = signed_log(raw);
        self.bounds.get(&horizon).map_or(t, |b| b.clamp(t))
    }

    /// Conditional median of the non-zero target: the transformed mean.
    pub fn location(&self, x: &[f64], horizon: Horizon) -> f64 {
        self.transform(horizon, self.conditional_mean(x))
    }

    /// Conditional `p`-quantile of the non-zero target.
    pub fn conditional_quantile(&self, x: &[f64], horizon: Horizon, p: f64) -> f64 {
        let sd = self.noise_sd(horizon);
        let mean = self.conditional_mean(x);
        if sd == 0.0 {
            return self.transform(horizon, mean);
        }
        let raw = Normal::new(mean, sd).expect("positive sd").inverse_cdf(p);
        self.transform(horizon, raw)
    }

    /// Central `1 − alpha` interval of the non-zero target given `x`.
    pub fn oracle_interval(&self, x: &[f64], horizon: Horizon, alpha: f64) -> PredictionInterval {
        PredictionInterval::new(
            self.conditional_quantile(x, horizon, alpha / 2.0),
            self.conditional_quantile(x, horizon, 1.0 - alpha / 2.0),
        )
    }
}

#[derive(Debug, Clone)]
pub struct Cohort {
    /// Samples for every horizon; each horizon block lists the same index visits in the same order.
    pub dataset: Dataset,
    pub truth: GroundTruth,
}

impl Cohort {
    pub fn horizon(&self, h: Horizon) -> Dataset {
        self.dataset.for_horizon(h)
    }
}

fn solve_intercept(spec: &CohortSpec, standardized: &[Vec<f64>], rate: f64) -> f64 {
    let coef = &spec.zero_prob_fn.coefficients;
    let linear: Vec<f64> = standardized
        .iter()
        .map(|z| coef.iter().zip(z).map(|(c, v)| c * v).sum())
        .collect();
    let mean_prob =
        |b: f64| linear.iter().map(|l| sigmoid(b + l)).sum::<f64>() / linear.len() as f64;
    let (mut lo, mut hi) = (-50.0, 50.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_prob(mid) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Draws a cohort. Patients use independent counter-based streams, so the
/// output does not depend on how the work is scheduled.
pub fn generate(spec: &CohortSpec) -> Result<Cohort> {
    spec.validate()?;
    let visits: Vec<IndexVisit> = (0..spec.n_patients)
        .into_par_iter()
        .map(|p| patient_visits(spec, p))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let standardized: Vec<Vec<f64>> = visits.iter().map(|v| standardize(&v.features)).collect();
    let zero_intercept = match spec.target_zero_rate {
        Some(rate) => solve_intercept(spec, &standardized, rate),
        None => spec.zero_prob_fn.intercept,
    };
    let mut truth = GroundTruth {
        spec: spec.clone(),
        zero_intercept,
        bounds: BTreeMap::new(),
    };

    let mut samples = Vec::with_capacity(visits.len() * spec.horizon_noise_multiplier.len());
    for (&horizon, &mult) in &spec.horizon_noise_multiplier {
        let sd = spec.noise_sd_base * mult;
        // Shared uniforms and normals across horizons: only the noise scale differs.
        let transformed: Vec<f64> = visits
            .iter()
            .map(|v| {
                if v.zero_u < truth.zero_prob(&v.features) {
                    0.0
                } else {
                    signed_log(truth.conditional_mean(&v.features) + sd * v.noise_z)
                }
            })
            .collect();
        if let Some((lo, hi)) = spec.winsorize {
            let b = WinsorBounds::fit(&transformed, lo, hi)?;
            truth.bounds.insert(horizon, b);
        }
        for (v, t) in visits.iter().zip(transformed) {
            let target = truth.bounds.get(&horizon).map_or(t, |b| b.clamp(t));
            samples.push(SupervisedSample::new(
                format!("s{:05}", v.patient),
                v.date,
                v.features.clone(),
                target,
                horizon,
            ));
        }
    }
    Ok(Cohort {
        dataset: Dataset::with_default_features(samples)?,
        truth,
    })
}
