//! Horizon-labeled supervised samples from LEDD series.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Demographics, Horizon, Sex, SupervisedSample, FEATURE_NAMES};
use crate::error::Result;
use crate::ledd::series::{relative_change, LeddSeries};
use crate::ledd::transform::{signed_log, WinsorBounds, WinsorPolicy};

/// Age used when a patient has no demographics row.
pub const DEFAULT_AGE_YEARS: f64 = 78.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Accepted distance between the successor visit and the exact horizon.
    pub slack_days: i64,
    pub winsor: WinsorPolicy,
    #[serde(skip)]
    pub demographics: HashMap<String, Demographics>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            slack_days: 90,
            winsor: WinsorPolicy::default(),
            demographics: HashMap::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SupervisedBuild {
    pub dataset: Dataset,
    /// Index visits with a qualifying successor but zero LEDD (change undefined).
    pub skipped_zero_base: usize,
    /// Bounds actually applied, if any.
    pub bounds: Option<WinsorBounds>,
}

/// Index of the successor closest to `i`'s date plus the horizon, within slack.
/// Ties go to the earlier visit.
fn horizon_successor(
    series: &LeddSeries,
    i: usize,
    horizon: Horizon,
    slack_days: i64,
) -> Option<usize> {
    let start = series.points[i].date;
    let mut best: Option<(i64, usize)> = None;
    for (j, p) in series.points.iter().enumerate().skip(i + 1) {
        let gap = (p.date - start).num_days();
        let dist = (gap - horizon.days()).abs();
        if dist > slack_days {
            if gap > horizon.days() {
                break;
            }
            continue;
        }
        if best.is_none_or(|(d, _)| dist < d) {
            best = Some((dist, j));
        }
    }
    best.map(|(_, j)| j)
}

/// Feature vector at visit `i`, in [`FEATURE_NAMES`] order, using history up to and including `i`.
pub fn visit_features(series: &LeddSeries, i: usize, demo: Option<&Demographics>) -> Vec<f64> {
    let pts = &series.points[..=i];
    let first = pts[0].date;
    let here = pts[i];
    let elapsed = (here.date - first).num_days() as f64;
    let age = demo.map_or(DEFAULT_AGE_YEARS, |d| d.age_years) + elapsed / 365.25;
    let sex = demo.map_or(Sex::Unknown, |d| d.sex).code();
    let mean_ledd = pts.iter().map(|p| p.ledd_mg).sum::<f64>() / pts.len() as f64;
    let since_last = if i == 0 {
        0.0
    } else {
        (here.date - pts[i - 1].date).num_days() as f64
    };
    let recent = if i == 0 {
        0.0
    } else {
        relative_change(pts[i - 1].ledd_mg, here.ledd_mg).map_or(0.0, signed_log)
    };
    let features = vec![
        age,
        sex,
        mean_ledd,
        here.length_of_stay_days,
        since_last,
        elapsed,
        here.ledd_mg,
        i as f64,
        recent,
    ];
    debug_assert_eq!(features.len(), FEATURE_NAMES.len());
    features
}

/// One sample per visit with a successor near `horizon`; target is the
/// clamped signed log of the fractional LEDD change to that successor.
pub fn build_supervised(
    series: &[LeddSeries],
    horizon: Horizon,
    config: &FeatureConfig,
) -> Result<SupervisedBuild> {
    let mut raw = Vec::new();
    let mut skipped_zero_base = 0;
    for s in series {
        let demo = config.demographics.get(&s.patient_id);
        for i in 0..s.points.len() {
            let Some(j) = horizon_successor(s, i, horizon, config.slack_days) else {
                continue;
            };
            let Some(change) = relative_change(s.points[i].ledd_mg, s.points[j].ledd_mg) else {
                skipped_zero_base += 1;
                continue;
            };
            raw.push((
                s.patient_id.clone(),
                s.points[i].date,
                visit_features(s, i, demo),
                signed_log(change),
            ));
        }
    }

    let targets: Vec<f64> = raw.iter().map(|r| r.3).collect();
    let bounds = match config.winsor {
        WinsorPolicy::Skip => None,
        WinsorPolicy::Fixed(b) => Some(b),
        WinsorPolicy::FitAll { .. } if targets.is_empty() => None,
        WinsorPolicy::FitAll { lo_pct, hi_pct } => {
            Some(WinsorBounds::fit(&targets, lo_pct, hi_pct)?)
        }
    };
    let samples = raw
        .into_iter()
        .map(|(id, date, features, t)| {
            let target = bounds.map_or(t, |b| b.clamp(t));
            SupervisedSample::new(id, date, features, target, horizon)
        })
        .collect();
    Ok(SupervisedBuild {
        dataset: Dataset::with_default_features(samples)?,
        skipped_zero_base,
        bounds,
    })
}

/// Clamps every target of `dataset` to `bounds`, refreshing the zero flags.
pub fn apply_winsor_bounds(dataset: &mut Dataset, bounds: WinsorBounds) {
    for s in &mut dataset.samples {
        s.target = bounds.clamp(s.target);
        s.is_zero = crate::data::is_zero_target(s.target);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledd::series::LeddPoint;
    use chrono::{Duration, NaiveDate};

    fn series(points: &[(i64, f64)]) -> LeddSeries {
        let base = NaiveDate::from_ymd_opt(2018, 1, 1).unwrap();
        LeddSeries {
            patient_id: "p1".into(),
            points: points
                .iter()
                .map(|&(d, l)| LeddPoint {
                    date: base + Duration::days(d),
                    ledd_mg: l,
                    length_of_stay_days: 2.0,
                })
                .collect(),
        }
    }

    #[test]
    fn unchanged_pair_gives_zero_sample() {
        let b = build_supervised(
            &[series(&[(0, 300.0), (182, 300.0)])],
            Horizon::SixMonths,
            &FeatureConfig::default(),
        )
        .unwrap();
        assert_eq!(b.dataset.len(), 1);
        assert_eq!(b.dataset.samples[0].target, 0.0);
        assert!(b.dataset.samples[0].is_zero);
    }

    #[test]
    fn single_visit_gives_nothing() {
        let b = build_supervised(
            &[series(&[(0, 300.0)])],
            Horizon::OneYear,
            &FeatureConfig::default(),
        )
        .unwrap();
        assert!(b.dataset.is_empty());
    }

    #[test]
    fn nearest_successor_within_slack() {
        let s = series(&[
            (0, 100.0),
            (100, 100.0),
            (170, 200.0),
            (200, 300.0),
            (400, 50.0),
        ]);
        assert_eq!(horizon_successor(&s, 0, Horizon::SixMonths, 90), Some(2));
        // 182 ± 90 from day 200 is [292, 472]; day 400 qualifies.
        assert_eq!(horizon_successor(&s, 3, Horizon::SixMonths, 90), Some(4));
        assert_eq!(horizon_successor(&s, 4, Horizon::SixMonths, 90), None);
        // Equidistant candidates resolve to the earlier one.
        let t = series(&[(0, 1.0), (172, 1.0), (192, 1.0)]);
        assert_eq!(horizon_successor(&t, 0, Horizon::SixMonths, 90), Some(1));
    }

    #[test]
    fn features_use_history_only() {
        let s = series(&[(0, 100.0), (30, 200.0), (60, 400.0)]);
        let f = visit_features(&s, 1, None);
        assert_eq!(f[0], DEFAULT_AGE_YEARS + 30.0 / 365.25);
        assert_eq!(f[1], Sex::Unknown.code());
        assert_eq!(f[2], 150.0);
        assert_eq!(f[4], 30.0);
        assert_eq!(f[5], 30.0);
        assert_eq!(f[6], 200.0);
        assert_eq!(f[7], 1.0);
        assert_eq!(f[8], signed_log(1.0));
    }

    #[test]
    fn zero_base_is_counted() {
        let b = build_supervised(
            &[series(&[(0, 0.0), (365, 100.0)])],
            Horizon::OneYear,
            &FeatureConfig::default(),
        )
        .unwrap();
        assert!(b.dataset.is_empty());
        assert_eq!(b.skipped_zero_base, 1);
    }
}
