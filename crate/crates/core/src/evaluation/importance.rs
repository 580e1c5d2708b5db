//! Permutation feature importance.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::evaluation::metrics::{auc, regression_metrics};
use crate::learners::{logistic_loss, GbtModel};
use crate::seed::derived_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMetric {
    /// Labels are `y > 0.5`; scores are probabilities.
    Auc,
    /// Mean log loss on probabilities; labels as for `Auc`.
    LogLoss,
    Rmse,
    Mae,
    R2,
}

impl ImportanceMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            ImportanceMetric::Auc => "auc",
            ImportanceMetric::LogLoss => "logloss",
            ImportanceMetric::Rmse => "rmse",
            ImportanceMetric::Mae => "mae",
            ImportanceMetric::R2 => "r2",
        }
    }

    fn higher_is_better(self) -> bool {
        matches!(self, ImportanceMetric::Auc | ImportanceMetric::R2)
    }

    pub fn score(self, preds: &[f64], y: &[f64]) -> Result<f64> {
        match self {
            ImportanceMetric::Auc => {
                let labels: Vec<bool> = y.iter().map(|&v| v > 0.5).collect();
                auc(preds, &labels)
            }
            ImportanceMetric::LogLoss => {
                if preds.len() != y.len() {
                    return Err(Error::LengthMismatch {
                        left: preds.len(),
                        right: y.len(),
                    });
                }
                let eps = 1e-15;
                let total: f64 = preds
                    .iter()
                    .zip(y)
                    .map(|(&p, &t)| {
                        let p = p.clamp(eps, 1.0 - eps);
                        logistic_loss((p / (1.0 - p)).ln(), if t > 0.5 { 1.0 } else { 0.0 })
                    })
                    .sum();
                Ok(total / y.len() as f64)
            }
            ImportanceMetric::Rmse => Ok(regression_metrics(preds, y)?.rmse),
            ImportanceMetric::Mae => Ok(regression_metrics(preds, y)?.mae),
            ImportanceMetric::R2 => Ok(regression_metrics(preds, y)?.r2),
        }
    }
}

impl fmt::Display for ImportanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ImportanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "auc" => Ok(ImportanceMetric::Auc),
            "logloss" | "log_loss" => Ok(ImportanceMetric::LogLoss),
            "rmse" => Ok(ImportanceMetric::Rmse),
            "mae" => Ok(ImportanceMetric::Mae),
            "r2" => Ok(ImportanceMetric::R2),
            _ => Err(Error::UnknownMetric(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: usize,
    /// Mean drop in the metric after shuffling, oriented so that larger means
    /// more important for every metric.
    pub importance: f64,
    pub sd: f64,
}

/// Shuffles one column at a time and reports the mean metric degradation,
/// ranked most important first (ties broken by feature index).
pub fn permutation_importance<F>(
    predict: F,
    x: &FeatureMatrix,
    y: &[f64],
    metric: ImportanceMetric,
    n_repeats: usize,
    seed: u64,
) -> Result<Vec<FeatureImportance>>
where
    F: Fn(&FeatureMatrix) -> Result<Vec<f64>>,
{
    if n_repeats == 0 {
        return Err(Error::invalid("n_repeats must be at least 1"));
    }
    if x.n_rows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.n_rows(),
            right: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::Empty("importance test set"));
    }
    let baseline = metric.score(&predict(x)?, y)?;
    let sign = if metric.higher_is_better() { 1.0 } else { -1.0 };
    let mut out = Vec::with_capacity(x.n_cols());
    for j in 0..x.n_cols() {
        let original = x.column(j);
        let mut shuffled_x = x.clone();
        let mut drops = Vec::with_capacity(n_repeats);
        for r in 0..n_repeats {
            let mut col = original.clone();
            let mut rng = derived_rng(seed, "importance", (j * n_repeats + r) as u64);
            col.shuffle(&mut rng);
            for (i, v) in col.iter().enumerate() {
                shuffled_x.set(i, j, *v);
            }
            let permuted = metric.score(&predict(&shuffled_x)?, y)?;
            drops.push(sign * (baseline - permuted));
        }
        let m = drops.iter().sum::<f64>() / n_repeats as f64;
        let sd = if n_repeats > 1 {
            (drops.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / (n_repeats - 1) as f64).sqrt()
        } else {
            0.0
        };
        out.push(FeatureImportance {
            feature: j,
            importance: m,
            sd,
        });
    }
    out.sort_by(|a, b| {
        b.importance
            .total_cmp(&a.importance)
            .then(a.feature.cmp(&b.feature))
    });
    Ok(out)
}

/// Permutation importance of a boosted model on its natural output scale.
pub fn model_importance(
    model: &GbtModel,
    x: &FeatureMatrix,
    y: &[f64],
    metric: ImportanceMetric,
    n_repeats: usize,
    seed: u64,
) -> Result<Vec<FeatureImportance>> {
    permutation_importance(|m| model.predict_matrix(m), x, y, metric, n_repeats, seed)
}
