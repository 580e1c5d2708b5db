//! Per-cell evaluation records.

use serde::{Deserialize, Serialize};

use crate::conformal::ConformalMethod;
use crate::data::{is_zero_target, Horizon};
use crate::error::Result;
use crate::evaluation::metrics::{
    classification_metrics, coverage, mean_length, regression_metrics, ClassificationMetrics,
};
use crate::two_stage::{CutoffMode, GammaFormula, Partitions, PreparedBatch, TwoStageComponents};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub method: ConformalMethod,
    pub cutoff: f64,
    pub horizon: Horizon,
    pub coverage: f64,
    pub mean_length: f64,
    /// Empirical minus nominal coverage.
    pub calibration_error: f64,
    /// Point regressor accuracy on test rows predicted to change; NaN when there are none.
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
    /// Change classifier on the test partition at threshold 0.5; NaN when
    /// the test labels are single-class.
    pub auc: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub n_test: usize,
    pub gamma: f64,
    pub alpha_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub comparison: String,
    pub t_statistic: f64,
    pub p_value: f64,
    pub cohens_d: f64,
    pub mean_difference: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_runs: usize,
}

pub(crate) fn test_classification(probs: &[f64], truths: &[f64]) -> ClassificationMetrics {
    let labels: Vec<bool> = truths.iter().map(|&y| !is_zero_target(y)).collect();
    classification_metrics(probs, &labels, 0.5).unwrap_or(ClassificationMetrics {
        auc: f64::NAN,
        sensitivity: f64::NAN,
        specificity: f64::NAN,
    })
}

/// Evaluates fitted components at every cutoff of `grid` on the test partition.
pub fn summarize_grid(
    horizon: Horizon,
    components: &TwoStageComponents,
    parts: &Partitions,
    batch: &PreparedBatch,
    grid: &[f64],
    mode: CutoffMode,
    formula: GammaFormula,
) -> Result<Vec<EvaluationSummary>> {
    let truths = &parts.test.1;
    let clf = test_classification(&batch.probs, truths);
    grid.iter()
        .map(|&r| {
            let model = components.calibrate(r, mode, formula)?;
            let intervals = model.predict_prepared(batch);
            let changed: Vec<usize> = (0..truths.len())
                .filter(|&i| batch.probs[i] > model.alpha_r)
                .collect();
            let (rmse, mae, r2) = if changed.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                let preds: Vec<f64> = changed.iter().map(|&i| batch.base.point[i]).collect();
                let ys: Vec<f64> = changed.iter().map(|&i| truths[i]).collect();
                let m = regression_metrics(&preds, &ys)?;
                (m.rmse, m.mae, m.r2)
            };
            let cov = coverage(&intervals, truths)?;
            Ok(EvaluationSummary {
                method: components.conformal.method,
                cutoff: r,
                horizon,
                coverage: cov,
                mean_length: mean_length(&intervals)?,
                calibration_error: cov - (1.0 - components.alpha),
                rmse,
                mae,
                r2,
                auc: clf.auc,
                sensitivity: clf.sensitivity,
                specificity: clf.specificity,
                n_test: truths.len(),
                gamma: model.gamma,
                alpha_r: model.alpha_r,
            })
        })
        .collect()
}
