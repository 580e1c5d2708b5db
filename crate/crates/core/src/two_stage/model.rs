//! Classifier + non-zero conformal regressor, combined into hybrid intervals.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::conformal::{
    fit_conformal, BasePredictions, ConformalConfig, ConformalModel, PredictionInterval,
};
use crate::data::{Dataset, DatasetSplit, FeatureMatrix};
use crate::error::{Error, Result};
use crate::evaluation::metrics::{coverage, mean_length, rmse};
use crate::learners::{fit_classifier, GbtModel, GbtParams};
use crate::two_stage::calibration::{
    compute_gamma, estimate_beta, select_cutoff, BetaEstimate, CutoffMode, GammaFormula,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoStageConfig {
    pub classifier: GbtParams,
    /// Method, alpha, regressor parameters and seed of the conformal stage.
    pub conformal: ConformalConfig,
    pub r: f64,
    pub cutoff_mode: CutoffMode,
    pub gamma_formula: GammaFormula,
}

impl Default for TwoStageConfig {
    fn default() -> Self {
        Self {
            classifier: GbtParams::default(),
            conformal: ConformalConfig::default(),
            r: 0.5,
            cutoff_mode: CutoffMode::default(),
            gamma_formula: GammaFormula::default(),
        }
    }
}

impl TwoStageConfig {
    pub fn alpha(&self) -> f64 {
        self.conformal.alpha
    }
}

/// Feature matrices and targets of the four partitions.
#[derive(Debug, Clone)]
pub struct Partitions {
    pub train: (FeatureMatrix, Vec<f64>),
    pub cal1: (FeatureMatrix, Vec<f64>),
    pub val: (FeatureMatrix, Vec<f64>),
    pub test: (FeatureMatrix, Vec<f64>),
}

fn take(dataset: &Dataset, idx: &[usize]) -> (FeatureMatrix, Vec<f64>) {
    let sub = dataset.subset(idx);
    let mut x = sub.features();
    if sub.is_empty() {
        x = FeatureMatrix::with_columns(dataset.n_features());
    }
    (x, sub.targets())
}

impl Partitions {
    pub fn new(dataset: &Dataset, split: &DatasetSplit) -> Self {
        Self {
            train: take(dataset, &split.train_idx),
            cal1: take(dataset, &split.cal1_idx),
            val: take(dataset, &split.val_idx),
            test: take(dataset, &split.test_idx),
        }
    }
}

fn nonzero_rows(x: &FeatureMatrix, y: &[f64]) -> (FeatureMatrix, Vec<f64>) {
    let idx: Vec<usize> = (0..y.len())
        .filter(|&i| !crate::data::is_zero_target(y[i]))
        .collect();
    (x.select_rows(&idx), idx.iter().map(|&i| y[i]).collect())
}

/// Fits the change classifier (label: target is non-zero) on every training row.
pub fn fit_change_classifier(parts: &Partitions, params: &GbtParams) -> Result<GbtModel> {
    let (xt, yt) = &parts.train;
    let labels: Vec<bool> = yt
        .iter()
        .map(|&y| !crate::data::is_zero_target(y))
        .collect();
    fit_classifier(xt, &labels, params, None)
}

/// The expensive, cutoff-independent parts of a two-stage fit.
#[derive(Debug, Clone)]
pub struct TwoStageComponents {
    pub classifier: Arc<GbtModel>,
    pub conformal: Arc<ConformalModel>,
    pub probs_cal1: Vec<f64>,
    pub probs_val: Vec<f64>,
    pub targets_val: Vec<f64>,
    pub alpha: f64,
}

impl TwoStageComponents {
    /// Fits the change classifier on every training row and the conformal
    /// regressor on the non-zero training rows only.
    pub fn fit(parts: &Partitions, config: &TwoStageConfig) -> Result<Self> {
        Self::with_classifier(
            parts,
            config,
            Arc::new(fit_change_classifier(parts, &config.classifier)?),
        )
    }

    /// Reuses a fitted classifier, so several conformal methods can share one.
    pub fn with_classifier(
        parts: &Partitions,
        config: &TwoStageConfig,
        classifier: Arc<GbtModel>,
    ) -> Result<Self> {
        let (xt, yt) = &parts.train;
        let (xnz, ynz) = nonzero_rows(xt, yt);
        if ynz.len() < 2 {
            return Err(Error::NothingToRegress(ynz.len()));
        }
        let (xc, yc) = nonzero_rows(&parts.cal1.0, &parts.cal1.1);
        let cal = config
            .conformal
            .method
            .needs_calibration_set()
            .then_some((&xc, yc.as_slice()));
        let conformal = fit_conformal(&xnz, &ynz, cal, &config.conformal)?;

        Ok(Self {
            probs_cal1: classifier.predict_matrix(&parts.cal1.0)?,
            probs_val: classifier.predict_matrix(&parts.val.0)?,
            targets_val: parts.val.1.clone(),
            classifier,
            conformal: Arc::new(conformal),
            alpha: config.conformal.alpha,
        })
    }

    /// Resolves cutoff, purity and level for one `r`.
    pub fn calibrate(
        &self,
        r: f64,
        mode: CutoffMode,
        formula: GammaFormula,
    ) -> Result<TwoStageModel> {
        let alpha_r = select_cutoff(&self.probs_cal1, r, mode)?;
        let beta = estimate_beta(&self.probs_val, &self.targets_val, alpha_r)?;
        let n_val = self.probs_val.len();
        let abstention_rate = if n_val == 0 {
            0.0
        } else {
            self.probs_val.iter().filter(|&&p| p <= alpha_r).count() as f64 / n_val as f64
        };
        let gamma = match formula {
            GammaFormula::PaperEq6 => compute_gamma(beta, r, self.alpha, formula)?,
            // The decomposition weights purity by the share of abstentions,
            // measured on the validation rows rather than read off r.
            GammaFormula::CoverageDecomposition => {
                match compute_gamma(beta, abstention_rate, self.alpha, formula) {
                    Err(Error::DegenerateCutoff) => 1.0 - self.alpha,
                    other => other?,
                }
            }
        };
        Ok(TwoStageModel {
            classifier: Arc::clone(&self.classifier),
            conformal: Arc::clone(&self.conformal),
            cutoff_mode: mode,
            r,
            alpha_r,
            beta_hat: beta,
            val_abstention_rate: abstention_rate,
            gamma,
            alpha: self.alpha,
            gamma_formula: formula,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStageModel {
    pub classifier: Arc<GbtModel>,
    pub conformal: Arc<ConformalModel>,
    pub cutoff_mode: CutoffMode,
    pub r: f64,
    /// Probability at or below which the zero singleton is issued.
    pub alpha_r: f64,
    pub beta_hat: BetaEstimate,
    pub val_abstention_rate: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub gamma_formula: GammaFormula,
}

/// Classifier probabilities plus conformal base predictions for a batch.
#[derive(Debug, Clone)]
pub struct PreparedBatch {
    pub probs: Vec<f64>,
    pub base: BasePredictions,
}

impl TwoStageModel {
    /// Replaces the adjusted level, e.g. to compare against a plain conformal model.
    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        self.classifier.predict_proba(row)
    }

    pub fn predict(&self, row: &[f64]) -> Result<PredictionInterval> {
        let p = self.classifier.predict_proba(row)?;
        if p <= self.alpha_r {
            Ok(PredictionInterval::zero())
        } else {
            self.conformal.predict_at(row, self.gamma)
        }
    }

    pub fn prepare(&self, x: &FeatureMatrix) -> Result<PreparedBatch> {
        prepare(&self.classifier, &self.conformal, x)
    }

    pub fn predict_prepared(&self, batch: &PreparedBatch) -> Vec<PredictionInterval> {
        let regression = self.conformal.intervals(&batch.base, self.gamma);
        batch
            .probs
            .iter()
            .zip(regression)
            .map(|(&p, iv)| {
                if p <= self.alpha_r {
                    PredictionInterval::zero()
                } else {
                    iv
                }
            })
            .collect()
    }

    pub fn predict_batch(&self, x: &FeatureMatrix) -> Result<Vec<PredictionInterval>> {
        Ok(self.predict_prepared(&self.prepare(x)?))
    }

    /// Coverage, length and accuracy on a labeled batch.
    pub fn evaluate_prepared(&self, batch: &PreparedBatch, truths: &[f64]) -> Result<CellMetrics> {
        let intervals = self.predict_prepared(batch);
        let changed: Vec<usize> = (0..truths.len())
            .filter(|&i| batch.probs[i] > self.alpha_r)
            .collect();
        let rmse_nonzero = if changed.is_empty() {
            f64::NAN
        } else {
            let preds: Vec<f64> = changed.iter().map(|&i| batch.base.point[i]).collect();
            let truth: Vec<f64> = changed.iter().map(|&i| truths[i]).collect();
            rmse(&preds, &truth)?
        };
        Ok(CellMetrics {
            coverage: coverage(&intervals, truths)?,
            mean_length: mean_length(&intervals)?,
            rmse: rmse_nonzero,
            n_abstained: truths.len() - changed.len(),
            n_predicted_change: changed.len(),
        })
    }
}

pub fn prepare(
    classifier: &GbtModel,
    conformal: &ConformalModel,
    x: &FeatureMatrix,
) -> Result<PreparedBatch> {
    Ok(PreparedBatch {
        probs: classifier.predict_matrix(x)?,
        base: conformal.base_predictions(x)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub coverage: f64,
    pub mean_length: f64,
    /// RMSE of the point regressor over test rows predicted to change.
    pub rmse: f64,
    pub n_abstained: usize,
    pub n_predicted_change: usize,
}

/// Fits and calibrates a two-stage model in one call.
pub fn fit_two_stage(
    dataset: &Dataset,
    split: &DatasetSplit,
    config: &TwoStageConfig,
) -> Result<TwoStageModel> {
    let parts = Partitions::new(dataset, split);
    TwoStageComponents::fit(&parts, config)?.calibrate(
        config.r,
        config.cutoff_mode,
        config.gamma_formula,
    )
}

/// Single-stage comparator: the same conformal method on every training row.
pub fn fit_standard(parts: &Partitions, config: &ConformalConfig) -> Result<ConformalModel> {
    let (xt, yt) = &parts.train;
    let cal = config
        .method
        .needs_calibration_set()
        .then_some((&parts.cal1.0, parts.cal1.1.as_slice()));
    fit_conformal(xt, yt, cal, config)
}

/// Coverage/length of the single-stage model at level `1 − alpha`.
pub fn evaluate_standard(
    model: &ConformalModel,
    x: &FeatureMatrix,
    truths: &[f64],
) -> Result<CellMetrics> {
    let base = model.base_predictions(x)?;
    let intervals = model.intervals(&base, 1.0 - model.alpha);
    Ok(CellMetrics {
        coverage: coverage(&intervals, truths)?,
        mean_length: mean_length(&intervals)?,
        rmse: rmse(&base.point, truths)?,
        n_abstained: 0,
        n_predicted_change: truths.len(),
    })
}
