//! Conformal regressors: naive, split, CV+, fold-envelope CV+, jackknife+, J+aB.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::interval::PredictionInterval;
use crate::conformal::quantile::{conformal_quantile, lower_quantile, upper_quantile};
use crate::data::split::{fold_indices, kfold_assignment};
use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::learners::{fit_regressor, GbtModel, GbtParams};
use crate::seed::{derive_seed, derived_rng};

pub const JACKKNIFE_MAX_N: usize = 200;
pub const MIN_BOOTSTRAPS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConformalMethod {
    Naive,
    Split,
    Cvplus,
    CvplusFoldagg,
    JackknifePlus,
    Jab,
}

impl ConformalMethod {
    pub const ALL: [ConformalMethod; 6] = [
        ConformalMethod::Naive,
        ConformalMethod::Split,
        ConformalMethod::Cvplus,
        ConformalMethod::CvplusFoldagg,
        ConformalMethod::JackknifePlus,
        ConformalMethod::Jab,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConformalMethod::Naive => "naive",
            ConformalMethod::Split => "split",
            ConformalMethod::Cvplus => "cvplus",
            ConformalMethod::CvplusFoldagg => "cvplus_foldagg",
            ConformalMethod::JackknifePlus => "jackknife_plus",
            ConformalMethod::Jab => "jab",
        }
    }

    /// Whether the method needs a separate calibration partition.
    pub fn needs_calibration_set(self) -> bool {
        self == ConformalMethod::Split
    }
}

impl fmt::Display for ConformalMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConformalMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == t)
            .or(match t.as_str() {
                "cv+" => Some(ConformalMethod::Cvplus),
                "j+ab" | "jackknife_plus_after_bootstrap" => Some(ConformalMethod::Jab),
                _ => None,
            })
            .ok_or(Error::UnknownToken {
                kind: "conformal method",
                token: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConformalConfig {
    pub method: ConformalMethod,
    pub alpha: f64,
    pub params: GbtParams,
    pub folds: usize,
    pub bootstraps: usize,
    pub seed: u64,
}

impl Default for ConformalConfig {
    fn default() -> Self {
        Self {
            method: ConformalMethod::Cvplus,
            alpha: 0.2,
            params: GbtParams::default(),
            folds: 5,
            bootstraps: 50,
            seed: 0,
        }
    }
}

/// A fitted conformal regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalModel {
    pub method: ConformalMethod,
    pub alpha: f64,
    pub n_features: usize,
    /// One model (naive, split), K fold models, n leave-one-out models, or B bootstrap models.
    pub models: Vec<GbtModel>,
    /// Non-negative conformity scores, one per calibration point.
    pub scores: Vec<f64>,
    /// Fold id of each calibration point (CV+ variants).
    pub fold_of: Vec<usize>,
    /// `in_bag[b][i]`: training point `i` was drawn into bootstrap `b` (J+aB).
    pub in_bag: Vec<Vec<bool>>,
    /// For each retained calibration point, the models that never saw it (J+aB).
    pub oob_models: Vec<Vec<u32>>,
    pub seed: u64,
    pub folds: usize,
    pub bootstraps: usize,
}

fn check_xy(x: &FeatureMatrix, y: &[f64], min: usize) -> Result<()> {
    if x.n_rows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.n_rows(),
            right: y.len(),
        });
    }
    if y.len() < min {
        return Err(Error::InsufficientSamples(format!(
            "need at least {min} samples, got {}",
            y.len()
        )));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )))
    }
}

fn empty_model(
    method: ConformalMethod,
    alpha: f64,
    n_features: usize,
    seed: u64,
) -> ConformalModel {
    ConformalModel {
        method,
        alpha,
        n_features,
        models: Vec::new(),
        scores: Vec::new(),
        fold_of: Vec::new(),
        in_bag: Vec::new(),
        oob_models: Vec::new(),
        seed,
        folds: 0,
        bootstraps: 0,
    }
}

fn abs_residuals(model: &GbtModel, x: &FeatureMatrix, y: &[f64]) -> Result<Vec<f64>> {
    Ok(model
        .predict_matrix(x)?
        .iter()
        .zip(y)
        .map(|(p, t)| (t - p).abs())
        .collect())
}

/// One regressor on everything; scores are in-sample residuals.
pub fn fit_naive(
    x: &FeatureMatrix,
    y: &[f64],
    params: &GbtParams,
    alpha: f64,
) -> Result<ConformalModel> {
    check_alpha(alpha)?;
    check_xy(x, y, 2)?;
    let model = fit_regressor(x, y, params, None)?;
    let mut out = empty_model(ConformalMethod::Naive, alpha, x.n_cols(), params.seed);
    out.scores = abs_residuals(&model, x, y)?;
    out.models.push(model);
    Ok(out)
}

/// Regressor on the proper training set; scores on the calibration set.
pub fn fit_split(
    x_train: &FeatureMatrix,
    y_train: &[f64],
    x_cal: &FeatureMatrix,
    y_cal: &[f64],
    params: &GbtParams,
    alpha: f64,
) -> Result<ConformalModel> {
    check_alpha(alpha)?;
    check_xy(x_train, y_train, 2)?;
    if y_cal.is_empty() {
        return Err(Error::Empty("calibration set"));
    }
    check_xy(x_cal, y_cal, 1)?;
    let model = fit_regressor(x_train, y_train, params, None)?;
    let mut out = empty_model(ConformalMethod::Split, alpha, x_train.n_cols(), params.seed);
    out.scores = abs_residuals(&model, x_cal, y_cal)?;
    out.models.push(model);
    Ok(out)
}

fn fold_seed(params: &GbtParams, label: &str, i: usize) -> GbtParams {
    params.with_seed(derive_seed(params.seed, label, i as u64))
}

/// K-fold CV+; `foldagg` selects the per-fold envelope variant.
pub fn fit_cvplus(
    x: &FeatureMatrix,
    y: &[f64],
    k: usize,
    params: &GbtParams,
    alpha: f64,
    foldagg: bool,
) -> Result<ConformalModel> {
    check_alpha(alpha)?;
    check_xy(x, y, 2)?;
    if k < 2 {
        return Err(Error::invalid(format!(
            "CV+ needs at least 2 folds, got {k}"
        )));
    }
    if k > y.len() {
        return Err(Error::InsufficientSamples(format!(
            "{k} folds over {} samples",
            y.len()
        )));
    }
    let assignment = kfold_assignment(y.len(), k, derive_seed(params.seed, "cvplus-folds", 0))?;
    let folds = fold_indices(&assignment, k);
    let fitted: Vec<(GbtModel, Vec<(usize, f64)>)> = folds
        .par_iter()
        .enumerate()
        .map(|(f, (train_idx, held_idx))| {
            let yt: Vec<f64> = train_idx.iter().map(|&i| y[i]).collect();
            let model = fit_regressor(
                &x.select_rows(train_idx),
                &yt,
                &fold_seed(params, "cvplus-fold", f),
                None,
            )?;
            let held: Vec<f64> = held_idx.iter().map(|&i| y[i]).collect();
            let res = abs_residuals(&model, &x.select_rows(held_idx), &held)?;
            Ok((model, held_idx.iter().copied().zip(res).collect()))
        })
        .collect::<Result<_>>()?;

    let method = if foldagg {
        ConformalMethod::CvplusFoldagg
    } else {
        ConformalMethod::Cvplus
    };
    let mut out = empty_model(method, alpha, x.n_cols(), params.seed);
    out.scores = vec![0.0; y.len()];
    for (model, residuals) in fitted {
        for (i, r) in residuals {
            out.scores[i] = r;
        }
        out.models.push(model);
    }
    out.fold_of = assignment;
    out.folds = k;
    Ok(out)
}

/// Jackknife+ with one refit per left-out point; limited to small n.
pub fn fit_jackknife_plus(
    x: &FeatureMatrix,
    y: &[f64],
    params: &GbtParams,
    alpha: f64,
) -> Result<ConformalModel> {
    check_alpha(alpha)?;
    check_xy(x, y, 3)?;
    if y.len() > JACKKNIFE_MAX_N {
        return Err(Error::invalid(format!(
            "jackknife+ refits once per point and is limited to n <= {JACKKNIFE_MAX_N}, got {}",
            y.len()
        )));
    }
    let n = y.len();
    let fitted: Vec<(GbtModel, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let keep: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let yt: Vec<f64> = keep.iter().map(|&j| y[j]).collect();
            let model = fit_regressor(
                &x.select_rows(&keep),
                &yt,
                &fold_seed(params, "jackknife", i),
                None,
            )?;
            let r = (y[i] - model.predict_value(x.row(i))?).abs();
            Ok((model, r))
        })
        .collect::<Result<_>>()?;
    let mut out = empty_model(
        ConformalMethod::JackknifePlus,
        alpha,
        x.n_cols(),
        params.seed,
    );
    for (m, r) in fitted {
        out.models.push(m);
        out.scores.push(r);
    }
    Ok(out)
}

/// Jackknife+-after-bootstrap with `b` bootstrap replicates of size n.
pub fn fit_jab(
    x: &FeatureMatrix,
    y: &[f64],
    b: usize,
    params: &GbtParams,
    alpha: f64,
) -> Result<ConformalModel> {
    check_alpha(alpha)?;
    check_xy(x, y, 10)?;
    if b < MIN_BOOTSTRAPS {
        return Err(Error::invalid(format!(
            "J+aB needs at least {MIN_BOOTSTRAPS} bootstraps so every point is left out somewhere, got {b}"
        )));
    }
    let n = y.len();
    let draws: Vec<Vec<usize>> = (0..b)
        .map(|j| {
            let mut rng = derived_rng(params.seed, "jab-bootstrap", j as u64);
            (0..n).map(|_| rng.random_range(0..n)).collect()
        })
        .collect();
    let models: Vec<GbtModel> = draws
        .par_iter()
        .enumerate()
        .map(|(j, idx)| {
            let yt: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            fit_regressor(
                &x.select_rows(idx),
                &yt,
                &fold_seed(params, "jab-model", j),
                None,
            )
        })
        .collect::<Result<_>>()?;

    let mut in_bag = vec![vec![false; n]; b];
    for (j, idx) in draws.iter().enumerate() {
        for &i in idx {
            in_bag[j][i] = true;
        }
    }
    let mut out = empty_model(ConformalMethod::Jab, alpha, x.n_cols(), params.seed);
    let mut dropped = 0;
    for i in 0..n {
        let oob: Vec<u32> = (0..b)
            .filter(|&j| !in_bag[j][i])
            .map(|j| j as u32)
            .collect();
        if oob.is_empty() {
            dropped += 1;
            continue;
        }
        let row = x.row(i);
        let mut total = 0.0;
        for &j in &oob {
            total += models[j as usize].predict_value(row)?;
        }
        out.scores.push((y[i] - total / oob.len() as f64).abs());
        out.oob_models.push(oob);
    }
    if dropped > 0 {
        log::warn!("J+aB: {dropped} of {n} points appeared in every bootstrap and were left out of calibration");
    }
    if out.scores.is_empty() {
        return Err(Error::Empty("J+aB calibration set"));
    }
    out.models = models;
    out.in_bag = in_bag;
    out.bootstraps = b;
    Ok(out)
}

/// Dispatches on `config.method`. `cal` is required by split conformal only.
pub fn fit_conformal(
    x: &FeatureMatrix,
    y: &[f64],
    cal: Option<(&FeatureMatrix, &[f64])>,
    config: &ConformalConfig,
) -> Result<ConformalModel> {
    let params = config.params.with_seed(config.seed);
    match config.method {
        ConformalMethod::Naive => fit_naive(x, y, &params, config.alpha),
        ConformalMethod::Split => {
            let (xc, yc) =
                cal.ok_or_else(|| Error::invalid("split conformal needs a calibration set"))?;
            fit_split(x, y, xc, yc, &params, config.alpha)
        }
        ConformalMethod::Cvplus => fit_cvplus(x, y, config.folds, &params, config.alpha, false),
        ConformalMethod::CvplusFoldagg => {
            fit_cvplus(x, y, config.folds, &params, config.alpha, true)
        }
        ConformalMethod::JackknifePlus => fit_jackknife_plus(x, y, &params, config.alpha),
        ConformalMethod::Jab => fit_jab(x, y, config.bootstraps, &params, config.alpha),
    }
}

/// Per-test-point model outputs, reusable across quantile levels.
#[derive(Debug, Clone, PartialEq)]
pub struct BasePredictions {
    /// Single-model output or ensemble mean per point.
    pub point: Vec<f64>,
    pub detail: BaseDetail,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BaseDetail {
    /// Naive and split need only the point prediction.
    Point,
    /// Fold-model outputs per point (CV+ variants).
    PerFold(Vec<Vec<f64>>),
    /// Leave-one-out aggregate per calibration point, per test point (jackknife+, J+aB).
    PerCalibration(Vec<Vec<f64>>),
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

impl ConformalModel {
    fn check_arity(&self, row: &[f64]) -> Result<()> {
        if row.len() == self.n_features {
            Ok(())
        } else {
            Err(Error::ArityMismatch {
                expected: self.n_features,
                found: row.len(),
            })
        }
    }

    fn row_outputs(&self, row: &[f64]) -> Vec<f64> {
        self.models
            .iter()
            .map(|m| m.predict_value(row).expect("arity checked"))
            .collect()
    }

    fn leave_one_out(&self, outputs: &[f64]) -> Vec<f64> {
        match self.method {
            ConformalMethod::JackknifePlus => outputs.to_vec(),
            _ => self
                .oob_models
                .iter()
                .map(|oob| oob.iter().map(|&j| outputs[j as usize]).sum::<f64>() / oob.len() as f64)
                .collect(),
        }
    }

    /// Evaluates the underlying models once for every row of `x`.
    pub fn base_predictions(&self, x: &FeatureMatrix) -> Result<BasePredictions> {
        if !x.is_empty() && x.n_cols() != self.n_features {
            return Err(Error::ArityMismatch {
                expected: self.n_features,
                found: x.n_cols(),
            });
        }
        let rows: Vec<&[f64]> = x.rows().collect();
        Ok(match self.method {
            ConformalMethod::Naive | ConformalMethod::Split => BasePredictions {
                point: rows
                    .iter()
                    .map(|r| self.models[0].predict_value(r).expect("arity checked"))
                    .collect(),
                detail: BaseDetail::Point,
            },
            ConformalMethod::Cvplus | ConformalMethod::CvplusFoldagg => {
                let per: Vec<Vec<f64>> = rows.par_iter().map(|r| self.row_outputs(r)).collect();
                BasePredictions {
                    point: per.iter().map(|f| mean(f)).collect(),
                    detail: BaseDetail::PerFold(per),
                }
            }
            ConformalMethod::JackknifePlus | ConformalMethod::Jab => {
                let (point, per): (Vec<f64>, Vec<Vec<f64>>) = rows
                    .par_iter()
                    .map(|r| {
                        let outputs = self.row_outputs(r);
                        (mean(&outputs), self.leave_one_out(&outputs))
                    })
                    .unzip();
                BasePredictions {
                    point,
                    detail: BaseDetail::PerCalibration(per),
                }
            }
        })
    }

    /// Intervals at conformal `level` for previously computed base predictions.
    pub fn intervals(&self, base: &BasePredictions, level: f64) -> Vec<PredictionInterval> {
        match &base.detail {
            BaseDetail::Point => {
                let q =
                    conformal_quantile(&self.scores, level).expect("scores non-empty after fit");
                base.point
                    .iter()
                    .map(|&f| PredictionInterval::centered(f, q))
                    .collect()
            }
            BaseDetail::PerFold(per) if self.method == ConformalMethod::CvplusFoldagg => {
                let fold_q: Vec<f64> = (0..self.folds)
                    .map(|k| {
                        let s: Vec<f64> = self
                            .scores
                            .iter()
                            .zip(&self.fold_of)
                            .filter(|(_, &f)| f == k)
                            .map(|(s, _)| *s)
                            .collect();
                        conformal_quantile(&s, level).expect("every fold holds a point")
                    })
                    .collect();
                per.iter()
                    .map(|f| {
                        let lo = f
                            .iter()
                            .zip(&fold_q)
                            .map(|(p, q)| p - q)
                            .fold(f64::INFINITY, f64::min);
                        let hi = f
                            .iter()
                            .zip(&fold_q)
                            .map(|(p, q)| p + q)
                            .fold(f64::NEG_INFINITY, f64::max);
                        PredictionInterval::new(lo, hi)
                    })
                    .collect()
            }
            BaseDetail::PerFold(per) => per
                .iter()
                .map(|f| {
                    let centers: Vec<f64> = self.fold_of.iter().map(|&k| f[k]).collect();
                    self.plus_interval(&centers, level)
                })
                .collect(),
            BaseDetail::PerCalibration(per) => {
                per.iter().map(|c| self.plus_interval(c, level)).collect()
            }
        }
    }

    /// `[lower_q{c_i − R_i}, upper_q{c_i + R_i}]`.
    fn plus_interval(&self, centers: &[f64], level: f64) -> PredictionInterval {
        let mut lo: Vec<f64> = centers
            .iter()
            .zip(&self.scores)
            .map(|(c, r)| c - r)
            .collect();
        let mut hi: Vec<f64> = centers
            .iter()
            .zip(&self.scores)
            .map(|(c, r)| c + r)
            .collect();
        PredictionInterval::new(
            lower_quantile(&mut lo, level),
            upper_quantile(&mut hi, level),
        )
    }

    pub fn predict_at(&self, row: &[f64], level: f64) -> Result<PredictionInterval> {
        self.check_arity(row)?;
        let x = FeatureMatrix::from_flat(row.len(), row.to_vec())?;
        Ok(self.intervals(&self.base_predictions(&x)?, level)[0])
    }

    /// Interval at the model's own level `1 − alpha`.
    pub fn predict_interval(&self, row: &[f64]) -> Result<PredictionInterval> {
        self.predict_at(row, 1.0 - self.alpha)
    }

    pub fn predict_intervals(
        &self,
        x: &FeatureMatrix,
        level: f64,
    ) -> Result<Vec<PredictionInterval>> {
        Ok(self.intervals(&self.base_predictions(x)?, level))
    }

    /// Ensemble-mean point prediction.
    pub fn predict_point(&self, row: &[f64]) -> Result<f64> {
        self.check_arity(row)?;
        Ok(mean(&self.row_outputs(row)))
    }

    pub fn predict_points(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        x.rows().map(|r| self.predict_point(r)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}
