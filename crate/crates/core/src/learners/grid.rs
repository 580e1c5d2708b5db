//! Exhaustive k-fold grid search over boosting parameters.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::split::{fold_indices, kfold_assignment};
use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::evaluation::metrics::{auc, rmse};
use crate::learners::gbt::train;
use crate::learners::params::{GbtParams, Objective};

/// Candidate values per parameter; an empty list keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtGrid {
    pub learning_rate: Vec<f64>,
    pub max_depth: Vec<usize>,
    pub n_rounds: Vec<usize>,
    pub l1_alpha: Vec<f64>,
    pub l2_lambda: Vec<f64>,
    pub min_samples_leaf: Vec<usize>,
    pub subsample: Vec<f64>,
}

fn axis<T: Copy>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

impl GbtGrid {
    /// Cartesian product in declaration order, the first field varying slowest.
    pub fn expand(&self, base: &GbtParams) -> Vec<GbtParams> {
        let mut out = Vec::new();
        for &learning_rate in &axis(&self.learning_rate, base.learning_rate) {
            for &max_depth in &axis(&self.max_depth, base.max_depth) {
                for &n_rounds in &axis(&self.n_rounds, base.n_rounds) {
                    for &l1_alpha in &axis(&self.l1_alpha, base.l1_alpha) {
                        for &l2_lambda in &axis(&self.l2_lambda, base.l2_lambda) {
                            for &min_samples_leaf in
                                &axis(&self.min_samples_leaf, base.min_samples_leaf)
                            {
                                for &subsample in &axis(&self.subsample, base.subsample) {
                                    out.push(GbtParams {
                                        learning_rate,
                                        max_depth,
                                        n_rounds,
                                        l1_alpha,
                                        l2_lambda,
                                        min_samples_leaf,
                                        subsample,
                                        ..*base
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub params: GbtParams,
    /// Mean fold AUC (logistic) or RMSE (squared); `None` when the cell failed.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: GbtParams,
    pub best_score: f64,
    pub cells: Vec<GridCell>,
}

/// Mean k-fold score of one configuration.
pub fn cv_score(
    x: &FeatureMatrix,
    y: &[f64],
    objective: Objective,
    params: &GbtParams,
    folds: &[(Vec<usize>, Vec<usize>)],
) -> Result<f64> {
    let mut total = 0.0;
    for (train_idx, held_idx) in folds {
        let xt = x.select_rows(train_idx);
        let yt: Vec<f64> = train_idx.iter().map(|&i| y[i]).collect();
        let model = train(&xt, &yt, objective, params, None)?.model;
        let preds = model.predict_matrix(&x.select_rows(held_idx))?;
        let truth: Vec<f64> = held_idx.iter().map(|&i| y[i]).collect();
        total += match objective {
            Objective::Logistic => {
                let labels: Vec<bool> = truth.iter().map(|&t| t == 1.0).collect();
                auc(&preds, &labels)?
            }
            Objective::Squared => rmse(&preds, &truth)?,
        };
    }
    Ok(total / folds.len() as f64)
}

pub fn grid_search(
    x: &FeatureMatrix,
    y: &[f64],
    objective: Objective,
    grid: &GbtGrid,
    base: &GbtParams,
    k: usize,
    seed: u64,
) -> Result<GridSearchResult> {
    if x.n_rows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.n_rows(),
            right: y.len(),
        });
    }
    let candidates = grid.expand(base);
    let folds = fold_indices(&kfold_assignment(y.len(), k, seed)?, k);
    let cells: Vec<GridCell> = candidates
        .par_iter()
        .map(|p| {
            let score = match cv_score(x, y, objective, p, &folds) {
                Ok(s) if s.is_finite() => Some(s),
                Ok(_) => None,
                Err(e) => {
                    log::warn!("grid cell {p:?} failed: {e}");
                    None
                }
            };
            GridCell { params: *p, score }
        })
        .collect();

    let better = |a: f64, b: f64| match objective {
        Objective::Logistic => a > b,
        Objective::Squared => a < b,
    };
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in cells.iter().enumerate() {
        if let Some(s) = c.score {
            if best.is_none_or(|(_, b)| better(s, b)) {
                best = Some((i, s));
            }
        }
    }
    let (i, best_score) = best.ok_or_else(|| Error::invalid("every grid configuration failed"))?;
    Ok(GridSearchResult {
        best: cells[i].params,
        best_score,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expansion_order() {
        let grid = GbtGrid {
            learning_rate: vec![0.1, 0.3],
            max_depth: vec![2, 4],
            ..GbtGrid::default()
        };
        let cells = grid.expand(&GbtParams::default());
        let pairs: Vec<(f64, usize)> = cells
            .iter()
            .map(|p| (p.learning_rate, p.max_depth))
            .collect();
        assert_eq!(pairs, vec![(0.1, 2), (0.1, 4), (0.3, 2), (0.3, 4)]);
        assert!(cells.iter().all(|p| p.n_rounds == 700));
    }
}
