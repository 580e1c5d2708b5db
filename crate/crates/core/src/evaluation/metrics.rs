//! Interval, regression and classification metrics.

use serde::{Deserialize, Serialize};

use crate::conformal::PredictionInterval;
use crate::data::split::{fold_indices, kfold_assignment};
use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::learners::{fit_classifier, GbtParams};

fn same_len(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::LengthMismatch { left: a, right: b })
    }
}

/// Fraction of truths inside their interval; `{0}` covers only (near-)zero truths.
pub fn coverage(intervals: &[PredictionInterval], truths: &[f64]) -> Result<f64> {
    same_len(intervals.len(), truths.len())?;
    if intervals.is_empty() {
        return Err(Error::Empty("coverage input"));
    }
    let hits = intervals
        .iter()
        .zip(truths)
        .filter(|(iv, &y)| iv.contains(y))
        .count();
    Ok(hits as f64 / intervals.len() as f64)
}

/// Mean `upper − lower`; zero singletons contribute 0.
pub fn mean_length(intervals: &[PredictionInterval]) -> Result<f64> {
    if intervals.is_empty() {
        return Err(Error::Empty("interval list"));
    }
    Ok(intervals
        .iter()
        .map(PredictionInterval::length)
        .sum::<f64>()
        / intervals.len() as f64)
}

/// Unweighted mean of per-cutoff values.
pub fn marginal_mean(per_cutoff: &[f64]) -> Result<f64> {
    if per_cutoff.is_empty() {
        return Err(Error::Empty("per-cutoff values"));
    }
    Ok(per_cutoff.iter().sum::<f64>() / per_cutoff.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub rmse: f64,
    pub mae: f64,
    /// NaN when the truths have zero variance.
    pub r2: f64,
}

pub fn rmse(preds: &[f64], truths: &[f64]) -> Result<f64> {
    Ok(regression_metrics(preds, truths)?.rmse)
}

pub fn regression_metrics(preds: &[f64], truths: &[f64]) -> Result<RegressionMetrics> {
    same_len(preds.len(), truths.len())?;
    if preds.is_empty() {
        return Err(Error::Empty("regression metric input"));
    }
    let n = preds.len() as f64;
    let sse: f64 = preds
        .iter()
        .zip(truths)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    let sae: f64 = preds.iter().zip(truths).map(|(p, t)| (p - t).abs()).sum();
    let mean = truths.iter().sum::<f64>() / n;
    let sst: f64 = truths.iter().map(|t| (t - mean) * (t - mean)).sum();
    Ok(RegressionMetrics {
        rmse: (sse / n).sqrt(),
        mae: sae / n,
        r2: if sst > 0.0 { 1.0 - sse / sst } else { f64::NAN },
    })
}

/// Area under the ROC curve via midranks (ties count one half).
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    same_len(scores.len(), labels.len())?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the midrank keeps everything integral.
    let mut twice_rank_sum: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let twice_mid = (start + 1 + end) as u64;
        let pos_in_tie = order[start..end].iter().filter(|&&i| labels[i]).count() as u64;
        twice_rank_sum += twice_mid * pos_in_tie;
        start = end;
    }
    let n_pos64 = n_pos as u64;
    let twice_u = twice_rank_sum - n_pos64 * (n_pos64 + 1);
    Ok(twice_u as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub auc: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

/// AUC plus sensitivity/specificity with scores `>= threshold` called positive.
pub fn classification_metrics(
    scores: &[f64],
    labels: &[bool],
    threshold: f64,
) -> Result<ClassificationMetrics> {
    let auc = auc(scores, labels)?;
    let (mut tp, mut fn_, mut tn, mut fp) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, true) => tp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
        }
    }
    Ok(ClassificationMetrics {
        auc,
        sensitivity: tp as f64 / (tp + fn_) as f64,
        specificity: tn as f64 / (tn + fp) as f64,
    })
}

/// Averages per-fold classifier metrics over `k` folds; folds whose training
/// or held-out labels are single-class are skipped with a warning.
pub fn cross_validated_classification(
    x: &FeatureMatrix,
    labels: &[bool],
    params: &GbtParams,
    k: usize,
    seed: u64,
) -> Result<ClassificationMetrics> {
    same_len(x.n_rows(), labels.len())?;
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::DegenerateLabels);
    }
    let folds = fold_indices(&kfold_assignment(labels.len(), k, seed)?, k);
    let mut acc = Vec::new();
    for (f, (train_idx, held_idx)) in folds.iter().enumerate() {
        let yt: Vec<bool> = train_idx.iter().map(|&i| labels[i]).collect();
        let yh: Vec<bool> = held_idx.iter().map(|&i| labels[i]).collect();
        let single = |v: &[bool]| v.iter().all(|&l| l) || v.iter().all(|&l| !l);
        if single(&yt) || single(&yh) {
            log::warn!("fold {f}: single-class labels, skipped");
            continue;
        }
        let model = fit_classifier(&x.select_rows(train_idx), &yt, params, None)?;
        let scores = model.predict_matrix(&x.select_rows(held_idx))?;
        acc.push(classification_metrics(&scores, &yh, 0.5)?);
    }
    if acc.is_empty() {
        return Err(Error::DegenerateLabels);
    }
    let m = acc.len() as f64;
    Ok(ClassificationMetrics {
        auc: acc.iter().map(|c| c.auc).sum::<f64>() / m,
        sensitivity: acc.iter().map(|c| c.sensitivity).sum::<f64>() / m,
        specificity: acc.iter().map(|c| c.specificity).sum::<f64>() / m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(lo: f64, hi: f64) -> PredictionInterval {
        PredictionInterval::new(lo, hi)
    }

    #[test]
    fn coverage_and_length_examples() {
        assert_eq!(
            coverage(&[iv(0.0, 1.0), iv(2.0, 3.0)], &[0.5, 4.0]).unwrap(),
            0.5
        );
        assert_eq!(
            coverage(&[PredictionInterval::everything()], &[1e300]).unwrap(),
            1.0
        );
        assert_eq!(mean_length(&[iv(0.0, 1.0), iv(0.0, 3.0)]).unwrap(), 2.0);
        assert_eq!(mean_length(&[PredictionInterval::zero(); 3]).unwrap(), 0.0);
        assert!((marginal_mean(&[0.8, 0.9]).unwrap() - 0.85).abs() < 1e-15);
        assert!(coverage(&[iv(0.0, 1.0)], &[]).is_err());
        assert!(coverage(&[], &[]).is_err());
    }

    #[test]
    fn regression_examples() {
        let m = regression_metrics(&[1.0, 2.0], &[2.0, 4.0]).unwrap();
        assert!((m.rmse - 2.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(m.mae, 1.5);
        let perfect = regression_metrics(&[1.0, 3.0], &[1.0, 3.0]).unwrap();
        assert_eq!((perfect.rmse, perfect.mae, perfect.r2), (0.0, 0.0, 1.0));
        assert_eq!(
            regression_metrics(&[2.0, 2.0], &[1.0, 3.0]).unwrap().r2,
            0.0
        );
        assert!(regression_metrics(&[1.0, 1.0], &[2.0, 2.0])
            .unwrap()
            .r2
            .is_nan());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(
            auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap(),
            0.75
        );
        assert_eq!(
            auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(),
            1.0
        );
        assert_eq!(auc(&[0.5, 0.5], &[false, true]).unwrap(), 0.5);
        assert!(auc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn sensitivity_specificity() {
        let c = classification_metrics(&[0.9, 0.4, 0.6, 0.1], &[true, true, false, false], 0.5)
            .unwrap();
        assert_eq!((c.sensitivity, c.specificity), (0.5, 0.5));
    }
}
