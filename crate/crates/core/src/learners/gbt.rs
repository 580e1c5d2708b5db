//! Second-order gradient boosting with exact greedy splits.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::learners::params::{GbtParams, Objective};
use crate::learners::tree::Tree;
use crate::seed::derived_rng;

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MIN_HESSIAN: f64 = 1e-16;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Log-loss of raw score `z` against label `y ∈ {0, 1}`.
pub fn logistic_loss(z: f64, y: f64) -> f64 {
    softplus(z) - y * z
}

/// First and second derivative of [`logistic_loss`] with respect to `z`.
pub fn logistic_grad_hess(z: f64, y: f64) -> (f64, f64) {
    let p = sigmoid(z);
    (p - y, (p * (1.0 - p)).max(MIN_HESSIAN))
}

fn soft_threshold(g: f64, alpha: f64) -> f64 {
    if g > alpha {
        g - alpha
    } else if g < -alpha {
        g + alpha
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub format_version: u32,
    pub objective: Objective,
    pub base_score: f64,
    pub n_features: usize,
    pub params: GbtParams,
    pub trees: Vec<Tree>,
}

/// Held-out data monitored for early stopping.
#[derive(Debug, Clone, Copy)]
pub struct EvalSet<'a> {
    pub x: &'a FeatureMatrix,
    pub y: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: GbtModel,
    /// Mean training loss before any tree and after each round.
    pub train_loss: Vec<f64>,
    /// Eval metric after each round, when an eval set was given.
    pub eval_metric: Vec<f64>,
    pub best_round: usize,
}

impl GbtModel {
    pub fn predict_raw(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features {
            return Err(Error::ArityMismatch {
                expected: self.n_features,
                found: row.len(),
            });
        }
        Ok(self.raw_unchecked(row))
    }

    fn raw_unchecked(&self, row: &[f64]) -> f64 {
        self.trees
            .iter()
            .fold(self.base_score, |acc, t| acc + t.predict(row))
    }

    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.predict_raw(row)?))
    }

    pub fn predict_value(&self, row: &[f64]) -> Result<f64> {
        self.predict_raw(row)
    }

    /// Probability for logistic models, raw value for squared.
    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        let raw = self.predict_raw(row)?;
        Ok(match self.objective {
            Objective::Logistic => sigmoid(raw),
            Objective::Squared => raw,
        })
    }

    pub fn predict_matrix(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        if x.n_cols() != self.n_features && !x.is_empty() {
            return Err(Error::ArityMismatch {
                expected: self.n_features,
                found: x.n_cols(),
            });
        }
        Ok(x.rows()
            .map(|r| {
                let raw = self.raw_unchecked(r);
                match self.objective {
                    Objective::Logistic => sigmoid(raw),
                    Objective::Squared => raw,
                }
            })
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: GbtModel = serde_json::from_str(text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(model.format_version));
        }
        Ok(model)
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

pub fn fit_classifier(
    x: &FeatureMatrix,
    y: &[bool],
    params: &GbtParams,
    eval: Option<(&FeatureMatrix, &[bool])>,
) -> Result<GbtModel> {
    let yf: Vec<f64> = y.iter().map(|&b| f64::from(u8::from(b))).collect();
    let eval_y: Option<Vec<f64>> =
        eval.map(|(_, ey)| ey.iter().map(|&b| f64::from(u8::from(b))).collect());
    let eval_set = eval
        .zip(eval_y.as_deref())
        .map(|((ex, _), ey)| EvalSet { x: ex, y: ey });
    Ok(train(x, &yf, Objective::Logistic, params, eval_set)?.model)
}

pub fn fit_regressor(
    x: &FeatureMatrix,
    y: &[f64],
    params: &GbtParams,
    eval: Option<(&FeatureMatrix, &[f64])>,
) -> Result<GbtModel> {
    let eval_set = eval.map(|(ex, ey)| EvalSet { x: ex, y: ey });
    Ok(train(x, y, Objective::Squared, params, eval_set)?.model)
}

fn check_inputs(x: &FeatureMatrix, y: &[f64], objective: Objective) -> Result<()> {
    if x.n_rows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.n_rows(),
            right: y.len(),
        });
    }
    if y.len() < 2 {
        return Err(Error::InsufficientSamples(format!(
            "boosting needs at least 2 rows, got {}",
            y.len()
        )));
    }
    x.check_finite()?;
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteTarget(i));
    }
    if objective == Objective::Logistic {
        if y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::invalid("logistic labels must be 0 or 1"));
        }
        let pos = y.iter().filter(|&&v| v == 1.0).count();
        if pos == 0 || pos == y.len() {
            return Err(Error::DegenerateLabels);
        }
    }
    Ok(())
}

fn initial_score(y: &[f64], objective: Objective) -> f64 {
    match objective {
        Objective::Logistic => {
            let p = y.iter().sum::<f64>() / y.len() as f64;
            (p / (1.0 - p)).ln()
        }
        Objective::Squared => {
            // Summing in sorted order offset by the minimum makes the mean
            // independent of row order and exact for constant targets.
            let mut s = y.to_vec();
            s.sort_by(f64::total_cmp);
            let anchor = s[0];
            anchor + s.iter().map(|v| v - anchor).sum::<f64>() / s.len() as f64
        }
    }
}

fn mean_loss(pred: &[f64], y: &[f64], objective: Objective) -> f64 {
    let total: f64 = match objective {
        Objective::Logistic => pred.iter().zip(y).map(|(&z, &t)| logistic_loss(z, t)).sum(),
        Objective::Squared => pred.iter().zip(y).map(|(&z, &t)| (z - t) * (z - t)).sum(),
    };
    total / y.len() as f64
}

/// Eval metric where smaller is better: log-loss or RMSE.
fn eval_metric(pred: &[f64], y: &[f64], objective: Objective) -> f64 {
    match objective {
        Objective::Logistic => mean_loss(pred, y, objective),
        Objective::Squared => mean_loss(pred, y, objective).sqrt(),
    }
}

/// Per-feature row orders sorted by value, ties broken by the full row and
/// then the target so the order depends only on row contents.
fn presort(x: &FeatureMatrix, y: &[f64]) -> Vec<Vec<u32>> {
    let n = x.n_rows();
    let content_cmp = |a: usize, b: usize| -> Ordering {
        x.row(a)
            .iter()
            .zip(x.row(b))
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
            .then(y[a].total_cmp(&y[b]))
    };
    let mut base: Vec<u32> = (0..n as u32).collect();
    base.sort_by(|&a, &b| content_cmp(a as usize, b as usize));
    (0..x.n_cols())
        .map(|f| {
            let mut order = base.clone();
            // Stable sort keeps the content order among equal values.
            order.sort_by(|&a, &b| x.get(a as usize, f).total_cmp(&x.get(b as usize, f)));
            order
        })
        .collect()
}

/// Fits a boosted ensemble and reports the per-round losses.
pub fn train(
    x: &FeatureMatrix,
    y: &[f64],
    objective: Objective,
    params: &GbtParams,
    eval: Option<EvalSet<'_>>,
) -> Result<TrainOutcome> {
    params.validate()?;
    check_inputs(x, y, objective)?;
    if let Some(e) = eval {
        if e.x.n_cols() != x.n_cols() {
            return Err(Error::ArityMismatch {
                expected: x.n_cols(),
                found: e.x.n_cols(),
            });
        }
        if e.x.n_rows() != e.y.len() {
            return Err(Error::LengthMismatch {
                left: e.x.n_rows(),
                right: e.y.len(),
            });
        }
    }

    let n = y.len();
    let base_score = initial_score(y, objective);
    let mut model = GbtModel {
        format_version: MODEL_FORMAT_VERSION,
        objective,
        base_score,
        n_features: x.n_cols(),
        params: *params,
        trees: Vec::new(),
    };
    let orders = presort(x, y);
    let mut pred = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut train_loss = vec![mean_loss(&pred, y, objective)];

    let mut eval_pred: Option<Vec<f64>> = eval.map(|e| vec![base_score; e.y.len()]);
    let mut eval_history = Vec::new();
    let mut best = (f64::INFINITY, 0usize);
    if let (Some(e), Some(ep)) = (eval, &eval_pred) {
        best = (eval_metric(ep, e.y, objective), 0);
    }

    let mut builder = TreeBuilder::new(x, params, &orders);
    let sample_size = ((params.subsample * n as f64).ceil() as usize).clamp(1, n);

    for round in 0..params.n_rounds {
        for i in 0..n {
            let (g, h) = match objective {
                Objective::Logistic => logistic_grad_hess(pred[i], y[i]),
                Objective::Squared => (pred[i] - y[i], 1.0),
            };
            grad[i] = g;
            hess[i] = h;
        }
        let active = if sample_size < n {
            let mut rng = derived_rng(params.seed, "gbt-subsample", round as u64);
            let mut picked = index::sample(&mut rng, n, sample_size).into_vec();
            picked.sort_unstable();
            Some(picked)
        } else {
            None
        };
        let tree = builder.build(&grad, &hess, active.as_deref());
        for (i, p) in pred.iter_mut().enumerate() {
            *p += tree.predict(x.row(i));
        }
        train_loss.push(mean_loss(&pred, y, objective));

        if let (Some(e), Some(ep)) = (eval, eval_pred.as_mut()) {
            for (p, row) in ep.iter_mut().zip(e.x.rows()) {
                *p += tree.predict(row);
            }
            let metric = eval_metric(ep, e.y, objective);
            eval_history.push(metric);
            if metric < best.0 {
                best = (metric, round + 1);
            }
        }
        model.trees.push(tree);

        if let Some(patience) = params.early_stopping_rounds {
            if eval.is_some() && round + 1 - best.1 >= patience {
                break;
            }
        }
    }

    let best_round = if eval.is_some() && params.early_stopping_rounds.is_some() {
        model.trees.truncate(best.1);
        train_loss.truncate(best.1 + 1);
        best.1
    } else {
        model.trees.len()
    };
    Ok(TrainOutcome {
        model,
        train_loss,
        eval_metric: eval_history,
        best_round,
    })
}

struct SplitChoice {
    gain: f64,
    feature: usize,
    /// Number of rows (in the feature's sorted order) going left.
    left_count: usize,
    threshold: f64,
}

struct TreeBuilder<'a> {
    x: &'a FeatureMatrix,
    params: &'a GbtParams,
    orders: &'a [Vec<u32>],
    /// Per feature, the active rows in sorted order; nodes own contiguous ranges.
    buf: Vec<Vec<u32>>,
    scratch: Vec<u32>,
    goes_left: Vec<bool>,
    in_sample: Vec<bool>,
}

impl<'a> TreeBuilder<'a> {
    fn new(x: &'a FeatureMatrix, params: &'a GbtParams, orders: &'a [Vec<u32>]) -> Self {
        let n = x.n_rows();
        Self {
            x,
            params,
            orders,
            buf: vec![Vec::with_capacity(n); x.n_cols()],
            scratch: Vec::with_capacity(n),
            goes_left: vec![false; n],
            in_sample: vec![true; n],
        }
    }

    fn score(&self, g: f64, h: f64) -> f64 {
        let s = soft_threshold(g, self.params.l1_alpha);
        s * s / (h + self.params.l2_lambda)
    }

    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        let w = -soft_threshold(g, self.params.l1_alpha) / (h + self.params.l2_lambda);
        // Avoid -0.0 leaves so zero-gradient trees stay bit-neutral.
        self.params.learning_rate * w + 0.0
    }

    fn build(&mut self, grad: &[f64], hess: &[f64], active: Option<&[usize]>) -> Tree {
        if let Some(rows) = active {
            self.in_sample.iter_mut().for_each(|v| *v = false);
            for &i in rows {
                self.in_sample[i] = true;
            }
        } else {
            self.in_sample.iter_mut().for_each(|v| *v = true);
        }
        for (f, order) in self.orders.iter().enumerate() {
            let buf = &mut self.buf[f];
            buf.clear();
            buf.extend(
                order
                    .iter()
                    .copied()
                    .filter(|&i| self.in_sample[i as usize]),
            );
        }
        let m = self
            .buf
            .first()
            .map_or(active.map_or(self.x.n_rows(), <[usize]>::len), Vec::len);
        let mut tree = Tree::default();
        let root = tree.push_leaf(0.0, m as u32);
        self.grow(&mut tree, root, 0, m, 0, grad, hess);
        tree
    }

    #[allow(clippy::too_many_arguments)]
    fn grow(
        &mut self,
        tree: &mut Tree,
        node: usize,
        start: usize,
        end: usize,
        depth: usize,
        grad: &[f64],
        hess: &[f64],
    ) {
        let (g, h) = match self.buf.first() {
            Some(order) => order[start..end].iter().fold((0.0, 0.0), |(g, h), &i| {
                (g + grad[i as usize], h + hess[i as usize])
            }),
            None => (0.0, 0.0),
        };
        tree.value[node] = self.leaf_value(g, h);
        if depth >= self.params.max_depth || end - start < 2 * self.params.min_samples_leaf {
            return;
        }
        let Some(split) = self.best_split(start, end, g, h, grad, hess) else {
            return;
        };

        let order = &self.buf[split.feature][start..end];
        for (k, &i) in order.iter().enumerate() {
            self.goes_left[i as usize] = k < split.left_count;
        }
        for f in 0..self.buf.len() {
            let seg = &mut self.buf[f][start..end];
            self.scratch.clear();
            self.scratch
                .extend(seg.iter().copied().filter(|&i| self.goes_left[i as usize]));
            self.scratch
                .extend(seg.iter().copied().filter(|&i| !self.goes_left[i as usize]));
            seg.copy_from_slice(&self.scratch);
        }

        let mid = start + split.left_count;
        let l = tree.push_leaf(0.0, split.left_count as u32);
        let r = tree.push_leaf(0.0, (end - mid) as u32);
        tree.make_split(node, split.feature, split.threshold, l, r);
        self.grow(tree, l, start, mid, depth + 1, grad, hess);
        self.grow(tree, r, mid, end, depth + 1, grad, hess);
    }

    fn best_split(
        &self,
        start: usize,
        end: usize,
        g: f64,
        h: f64,
        grad: &[f64],
        hess: &[f64],
    ) -> Option<SplitChoice> {
        let min_leaf = self.params.min_samples_leaf;
        let parent = self.score(g, h);
        let mut best: Option<SplitChoice> = None;
        for (f, order) in self.buf.iter().enumerate() {
            let seg = &order[start..end];
            let (mut gl, mut hl) = (0.0, 0.0);
            for k in 0..seg.len() - 1 {
                let i = seg[k] as usize;
                gl += grad[i];
                hl += hess[i];
                let left_count = k + 1;
                if left_count < min_leaf {
                    continue;
                }
                if seg.len() - left_count < min_leaf {
                    break;
                }
                let v = self.x.get(i, f);
                let next = self.x.get(seg[k + 1] as usize, f);
                if v >= next {
                    continue;
                }
                let gain = 0.5 * (self.score(gl, hl) + self.score(g - gl, h - hl) - parent);
                if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mut threshold = v + (next - v) * 0.5;
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some(SplitChoice {
                        gain,
                        feature: f,
                        left_count,
                        threshold,
                    });
                }
            }
        }
        best
    }
}
