//! Cutoff sweeps over a fixed fit.

use serde::{Deserialize, Serialize};

use crate::conformal::ConformalMethod;
use crate::data::{Dataset, DatasetSplit};
use crate::error::{Error, Result};
use crate::two_stage::calibration::{CutoffMode, GammaFormula};
use crate::two_stage::model::{prepare, Partitions, TwoStageComponents, TwoStageConfig};

pub const SWEEP_HEADER: [&str; 11] = [
    "r",
    "mode",
    "method",
    "alpha",
    "coverage",
    "mean_length",
    "rmse",
    "n_abstained",
    "n_predicted_change",
    "beta_hat",
    "gamma",
];

/// `start, start + step, …` up to and including `stop`, rounded to 1e-10.
pub fn cutoff_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if step.is_nan() || step <= 0.0 || stop < start {
        return Err(Error::invalid(format!("bad grid {start}:{stop}:{step}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n)
        .map(|i| ((start + i as f64 * step) * 1e10).round() / 1e10)
        .collect())
}

/// Parses `start:stop:step` or a comma-separated list.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::invalid(format!("cannot parse grid `{spec}`"));
    if spec.contains(':') {
        let parts: Vec<f64> = spec
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        match parts.as_slice() {
            [a, b, c] => cutoff_grid(*a, *b, *c),
            _ => Err(bad()),
        }
    } else {
        spec.split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect()
    }
}

pub fn default_grid() -> Vec<f64> {
    cutoff_grid(0.0, 0.95, 0.05).expect("static grid")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub r: f64,
    pub mode: CutoffMode,
    pub method: ConformalMethod,
    pub alpha: f64,
    pub coverage: f64,
    pub mean_length: f64,
    pub rmse: f64,
    pub n_abstained: usize,
    pub n_predicted_change: usize,
    /// NaN when nothing in the validation set was abstained on.
    pub beta_hat: f64,
    pub gamma: f64,
    pub alpha_r: f64,
}

impl SweepCell {
    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.r.to_string(),
            self.mode.to_string(),
            self.method.to_string(),
            self.alpha.to_string(),
            self.coverage.to_string(),
            self.mean_length.to_string(),
            self.rmse.to_string(),
            self.n_abstained.to_string(),
            self.n_predicted_change.to_string(),
            self.beta_hat.to_string(),
            self.gamma.to_string(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
    /// Shortest cell meeting `coverage ≥ 1 − alpha`, else the best-covered one.
    pub best: usize,
    pub feasible: bool,
}

pub fn select_best(cells: &[SweepCell]) -> Option<(usize, bool)> {
    let mut feasible: Option<usize> = None;
    for (i, c) in cells.iter().enumerate() {
        if c.coverage >= 1.0 - c.alpha
            && feasible.is_none_or(|b| c.mean_length < cells[b].mean_length)
        {
            feasible = Some(i);
        }
    }
    if let Some(i) = feasible {
        return Some((i, true));
    }
    let mut best: Option<usize> = None;
    for (i, c) in cells.iter().enumerate() {
        if best.is_none_or(|b| c.coverage > cells[b].coverage) {
            best = Some(i);
        }
    }
    best.map(|i| (i, false))
}

/// Evaluates every cutoff on the test partition of already fitted components.
pub fn sweep_components(
    components: &TwoStageComponents,
    parts: &Partitions,
    grid: &[f64],
    mode: CutoffMode,
    formula: GammaFormula,
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::Empty("cutoff grid"));
    }
    let (xt, yt) = &parts.test;
    let batch = prepare(&components.classifier, &components.conformal, xt)?;
    let cells = grid
        .iter()
        .map(|&r| {
            let model = components.calibrate(r, mode, formula)?;
            let m = model.evaluate_prepared(&batch, yt)?;
            Ok(SweepCell {
                r,
                mode,
                method: components.conformal.method,
                alpha: components.alpha,
                coverage: m.coverage,
                mean_length: m.mean_length,
                rmse: m.rmse,
                n_abstained: m.n_abstained,
                n_predicted_change: m.n_predicted_change,
                beta_hat: model.beta_hat.value().unwrap_or(f64::NAN),
                gamma: model.gamma,
                alpha_r: model.alpha_r,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (best, feasible) = select_best(&cells).expect("grid non-empty");
    Ok(SweepResult {
        cells,
        best,
        feasible,
    })
}

/// Fits once and sweeps the cutoff grid.
pub fn sweep_r(
    dataset: &Dataset,
    split: &DatasetSplit,
    config: &TwoStageConfig,
    grid: &[f64],
) -> Result<SweepResult> {
    let parts = Partitions::new(dataset, split);
    let components = TwoStageComponents::fit(&parts, config)?;
    sweep_components(
        &components,
        &parts,
        grid,
        config.cutoff_mode,
        config.gamma_formula,
    )
}
