//! Horizon × method × cutoff reports and their CSV renderings.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::ConformalMethod;
use crate::data::{make_grouped_split, make_split, Dataset, DatasetSplit, Horizon, SplitFractions};
use crate::error::{Error, Result};
use crate::evaluation::metrics::marginal_mean;
use crate::evaluation::summary::{summarize_grid, EvaluationSummary};
use crate::seed::derive_seed;
use crate::two_stage::{
    default_grid, evaluate_standard, fit_change_classifier, fit_standard, prepare, Partitions,
    TwoStageComponents, TwoStageConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportConfig {
    pub horizons: Vec<Horizon>,
    pub methods: Vec<ConformalMethod>,
    pub grid: Vec<f64>,
    /// Learner parameters, alpha, cutoff mode and gamma formula. The seeds in
    /// here are ignored; every stage derives its own from `seed`.
    pub two_stage: TwoStageConfig,
    pub fractions: SplitFractions,
    /// Keep each patient's samples in one partition.
    pub grouped: bool,
    pub seed: u64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            horizons: Horizon::ALL.to_vec(),
            methods: vec![ConformalMethod::Cvplus, ConformalMethod::Jab],
            grid: default_grid(),
            two_stage: TwoStageConfig::default(),
            fractions: SplitFractions::default(),
            grouped: true,
            seed: 0,
        }
    }
}

/// Partitions a dataset, by patient when `grouped`.
pub fn partition(
    dataset: &Dataset,
    fractions: SplitFractions,
    grouped: bool,
    seed: u64,
) -> Result<DatasetSplit> {
    if grouped {
        make_grouped_split(&dataset.patient_ids(), fractions, seed)
    } else {
        make_split(dataset.len(), fractions, seed)
    }
}

/// Seeds of one horizon's split, classifier and conformal stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSeeds {
    pub split: u64,
    pub classifier: u64,
    pub conformal: u64,
}

impl StageSeeds {
    pub fn derive(root: u64, index: u64) -> Self {
        Self {
            split: derive_seed(root, "split", index),
            classifier: derive_seed(root, "classifier", index),
            conformal: derive_seed(root, "conformal", index),
        }
    }

    pub fn apply(&self, base: &TwoStageConfig, method: ConformalMethod) -> TwoStageConfig {
        let mut cfg = *base;
        cfg.classifier = cfg.classifier.with_seed(self.classifier);
        cfg.conformal.method = method;
        cfg.conformal.seed = self.conformal;
        cfg
    }
}

/// Single-stage comparator next to the two-stage marginal figures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub horizon: Horizon,
    pub method: ConformalMethod,
    pub standard_coverage: f64,
    pub standard_length: f64,
    pub two_stage_marginal_coverage: f64,
    pub two_stage_marginal_length: f64,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonReport {
    pub alpha: f64,
    pub methods: Vec<ConformalMethod>,
    /// Ordered by horizon, then method, then cutoff, as configured.
    pub summaries: Vec<EvaluationSummary>,
    pub baselines: Vec<BaselineRow>,
    pub skipped: Vec<Horizon>,
}

impl HorizonReport {
    pub fn horizons(&self) -> Vec<Horizon> {
        let mut out: Vec<Horizon> = Vec::new();
        for s in &self.summaries {
            if !out.contains(&s.horizon) {
                out.push(s.horizon);
            }
        }
        out
    }

    pub fn cells(&self, horizon: Horizon, method: ConformalMethod) -> Vec<&EvaluationSummary> {
        self.summaries
            .iter()
            .filter(|s| s.horizon == horizon && s.method == method)
            .collect()
    }
}

type MethodBlock = (Vec<EvaluationSummary>, BaselineRow);

fn horizon_block(
    horizon: Horizon,
    dataset: &Dataset,
    config: &ReportConfig,
) -> Result<Vec<MethodBlock>> {
    // Same seeds for every horizon: datasets that share index visits then get
    // the same split and folds, and differences reflect the targets alone.
    let seeds = StageSeeds::derive(config.seed, 0);
    let split = partition(dataset, config.fractions, config.grouped, seeds.split)?;
    let parts = Partitions::new(dataset, &split);
    let base = seeds.apply(&config.two_stage, config.methods[0]);
    let classifier = Arc::new(fit_change_classifier(&parts, &base.classifier)?);
    config
        .methods
        .par_iter()
        .map(|&method| {
            let cfg = seeds.apply(&config.two_stage, method);
            let components =
                TwoStageComponents::with_classifier(&parts, &cfg, Arc::clone(&classifier))?;
            let batch = prepare(&components.classifier, &components.conformal, &parts.test.0)?;
            let rows = summarize_grid(
                horizon,
                &components,
                &parts,
                &batch,
                &config.grid,
                cfg.cutoff_mode,
                cfg.gamma_formula,
            )?;
            let standard = fit_standard(&parts, &cfg.conformal)?;
            let sm = evaluate_standard(&standard, &parts.test.0, &parts.test.1)?;
            let covs: Vec<f64> = rows.iter().map(|r| r.coverage).collect();
            let lens: Vec<f64> = rows.iter().map(|r| r.mean_length).collect();
            let baseline = BaselineRow {
                horizon,
                method,
                standard_coverage: sm.coverage,
                standard_length: sm.mean_length,
                two_stage_marginal_coverage: marginal_mean(&covs)?,
                two_stage_marginal_length: marginal_mean(&lens)?,
                n_test: parts.test.1.len(),
            };
            Ok((rows, baseline))
        })
        .collect()
}

/// Evaluates every configured horizon, method and cutoff. Horizons without a
/// dataset (or with an empty one) are skipped with a warning.
pub fn horizon_report(
    datasets: &BTreeMap<Horizon, Dataset>,
    config: &ReportConfig,
) -> Result<HorizonReport> {
    if config.methods.is_empty() {
        return Err(Error::invalid("report needs at least one conformal method"));
    }
    if config.grid.is_empty() {
        return Err(Error::Empty("cutoff grid"));
    }
    config.fractions.validate()?;
    let mut skipped = Vec::new();
    let mut present = Vec::new();
    for &h in &config.horizons {
        match datasets.get(&h) {
            Some(ds) if !ds.is_empty() => present.push((h, ds)),
            _ => {
                log::warn!("no samples for horizon {h}, skipped");
                skipped.push(h);
            }
        }
    }
    let blocks: Vec<Vec<MethodBlock>> = present
        .par_iter()
        .map(|(h, ds)| horizon_block(*h, ds, config))
        .collect::<Result<_>>()?;
    let mut summaries = Vec::new();
    let mut baselines = Vec::new();
    for block in blocks {
        for (rows, baseline) in block {
            summaries.extend(rows);
            baselines.push(baseline);
        }
    }
    Ok(HorizonReport {
        alpha: config.two_stage.alpha(),
        methods: config.methods.clone(),
        summaries,
        baselines,
        skipped,
    })
}

/// Fixed six-decimal rendering so reports diff cleanly.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x:.6}")
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

/// `Time,Cutoff,RMSE,<method>_coverage,<method>_length,…`; RMSE is that of
/// the first method's point regressor.
pub fn write_table3<W: Write>(w: W, report: &HorizonReport) -> Result<()> {
    let mut out = csv_writer(w);
    let mut header = vec!["Time".to_string(), "Cutoff".to_string(), "RMSE".to_string()];
    for m in &report.methods {
        header.push(format!("{m}_coverage"));
        header.push(format!("{m}_length"));
    }
    out.write_record(&header)?;
    for h in report.horizons() {
        let per_method: Vec<Vec<&EvaluationSummary>> =
            report.methods.iter().map(|&m| report.cells(h, m)).collect();
        for (i, first) in per_method[0].iter().enumerate() {
            let mut row = vec![h.to_string(), fmt_num(first.cutoff), fmt_num(first.rmse)];
            for cells in &per_method {
                row.push(fmt_num(cells[i].coverage));
                row.push(fmt_num(cells[i].mean_length));
            }
            out.write_record(&row)?;
        }
    }
    out.flush().map_err(|e| Error::io("table3", e))?;
    Ok(())
}

/// Coverage against length per cutoff: `method,cutoff,coverage,length,horizon`.
pub fn write_frontier<W: Write>(w: W, report: &HorizonReport) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["method", "cutoff", "coverage", "length", "horizon"])?;
    for s in &report.summaries {
        out.write_record([
            s.method.to_string(),
            fmt_num(s.cutoff),
            fmt_num(s.coverage),
            fmt_num(s.mean_length),
            s.horizon.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("frontier", e))?;
    Ok(())
}

/// `method,cutoff,calibration_error,horizon`.
pub fn write_calibration<W: Write>(w: W, report: &HorizonReport) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["method", "cutoff", "calibration_error", "horizon"])?;
    for s in &report.summaries {
        out.write_record([
            s.method.to_string(),
            fmt_num(s.cutoff),
            fmt_num(s.calibration_error),
            s.horizon.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("calibration", e))?;
    Ok(())
}

pub fn write_baseline<W: Write>(w: W, report: &HorizonReport) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record([
        "horizon",
        "method",
        "standard_coverage",
        "standard_length",
        "two_stage_marginal_coverage",
        "two_stage_marginal_length",
        "n_test",
    ])?;
    for b in &report.baselines {
        out.write_record([
            b.horizon.to_string(),
            b.method.to_string(),
            fmt_num(b.standard_coverage),
            fmt_num(b.standard_length),
            fmt_num(b.two_stage_marginal_coverage),
            fmt_num(b.two_stage_marginal_length),
            b.n_test.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("baseline", e))?;
    Ok(())
}

pub const SUMMARY_HEADER: [&str; 16] = [
    "horizon",
    "method",
    "cutoff",
    "coverage",
    "mean_length",
    "calibration_error",
    "rmse",
    "mae",
    "r2",
    "auc",
    "sensitivity",
    "specificity",
    "n_test",
    "gamma",
    "alpha_r",
    "nominal",
];

/// Every field of every summary.
pub fn write_summaries<W: Write>(w: W, summaries: &[EvaluationSummary], alpha: f64) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(SUMMARY_HEADER)?;
    for s in summaries {
        out.write_record([
            s.horizon.to_string(),
            s.method.to_string(),
            fmt_num(s.cutoff),
            fmt_num(s.coverage),
            fmt_num(s.mean_length),
            fmt_num(s.calibration_error),
            fmt_num(s.rmse),
            fmt_num(s.mae),
            fmt_num(s.r2),
            fmt_num(s.auc),
            fmt_num(s.sensitivity),
            fmt_num(s.specificity),
            s.n_test.to_string(),
            fmt_num(s.gamma),
            fmt_num(s.alpha_r),
            fmt_num(1.0 - alpha),
        ])?;
    }
    out.flush().map_err(|e| Error::io("summary", e))?;
    Ok(())
}
