//! Repeated paired runs of two-stage against single-stage intervals.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SplitFractions};
use crate::error::{Error, Result};
use crate::evaluation::metrics::marginal_mean;
use crate::evaluation::report::{fmt_num, partition, StageSeeds};
use crate::evaluation::stats::{bootstrap_ci, mean, paired_t_test};
use crate::evaluation::summary::SignificanceReport;
use crate::seed::derive_seed;
use crate::two_stage::{
    default_grid, evaluate_standard, fit_standard, prepare, Partitions, TwoStageComponents,
    TwoStageConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignificanceConfig {
    pub n_runs: usize,
    /// Cutoff at which two-stage length and coverage are compared.
    pub cutoff: f64,
    /// Grid over which two-stage marginal coverage is averaged.
    pub grid: Vec<f64>,
    /// Seeds in here are ignored; each run derives its own.
    pub two_stage: TwoStageConfig,
    pub fractions: SplitFractions,
    pub grouped: bool,
    pub n_resamples: usize,
    pub level: f64,
}

impl Default for SignificanceConfig {
    fn default() -> Self {
        Self {
            n_runs: 15,
            cutoff: 0.5,
            grid: default_grid(),
            two_stage: TwoStageConfig::default(),
            fractions: SplitFractions::default(),
            grouped: true,
            n_resamples: 1000,
            level: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub two_stage_coverage: f64,
    pub two_stage_length: f64,
    pub two_stage_marginal_coverage: f64,
    pub two_stage_marginal_length: f64,
    pub standard_coverage: f64,
    pub standard_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceStudy {
    pub runs: Vec<RunRecord>,
    pub reports: Vec<SignificanceReport>,
}

/// One paired run on one dataset: split, fit both models, evaluate on test.
pub fn paired_run(
    dataset: &Dataset,
    run: usize,
    seed: u64,
    config: &SignificanceConfig,
) -> Result<RunRecord> {
    let seeds = StageSeeds::derive(seed, 0);
    let split = partition(dataset, config.fractions, config.grouped, seeds.split)?;
    let parts = Partitions::new(dataset, &split);
    let cfg = seeds.apply(&config.two_stage, config.two_stage.conformal.method);
    let components = TwoStageComponents::fit(&parts, &cfg)?;
    let batch = prepare(&components.classifier, &components.conformal, &parts.test.0)?;
    let truths = &parts.test.1;
    let at = components
        .calibrate(config.cutoff, cfg.cutoff_mode, cfg.gamma_formula)?
        .evaluate_prepared(&batch, truths)?;
    let mut covs = Vec::with_capacity(config.grid.len());
    let mut lens = Vec::with_capacity(config.grid.len());
    for &r in &config.grid {
        let m = components
            .calibrate(r, cfg.cutoff_mode, cfg.gamma_formula)?
            .evaluate_prepared(&batch, truths)?;
        covs.push(m.coverage);
        lens.push(m.mean_length);
    }
    let standard = fit_standard(&parts, &cfg.conformal)?;
    let sm = evaluate_standard(&standard, &parts.test.0, truths)?;
    Ok(RunRecord {
        run,
        seed,
        two_stage_coverage: at.coverage,
        two_stage_length: at.mean_length,
        two_stage_marginal_coverage: marginal_mean(&covs)?,
        two_stage_marginal_length: marginal_mean(&lens)?,
        standard_coverage: sm.coverage,
        standard_length: sm.mean_length,
    })
}

fn compare(
    name: &str,
    a: &[f64],
    b: &[f64],
    config: &SignificanceConfig,
    seed: u64,
) -> Result<Option<SignificanceReport>> {
    let t = match paired_t_test(a, b) {
        Ok(t) => t,
        Err(Error::DegenerateDifferences) => {
            log::warn!("{name}: identical paired differences, comparison skipped");
            return Ok(None);
        }
        Err(e) => return Err(e),
    };
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (ci_low, ci_high) = bootstrap_ci(&diffs, config.n_resamples, config.level, seed)?;
    Ok(Some(SignificanceReport {
        comparison: name.to_string(),
        t_statistic: t.t,
        p_value: t.p,
        cohens_d: t.cohens_d,
        mean_difference: mean(&diffs),
        ci_low,
        ci_high,
        n_runs: a.len(),
    }))
}

/// Paired tests over finished runs:
/// `interval_length` is standard minus two-stage length at the cutoff,
/// `coverage` is two-stage minus standard coverage at the cutoff and
/// `marginal_coverage` uses the grid-averaged two-stage coverage.
pub fn significance_reports(
    runs: &[RunRecord],
    config: &SignificanceConfig,
    seed: u64,
) -> Result<Vec<SignificanceReport>> {
    let col = |f: fn(&RunRecord) -> f64| runs.iter().map(f).collect::<Vec<f64>>();
    let specs: [(&str, Vec<f64>, Vec<f64>); 3] = [
        (
            "interval_length",
            col(|r| r.standard_length),
            col(|r| r.two_stage_length),
        ),
        (
            "coverage",
            col(|r| r.two_stage_coverage),
            col(|r| r.standard_coverage),
        ),
        (
            "marginal_coverage",
            col(|r| r.two_stage_marginal_coverage),
            col(|r| r.standard_coverage),
        ),
    ];
    let mut out = Vec::new();
    for (i, (name, a, b)) in specs.iter().enumerate() {
        if let Some(r) = compare(
            name,
            a,
            b,
            config,
            derive_seed(seed, "significance-bootstrap", i as u64),
        )? {
            out.push(r);
        }
    }
    Ok(out)
}

/// Runs `n_runs` paired comparisons. `make_dataset(run, seed)` supplies each
/// run's data, e.g. a fresh synthetic cohort or the same dataset every time
/// (then only the split and model seeds vary).
pub fn significance_study<F>(
    make_dataset: F,
    root_seed: u64,
    config: &SignificanceConfig,
) -> Result<SignificanceStudy>
where
    F: Fn(usize, u64) -> Result<Dataset> + Sync,
{
    if config.n_runs < 2 {
        return Err(Error::InsufficientSamples(format!(
            "significance needs at least 2 runs, got {}",
            config.n_runs
        )));
    }
    let runs: Vec<RunRecord> = (0..config.n_runs)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(root_seed, "significance-run", i as u64);
            paired_run(&make_dataset(i, seed)?, i, seed, config)
        })
        .collect::<Result<_>>()?;
    let reports = significance_reports(&runs, config, root_seed)?;
    Ok(SignificanceStudy { runs, reports })
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

/// `comparison,t,p,d,ci_low,ci_high,mean_difference,n_runs`.
pub fn write_significance<W: Write>(w: W, reports: &[SignificanceReport]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record([
        "comparison",
        "t",
        "p",
        "d",
        "ci_low",
        "ci_high",
        "mean_difference",
        "n_runs",
    ])?;
    for r in reports {
        out.write_record([
            r.comparison.clone(),
            fmt_num(r.t_statistic),
            format!("{:.6e}", r.p_value),
            fmt_num(r.cohens_d),
            fmt_num(r.ci_low),
            fmt_num(r.ci_high),
            fmt_num(r.mean_difference),
            r.n_runs.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("significance", e))?;
    Ok(())
}

/// Per-run values with their seeds.
pub fn write_runs<W: Write>(w: W, runs: &[RunRecord]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record([
        "run",
        "seed",
        "two_stage_coverage",
        "two_stage_length",
        "two_stage_marginal_coverage",
        "two_stage_marginal_length",
        "standard_coverage",
        "standard_length",
    ])?;
    for r in runs {
        out.write_record([
            r.run.to_string(),
            r.seed.to_string(),
            fmt_num(r.two_stage_coverage),
            fmt_num(r.two_stage_length),
            fmt_num(r.two_stage_marginal_coverage),
            fmt_num(r.two_stage_marginal_length),
            fmt_num(r.standard_coverage),
            fmt_num(r.standard_length),
        ])?;
    }
    out.flush().map_err(|e| Error::io("descriptive", e))?;
    Ok(())
}
