//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use zicp_core::conformal::ConformalConfig;
use zicp_core::data::{
    is_zero_target, load_demographics, load_visits, read_samples, write_samples, Dataset, Horizon,
};
use zicp_core::evaluation::{
    cross_validated_classification, fmt_num, frontier_svg, horizon_report, model_importance,
    partition, significance_study, write_baseline, write_calibration, write_frontier, write_runs,
    write_significance, write_summaries, write_table3, ImportanceMetric, ReportConfig,
    SignificanceConfig, StageSeeds,
};
use zicp_core::learners::{grid_search, GbtGrid, Objective};
use zicp_core::ledd::{
    apply_winsor_bounds, build_supervised, ledd_series, ConversionTable, FeatureConfig,
    WinsorBounds, WinsorPolicy,
};
use zicp_core::seed::derive_seed;
use zicp_core::synthetic::{generate, CohortSpec};
use zicp_core::two_stage::{
    evaluate_standard, fit_standard, Partitions, TwoStageComponents, TwoStageConfig,
};

use crate::args::{ConformalArgs, DatagenArgs, LeddArgs, OutDirArgs, RunFlags, TrainArgs};
use crate::config::{hash16, FileConfig, RunConfig};
use crate::failure::Failure;

const SINGLE: [Horizon; 1] = [Horizon::OneYear];

fn file_config(flags: &RunFlags) -> Result<FileConfig, Failure> {
    match &flags.config {
        Some(p) => FileConfig::load(p),
        None => Ok(FileConfig::default()),
    }
}

fn require_file(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::data(format!(
            "input file {} does not exist",
            path.display()
        )))
    }
}

fn prepare_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::data(format!("cannot create {}: {e}", dir.display())))
}

fn validate_inputs(flags: &RunFlags) -> Result<(), Failure> {
    for p in [&flags.config, &flags.data, &flags.spec]
        .into_iter()
        .flatten()
    {
        require_file(p)?;
    }
    Ok(())
}

/// Writes `body` to `path` after the reproducibility header.
fn write_with_header(path: &Path, header: &str, body: &[u8]) -> Result<(), Failure> {
    let mut bytes = header.as_bytes().to_vec();
    bytes.extend_from_slice(body);
    fs::write(path, bytes)
        .map_err(|e| Failure::data(format!("cannot write {}: {e}", path.display())))
}

fn write_csv<F>(path: &Path, cfg: &RunConfig, render: F) -> Result<(), Failure>
where
    F: FnOnce(&mut Vec<u8>) -> zicp_core::Result<()>,
{
    let mut body = Vec::new();
    render(&mut body)?;
    write_with_header(path, &cfg.csv_header(), &body)
}

#[derive(Serialize)]
struct Provenance<'a> {
    zicp: &'a str,
    seed: u64,
    config_hash: String,
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    provenance: Provenance<'a>,
    #[serde(flatten)]
    payload: &'a T,
}

fn write_json<T: Serialize>(path: &Path, cfg: &RunConfig, payload: &T) -> Result<(), Failure> {
    let stamped = Stamped {
        provenance: Provenance {
            zicp: env!("CARGO_PKG_VERSION"),
            seed: cfg.seed,
            config_hash: cfg.hash(),
        },
        payload,
    };
    let text = serde_json::to_string_pretty(&stamped).map_err(|e| Failure::data(e.to_string()))?;
    fs::write(path, text + "\n")
        .map_err(|e| Failure::data(format!("cannot write {}: {e}", path.display())))
}

fn two_stage_config(cfg: &RunConfig) -> TwoStageConfig {
    TwoStageConfig {
        classifier: cfg.classifier,
        conformal: ConformalConfig {
            method: cfg.methods[0],
            alpha: cfg.alpha,
            params: cfg.regressor,
            folds: cfg.folds,
            bootstraps: cfg.bootstraps,
            seed: 0,
        },
        r: cfg.cutoff,
        cutoff_mode: cfg.cutoff_mode,
        gamma_formula: cfg.gamma_formula,
    }
}

fn report_config(cfg: &RunConfig) -> ReportConfig {
    ReportConfig {
        horizons: cfg.horizons.clone(),
        methods: cfg.methods.clone(),
        grid: cfg.grid.clone(),
        two_stage: two_stage_config(cfg),
        fractions: cfg.fractions,
        grouped: cfg.grouped,
        seed: cfg.seed,
    }
}

/// Per-horizon datasets from `--data`, or from the synthetic cohort.
fn load_datasets(flags: &RunFlags, cfg: &RunConfig) -> Result<BTreeMap<Horizon, Dataset>, Failure> {
    let all = match (&flags.data, &cfg.cohort) {
        (Some(path), _) => read_samples(path)?,
        (None, Some(spec)) => generate(spec)?.dataset,
        (None, None) => {
            return Err(Failure::usage(
                "no data: pass --data or use a synthetic cohort",
            ))
        }
    };
    let mut out = BTreeMap::new();
    for &h in &cfg.horizons {
        let ds = all.for_horizon(h);
        if ds.is_empty() {
            log::warn!("no samples for horizon {h}");
        }
        out.insert(h, ds);
    }
    Ok(out)
}

fn single_dataset(flags: &RunFlags, cfg: &RunConfig) -> Result<(Horizon, Dataset), Failure> {
    let h = cfg.horizons[0];
    match load_datasets(flags, cfg)?.remove(&h) {
        Some(ds) if !ds.is_empty() => Ok((h, ds)),
        _ => Err(Failure::data(format!("no samples for horizon {h}"))),
    }
}

fn io_err(what: &str, e: std::io::Error) -> zicp_core::Error {
    zicp_core::Error::Io {
        path: what.into(),
        source: e,
    }
}

fn setup(
    command: &str,
    flags: &RunFlags,
    uses_cohort: bool,
    default_horizons: &[Horizon],
) -> Result<RunConfig, Failure> {
    validate_inputs(flags)?;
    let file = file_config(flags)?;
    RunConfig::resolve(command, flags, &file, uses_cohort, default_horizons)
}

pub fn datagen(args: &DatagenArgs) -> Result<(), Failure> {
    let cfg = setup("datagen", &args.run, true, &Horizon::ALL)?;
    let spec = cfg.cohort.clone().expect("datagen always has a cohort");
    let cohort = generate(&spec)?;
    let mut ds = cohort.dataset.clone();
    ds.samples.retain(|s| cfg.horizons.contains(&s.horizon));
    write_samples(&args.out, &ds, &cfg.header_lines())?;
    if let Some(path) = &args.truth {
        write_json(path, &cfg, &cohort.truth)?;
    }
    log::info!(
        "wrote {} samples ({:.1}% zero)",
        ds.len(),
        100.0 * ds.zero_fraction()
    );
    Ok(())
}

fn winsor_mode(token: &str) -> Result<Option<WinsorPolicy>, Failure> {
    // `None` means fit on the training partition.
    match token {
        "train" => Ok(None),
        "all" => Ok(Some(WinsorPolicy::default())),
        "skip" => Ok(Some(WinsorPolicy::Skip)),
        other => {
            let bad = || {
                Failure::usage(format!(
                    "--winsor expects train, all, skip or lo:hi, got `{other}`"
                ))
            };
            let (lo, hi) = other.split_once(':').ok_or_else(bad)?;
            let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
            let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(bad());
            }
            Ok(Some(WinsorPolicy::Fixed(WinsorBounds { lo, hi })))
        }
    }
}

pub fn ledd(args: &LeddArgs) -> Result<(), Failure> {
    require_file(&args.visits)?;
    for p in [&args.demographics, &args.factors].into_iter().flatten() {
        require_file(p)?;
    }
    let mode = winsor_mode(&args.winsor)?;
    let mut cfg = setup("ledd", &args.run, false, &Horizon::ALL)?;
    let visits_bytes = fs::read(&args.visits)
        .map_err(|e| Failure::data(format!("cannot read {}: {e}", args.visits.display())))?;
    cfg.input_sha256 = Some(hash16(&visits_bytes));

    let table = match &args.factors {
        Some(p) => ConversionTable::load(p)?,
        None => ConversionTable::bundled(),
    };
    let load = load_visits(&args.visits, &table)?;
    if !load.rejected.is_empty() {
        log::warn!("{} visit rows rejected", load.rejected.len());
    }
    let series = ledd_series(&load.records, &table)?;
    let demographics = match &args.demographics {
        Some(p) => load_demographics(p)?,
        None => Default::default(),
    };
    let features = FeatureConfig {
        slack_days: args.slack_days,
        winsor: mode.unwrap_or(WinsorPolicy::Skip),
        demographics,
    };
    let split_seed = StageSeeds::derive(cfg.seed, 0).split;
    let mut header = cfg.header_lines();
    let mut samples = Vec::new();
    for &h in &cfg.horizons {
        let built = build_supervised(&series, h, &features)?;
        let mut ds = built.dataset;
        let mut bounds = built.bounds;
        if mode.is_none() && !ds.is_empty() {
            // Same split the modelling commands will draw, so test targets never inform the clamp.
            let split = partition(&ds, cfg.fractions, cfg.grouped, split_seed)?;
            let train: Vec<f64> = split
                .train_idx
                .iter()
                .map(|&i| ds.samples[i].target)
                .collect();
            if !train.is_empty() {
                let (lo, hi) = match WinsorPolicy::default() {
                    WinsorPolicy::FitAll { lo_pct, hi_pct } => (lo_pct, hi_pct),
                    _ => unreachable!("default policy fits percentiles"),
                };
                let b = WinsorBounds::fit(&train, lo, hi)?;
                apply_winsor_bounds(&mut ds, b);
                bounds = Some(b);
            }
        }
        header.push(match bounds {
            Some(b) => format!(
                "horizon={h} samples={} skipped_zero_base={} winsor_lo={} winsor_hi={}",
                ds.len(),
                built.skipped_zero_base,
                b.lo,
                b.hi
            ),
            None => format!(
                "horizon={h} samples={} skipped_zero_base={} winsor=none",
                ds.len(),
                built.skipped_zero_base
            ),
        });
        samples.extend(ds.samples);
    }
    let ds = Dataset::with_default_features(samples)?;
    write_samples(&args.out, &ds, &header)?;
    Ok(())
}

#[derive(Serialize)]
struct TrainedModel<'a> {
    horizon: Horizon,
    model: &'a zicp_core::two_stage::TwoStageModel,
}

pub fn train(args: &TrainArgs) -> Result<(), Failure> {
    let mut cfg = setup("train", &args.run, true, &SINGLE)?;
    prepare_dir(&args.out_dir)?;
    let (h, ds) = single_dataset(&args.run, &cfg)?;
    let seeds = StageSeeds::derive(cfg.seed, 0);
    let split = partition(&ds, cfg.fractions, cfg.grouped, seeds.split)?;
    let parts = Partitions::new(&ds, &split);

    let mut tuning = None;
    if args.tune {
        let labels: Vec<f64> = parts
            .train
            .1
            .iter()
            .map(|&y| if is_zero_target(y) { 0.0 } else { 1.0 })
            .collect();
        let grid = GbtGrid {
            max_depth: vec![3, 5, 7],
            n_rounds: vec![100, 300],
            ..GbtGrid::default()
        };
        let result = grid_search(
            &parts.train.0,
            &labels,
            Objective::Logistic,
            &grid,
            &cfg.classifier,
            cfg.folds,
            derive_seed(cfg.seed, "tune", 0),
        )?;
        cfg.classifier = result.best;
        tuning = Some(result);
    }

    let ts = seeds.apply(&two_stage_config(&cfg), cfg.methods[0]);
    let components = TwoStageComponents::fit(&parts, &ts)?;
    let model = components.calibrate(cfg.cutoff, cfg.cutoff_mode, cfg.gamma_formula)?;
    let batch = model.prepare(&parts.test.0)?;
    let cell = model.evaluate_prepared(&batch, &parts.test.1)?;
    let labels: Vec<bool> = ds.samples.iter().map(|s| !s.is_zero).collect();
    let cv = cross_validated_classification(
        &ds.features(),
        &labels,
        &ts.classifier,
        10,
        derive_seed(cfg.seed, "classifier-cv", 0),
    )?;

    write_json(
        &args.out_dir.join("model.json"),
        &cfg,
        &TrainedModel {
            horizon: h,
            model: &model,
        },
    )?;
    let mut rows: Vec<(String, String)> = vec![
        ("horizon".into(), h.to_string()),
        ("method".into(), model.conformal.method.to_string()),
        ("n_train".into(), parts.train.1.len().to_string()),
        ("n_test".into(), parts.test.1.len().to_string()),
        ("cv10_auc".into(), fmt_num(cv.auc)),
        ("cv10_sensitivity".into(), fmt_num(cv.sensitivity)),
        ("cv10_specificity".into(), fmt_num(cv.specificity)),
        ("cutoff".into(), fmt_num(model.r)),
        ("alpha_r".into(), fmt_num(model.alpha_r)),
        (
            "beta_hat".into(),
            fmt_num(model.beta_hat.value().unwrap_or(f64::NAN)),
        ),
        ("gamma".into(), fmt_num(model.gamma)),
        ("test_coverage".into(), fmt_num(cell.coverage)),
        ("test_mean_length".into(), fmt_num(cell.mean_length)),
        ("test_rmse_predicted_change".into(), fmt_num(cell.rmse)),
    ];
    if let Some(t) = &tuning {
        rows.push(("tuned_cv_auc".into(), fmt_num(t.best_score)));
    }
    write_csv(&args.out_dir.join("train.csv"), &cfg, |buf| {
        writeln!(buf, "metric,value").map_err(|e| io_err("train.csv", e))?;
        for (k, v) in &rows {
            writeln!(buf, "{k},{v}").map_err(|e| io_err("train.csv", e))?;
        }
        Ok(())
    })?;
    let imp = model_importance(
        &model.classifier,
        &parts.test.0,
        &parts
            .test
            .1
            .iter()
            .map(|&y| if is_zero_target(y) { 0.0 } else { 1.0 })
            .collect::<Vec<_>>(),
        ImportanceMetric::Auc,
        cfg.importance_repeats,
        derive_seed(cfg.seed, "importance", 0),
    );
    match imp {
        Ok(imp) => write_csv(&args.out_dir.join("importance.csv"), &cfg, |buf| {
            write_importance(buf, &[(h, ds.feature_names.clone(), imp)])
        })?,
        Err(e) => log::warn!("importance skipped: {e}"),
    }
    println!(
        "{h} {}: coverage {:.3}, mean length {:.4}, gamma {:.3}, cv AUC {:.3}",
        model.conformal.method, cell.coverage, cell.mean_length, model.gamma, cv.auc
    );
    Ok(())
}

type Ranked = (
    Horizon,
    Vec<String>,
    Vec<zicp_core::evaluation::FeatureImportance>,
);

fn write_importance(buf: &mut Vec<u8>, blocks: &[Ranked]) -> zicp_core::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(buf);
    w.write_record(["horizon", "rank", "feature", "importance", "sd"])?;
    for (h, names, imp) in blocks {
        for (rank, f) in imp.iter().enumerate() {
            w.write_record([
                h.to_string(),
                (rank + 1).to_string(),
                names[f.feature].clone(),
                fmt_num(f.importance),
                fmt_num(f.sd),
            ])?;
        }
    }
    w.flush().map_err(|e| io_err("importance.csv", e))?;
    Ok(())
}

pub fn conformal(args: &ConformalArgs) -> Result<(), Failure> {
    let cfg = setup("conformal", &args.run, true, &SINGLE)?;
    let (h, ds) = single_dataset(&args.run, &cfg)?;
    let seeds = StageSeeds::derive(cfg.seed, 0);
    let split = partition(&ds, cfg.fractions, cfg.grouped, seeds.split)?;
    let parts = Partitions::new(&ds, &split);
    let ts = seeds.apply(&two_stage_config(&cfg), cfg.methods[0]);
    let model = fit_standard(&parts, &ts.conformal)?;
    let base = model.base_predictions(&parts.test.0)?;
    let intervals = model.intervals(&base, 1.0 - cfg.alpha);
    let metrics = evaluate_standard(&model, &parts.test.0, &parts.test.1)?;
    let test = ds.subset(&split.test_idx);
    write_csv(&args.out, &cfg, |buf| {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(buf);
        w.write_record([
            "patient_id",
            "index_date",
            "horizon",
            "truth",
            "point",
            "lower",
            "upper",
            "covered",
        ])?;
        for ((s, iv), p) in test.samples.iter().zip(&intervals).zip(&base.point) {
            w.write_record([
                s.patient_id.clone(),
                s.index_date.to_string(),
                h.to_string(),
                fmt_num(s.target),
                fmt_num(*p),
                fmt_num(iv.lower),
                fmt_num(iv.upper),
                iv.contains(s.target).to_string(),
            ])?;
        }
        w.flush().map_err(|e| io_err("intervals", e))?;
        Ok(())
    })?;
    println!(
        "{h} {}: coverage {:.3}, mean length {:.4}, n_test {}",
        model.method,
        metrics.coverage,
        metrics.mean_length,
        intervals.len()
    );
    Ok(())
}

pub fn sweep(args: &OutDirArgs) -> Result<(), Failure> {
    let cfg = setup("sweep", &args.run, true, &SINGLE)?;
    prepare_dir(&args.out_dir)?;
    let mut cfg_one = cfg.clone();
    cfg_one.horizons.truncate(1);
    let datasets = load_datasets(&args.run, &cfg_one)?;
    let report = horizon_report(&datasets, &report_config(&cfg_one))?;
    if report.summaries.is_empty() {
        return Err(Failure::data(format!(
            "no samples for horizon {}",
            cfg_one.horizons[0]
        )));
    }
    write_csv(&args.out_dir.join("frontier.csv"), &cfg, |b| {
        write_frontier(b, &report)
    })?;
    write_csv(&args.out_dir.join("sweep.csv"), &cfg, |b| {
        write_summaries(b, &report.summaries, cfg.alpha)
    })?;
    Ok(())
}

pub fn evaluate(args: &OutDirArgs) -> Result<(), Failure> {
    let cfg = setup("evaluate", &args.run, true, &Horizon::ALL)?;
    prepare_dir(&args.out_dir)?;
    let datasets = load_datasets(&args.run, &cfg)?;
    let report = horizon_report(&datasets, &report_config(&cfg))?;
    write_csv(&args.out_dir.join("summary.csv"), &cfg, |b| {
        write_summaries(b, &report.summaries, cfg.alpha)
    })?;

    let ts = two_stage_config(&cfg);
    let seeds = StageSeeds::derive(cfg.seed, 0);
    let mut cv_rows = Vec::new();
    let mut importance = Vec::new();
    for (&h, ds) in &datasets {
        if ds.is_empty() {
            continue;
        }
        let labels: Vec<bool> = ds.samples.iter().map(|s| !s.is_zero).collect();
        let clf = ts.classifier.with_seed(seeds.classifier);
        match cross_validated_classification(
            &ds.features(),
            &labels,
            &clf,
            10,
            derive_seed(cfg.seed, "classifier-cv", 0),
        ) {
            Ok(m) => cv_rows.push((h, m)),
            Err(e) => log::warn!("{h}: cross-validated classification skipped: {e}"),
        }
        let split = partition(ds, cfg.fractions, cfg.grouped, seeds.split)?;
        let parts = Partitions::new(ds, &split);
        let model = zicp_core::two_stage::fit_change_classifier(&parts, &clf)?;
        let y: Vec<f64> = parts
            .test
            .1
            .iter()
            .map(|&t| if is_zero_target(t) { 0.0 } else { 1.0 })
            .collect();
        match model_importance(
            &model,
            &parts.test.0,
            &y,
            ImportanceMetric::Auc,
            cfg.importance_repeats,
            derive_seed(cfg.seed, "importance", 0),
        ) {
            Ok(imp) => importance.push((h, ds.feature_names.clone(), imp)),
            Err(e) => log::warn!("{h}: importance skipped: {e}"),
        }
    }
    write_csv(&args.out_dir.join("classification.csv"), &cfg, |buf| {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(buf);
        w.write_record(["horizon", "folds", "auc", "sensitivity", "specificity"])?;
        for (h, m) in &cv_rows {
            w.write_record([
                h.to_string(),
                "10".to_string(),
                fmt_num(m.auc),
                fmt_num(m.sensitivity),
                fmt_num(m.specificity),
            ])?;
        }
        w.flush().map_err(|e| io_err("classification", e))?;
        Ok(())
    })?;
    write_csv(&args.out_dir.join("importance.csv"), &cfg, |b| {
        write_importance(b, &importance)
    })?;
    Ok(())
}

pub fn report(args: &OutDirArgs) -> Result<(), Failure> {
    let cfg = setup("report", &args.run, true, &Horizon::ALL)?;
    prepare_dir(&args.out_dir)?;
    let datasets = load_datasets(&args.run, &cfg)?;
    let report = horizon_report(&datasets, &report_config(&cfg))?;
    let dir = &args.out_dir;
    write_csv(&dir.join("table3.csv"), &cfg, |b| write_table3(b, &report))?;
    write_csv(&dir.join("frontier.csv"), &cfg, |b| {
        write_frontier(b, &report)
    })?;
    write_csv(&dir.join("calibration.csv"), &cfg, |b| {
        write_calibration(b, &report)
    })?;
    write_csv(&dir.join("baseline.csv"), &cfg, |b| {
        write_baseline(b, &report)
    })?;
    write_csv(&dir.join("summary.csv"), &cfg, |b| {
        write_summaries(b, &report.summaries, cfg.alpha)
    })?;
    for h in report.horizons() {
        let svg = frontier_svg(&report, h);
        write_with_header(
            &dir.join(format!("frontier_{h}.svg")),
            &cfg.xml_header(),
            svg.as_bytes(),
        )?;
    }
    for h in &report.skipped {
        eprintln!("warning: horizon {h} skipped (no samples)");
    }
    Ok(())
}

pub fn significance(args: &OutDirArgs) -> Result<(), Failure> {
    let cfg = setup("significance", &args.run, true, &SINGLE)?;
    prepare_dir(&args.out_dir)?;
    let h = cfg.horizons[0];
    let sig = SignificanceConfig {
        n_runs: cfg.n_runs,
        cutoff: cfg.cutoff,
        grid: cfg.grid.clone(),
        two_stage: two_stage_config(&cfg),
        fractions: cfg.fractions,
        grouped: cfg.grouped,
        ..SignificanceConfig::default()
    };
    let study = match (&args.run.data, &cfg.cohort) {
        (Some(path), _) => {
            let ds = read_samples(path)?.for_horizon(h);
            if ds.is_empty() {
                return Err(Failure::data(format!("no samples for horizon {h}")));
            }
            // Fixed data: only the split and model seeds vary between runs.
            significance_study(|_, _| Ok(ds.clone()), cfg.seed, &sig)?
        }
        (None, Some(spec)) => {
            let spec: CohortSpec = spec.clone();
            significance_study(
                |_, seed| {
                    let run_spec = CohortSpec {
                        seed,
                        ..spec.clone()
                    };
                    Ok(generate(&run_spec)?.horizon(h))
                },
                cfg.seed,
                &sig,
            )?
        }
        (None, None) => {
            return Err(Failure::usage(
                "no data: pass --data or use a synthetic cohort",
            ))
        }
    };
    write_csv(&args.out_dir.join("significance.csv"), &cfg, |b| {
        write_significance(b, &study.reports)
    })?;
    write_csv(&args.out_dir.join("descriptive.csv"), &cfg, |b| {
        write_runs(b, &study.runs)
    })?;
    for r in &study.reports {
        println!(
            "{}: t = {:.3}, p = {:.3e}, d = {:.3}, 95% CI [{:.4}, {:.4}] over {} runs",
            r.comparison, r.t_statistic, r.p_value, r.cohens_d, r.ci_low, r.ci_high, r.n_runs
        );
    }
    Ok(())
}
