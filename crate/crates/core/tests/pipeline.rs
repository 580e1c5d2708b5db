//! Two-stage pipeline consistency on synthetic cohorts.

use std::collections::BTreeMap;
use std::sync::Arc;

use zicp_core::conformal::{ConformalConfig, ConformalMethod, ConformalModel};
use zicp_core::data::{make_grouped_split, Dataset, FeatureMatrix, Horizon, SplitFractions};
use zicp_core::evaluation::{
    coverage, horizon_report, mean_length, significance_study, summarize_grid, ReportConfig,
    SignificanceConfig,
};
use zicp_core::learners::{GbtModel, GbtParams, Objective, MODEL_FORMAT_VERSION};
use zicp_core::synthetic::{generate, CohortSpec};
use zicp_core::two_stage::{
    fit_two_stage, prepare, sweep_r, CutoffMode, GammaFormula, Partitions, TwoStageComponents,
    TwoStageConfig,
};

fn quick() -> GbtParams {
    GbtParams {
        n_rounds: 25,
        max_depth: 3,
        ..GbtParams::default()
    }
}

fn quick_config() -> TwoStageConfig {
    TwoStageConfig {
        classifier: quick(),
        conformal: ConformalConfig {
            params: quick(),
            bootstraps: 20,
            ..ConformalConfig::default()
        },
        ..TwoStageConfig::default()
    }
}

fn cohort(n_patients: usize, seed: u64) -> BTreeMap<Horizon, Dataset> {
    let c = generate(&CohortSpec {
        n_patients,
        seed,
        ..CohortSpec::bundled()
    })
    .unwrap();
    Horizon::ALL.iter().map(|&h| (h, c.horizon(h))).collect()
}

#[test]
fn bundled_cohort_is_three_quarters_zero() {
    for (h, ds) in cohort(600, 3) {
        let z = ds.zero_fraction();
        assert!((z - 0.75).abs() < 0.04, "{h}: zero fraction {z}");
    }
}

#[test]
fn single_cutoff_sweep_matches_direct_fit() {
    let ds = cohort(150, 4).remove(&Horizon::OneYear).unwrap();
    let split = make_grouped_split(&ds.patient_ids(), SplitFractions::default(), 4).unwrap();
    let config = TwoStageConfig {
        r: 0.0,
        ..quick_config()
    };
    let cell = sweep_r(&ds, &split, &config, &[0.0]).unwrap().cells[0];
    let model = fit_two_stage(&ds, &split, &config).unwrap();
    let test = ds.subset(&split.test_idx);
    let ivs = model.predict_batch(&test.features()).unwrap();
    assert_eq!(cell.coverage, coverage(&ivs, &test.targets()).unwrap());
    assert_eq!(cell.mean_length, mean_length(&ivs).unwrap());
    assert_eq!(cell.gamma, model.gamma);
}

fn constant(objective: Objective, value: f64) -> GbtModel {
    GbtModel {
        format_version: MODEL_FORMAT_VERSION,
        objective,
        base_score: value,
        n_features: 1,
        params: GbtParams::default(),
        trees: Vec::new(),
    }
}

#[test]
fn calibration_error_vanishes_at_nominal_coverage() {
    // Every interval is [−1, 1]; eight of ten truths fall inside.
    let conformal = ConformalModel {
        method: ConformalMethod::Split,
        alpha: 0.2,
        n_features: 1,
        models: vec![constant(Objective::Squared, 0.0)],
        scores: vec![1.0; 10],
        fold_of: Vec::new(),
        in_bag: Vec::new(),
        oob_models: Vec::new(),
        seed: 0,
        folds: 0,
        bootstraps: 0,
    };
    let components = TwoStageComponents {
        classifier: Arc::new(constant(Objective::Logistic, 10.0)),
        conformal: Arc::new(conformal),
        probs_cal1: vec![0.99; 10],
        probs_val: vec![0.99; 10],
        targets_val: vec![0.5; 10],
        alpha: 0.2,
    };
    let x = FeatureMatrix::column_vector(&[0.0; 10]);
    let truths = vec![0.5, -0.5, 0.9, 0.1, -0.9, 0.3, 0.7, -0.2, 3.0, -3.0];
    let parts = Partitions {
        train: (x.clone(), truths.clone()),
        cal1: (x.clone(), truths.clone()),
        val: (x.clone(), truths.clone()),
        test: (x.clone(), truths.clone()),
    };
    let batch = prepare(&components.classifier, &components.conformal, &x).unwrap();
    let rows = summarize_grid(
        Horizon::OneYear,
        &components,
        &parts,
        &batch,
        &[0.0, 0.5],
        CutoffMode::Absolute,
        GammaFormula::CoverageDecomposition,
    )
    .unwrap();
    for r in rows {
        assert_eq!(r.coverage, 0.8);
        assert_eq!(r.calibration_error, 0.0);
    }
}

#[test]
fn report_does_not_depend_on_thread_count() {
    let datasets = cohort(120, 5);
    let config = ReportConfig {
        grid: vec![0.0, 0.3, 0.6],
        two_stage: quick_config(),
        seed: 8,
        ..ReportConfig::default()
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| horizon_report(&datasets, &config).unwrap())
    };
    let serial = run(1);
    assert_eq!(serial.summaries.len(), 4 * 2 * 3);
    assert_eq!(serial, run(3));
}

#[test]
fn missing_horizons_are_skipped() {
    let mut datasets = cohort(100, 6);
    datasets.remove(&Horizon::FourYears);
    let config = ReportConfig {
        methods: vec![ConformalMethod::Cvplus],
        grid: vec![0.5],
        two_stage: quick_config(),
        ..ReportConfig::default()
    };
    let report = horizon_report(&datasets, &config).unwrap();
    assert_eq!(report.skipped, vec![Horizon::FourYears]);
    assert_eq!(report.horizons().len(), 3);
}

#[test]
fn significance_study_is_reproducible() {
    let config = SignificanceConfig {
        n_runs: 3,
        grid: vec![0.0, 0.5],
        two_stage: quick_config(),
        n_resamples: 200,
        ..SignificanceConfig::default()
    };
    let make = |_: usize, seed: u64| {
        Ok(generate(&CohortSpec {
            n_patients: 80,
            seed,
            ..CohortSpec::bundled()
        })?
        .horizon(Horizon::OneYear))
    };
    let a = significance_study(make, 1, &config).unwrap();
    assert_eq!(a.runs.len(), 3);
    assert_eq!(a, significance_study(make, 1, &config).unwrap());
    assert!(significance_study(
        make,
        1,
        &SignificanceConfig {
            n_runs: 1,
            ..config
        }
    )
    .is_err());
}
