use criterion::{criterion_group, criterion_main, Criterion};
use zicp_core::conformal::ConformalConfig;
use zicp_core::conformal::{conformal_quantile, fit_cvplus, fit_jab};
use zicp_core::data::{make_grouped_split, Horizon, SplitFractions};
use zicp_core::learners::GbtParams;
use zicp_core::synthetic::{generate, CohortSpec};
use zicp_core::two_stage::{
    default_grid, sweep_components, Partitions, TwoStageComponents, TwoStageConfig,
};

fn conformal(c: &mut Criterion) {
    let cohort = generate(&CohortSpec {
        n_patients: 300,
        target_zero_rate: Some(0.001),
        ..CohortSpec::bundled()
    })
    .expect("bundled spec");
    let ds = cohort.horizon(Horizon::OneYear);
    let (x, y) = (ds.features(), ds.targets());
    let p = GbtParams {
        n_rounds: 50,
        max_depth: 3,
        ..GbtParams::default()
    };

    let mut group = c.benchmark_group("conformal");
    group.sample_size(10);
    group.bench_function("cvplus_fit", |b| {
        b.iter(|| fit_cvplus(&x, &y, 5, &p, 0.2, false).unwrap())
    });
    group.bench_function("jab_fit_b30", |b| {
        b.iter(|| fit_jab(&x, &y, 30, &p, 0.2).unwrap())
    });
    let cv = fit_cvplus(&x, &y, 5, &p, 0.2, false).unwrap();
    group.bench_function("cvplus_intervals", |b| {
        b.iter(|| cv.predict_intervals(&x, 0.8).unwrap())
    });
    let scores: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    group.bench_function("quantile", |b| {
        b.iter(|| conformal_quantile(&scores, 0.8).unwrap())
    });
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let cohort = generate(&CohortSpec {
        n_patients: 300,
        ..CohortSpec::bundled()
    })
    .expect("bundled spec");
    let ds = cohort.horizon(Horizon::OneYear);
    let split = make_grouped_split(&ds.patient_ids(), SplitFractions::default(), 1).unwrap();
    let parts = Partitions::new(&ds, &split);
    let p = GbtParams {
        n_rounds: 50,
        max_depth: 3,
        ..GbtParams::default()
    };
    let config = TwoStageConfig {
        classifier: p,
        conformal: ConformalConfig {
            params: p,
            ..ConformalConfig::default()
        },
        ..TwoStageConfig::default()
    };
    let components = TwoStageComponents::fit(&parts, &config).unwrap();
    let grid = default_grid();
    c.bench_function("sweep_20_cutoffs", |b| {
        b.iter(|| {
            sweep_components(
                &components,
                &parts,
                &grid,
                config.cutoff_mode,
                config.gamma_formula,
            )
            .unwrap()
        })
    });
}

criterion_group!(benches, conformal, sweep);
criterion_main!(benches);
