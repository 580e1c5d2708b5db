//! Structural properties and small coverage simulations for the conformal methods.

use zicp_core::conformal::{
    fit_cvplus, fit_jab, fit_naive, fit_split, ConformalModel, PredictionInterval,
};
use zicp_core::data::{Dataset, FeatureMatrix, Horizon};
use zicp_core::evaluation::coverage;
use zicp_core::learners::GbtParams;
use zicp_core::synthetic::{generate, Cohort, CohortSpec};

fn params(rounds: usize, depth: usize, seed: u64) -> GbtParams {
    GbtParams {
        n_rounds: rounds,
        max_depth: depth,
        seed,
        ..GbtParams::default()
    }
}

/// Non-zero samples with one index visit per patient, so rows are independent.
fn iid_cohort(n_patients: usize, seed: u64) -> (Cohort, Dataset) {
    let spec = CohortSpec {
        n_patients,
        visits_per_patient: [1, 1],
        target_zero_rate: Some(0.001),
        seed,
        ..CohortSpec::bundled()
    };
    let cohort = generate(&spec).unwrap();
    let ds = cohort.horizon(Horizon::OneYear);
    let keep: Vec<usize> = (0..ds.len()).filter(|&i| !ds.samples[i].is_zero).collect();
    let ds = ds.subset(&keep);
    (cohort, ds)
}

fn xy(ds: &Dataset, range: std::ops::Range<usize>) -> (FeatureMatrix, Vec<f64>) {
    let idx: Vec<usize> = range.collect();
    let s = ds.subset(&idx);
    (s.features(), s.targets())
}

fn nested(outer: &PredictionInterval, inner: &PredictionInterval) -> bool {
    outer.lower <= inner.lower && inner.upper <= outer.upper
}

#[test]
fn intervals_grow_with_level() {
    let (_, ds) = iid_cohort(400, 1);
    let (xt, yt) = xy(&ds, 0..200);
    let (xc, yc) = xy(&ds, 200..300);
    let (xe, _) = xy(&ds, 300..360);
    let p = params(30, 3, 1);
    let models: Vec<ConformalModel> = vec![
        fit_split(&xt, &yt, &xc, &yc, &p, 0.2).unwrap(),
        fit_cvplus(&xt, &yt, 5, &p, 0.2, false).unwrap(),
        fit_cvplus(&xt, &yt, 5, &p, 0.2, true).unwrap(),
        fit_jab(&xt, &yt, 25, &p, 0.2).unwrap(),
    ];
    for m in &models {
        let base = m.base_predictions(&xe).unwrap();
        let levels = [0.3, 0.5, 0.8, 0.9, 0.99];
        let all: Vec<Vec<PredictionInterval>> =
            levels.iter().map(|&l| m.intervals(&base, l)).collect();
        for w in all.windows(2) {
            for (lo, hi) in w[0].iter().zip(&w[1]) {
                assert!(
                    nested(hi, lo),
                    "{}: {hi:?} does not contain {lo:?}",
                    m.method
                );
            }
        }
    }
}

#[test]
fn shifting_targets_shifts_split_intervals() {
    let (_, ds) = iid_cohort(300, 2);
    let (xt, yt) = xy(&ds, 0..150);
    let (xc, yc) = xy(&ds, 150..250);
    let (xe, _) = xy(&ds, 250..290);
    let c = 4.0;
    let shift = |v: &[f64]| v.iter().map(|y| y + c).collect::<Vec<f64>>();
    let p = params(40, 3, 2);
    let a = fit_split(&xt, &yt, &xc, &yc, &p, 0.2)
        .unwrap()
        .predict_intervals(&xe, 0.8)
        .unwrap();
    let b = fit_split(&xt, &shift(&yt), &xc, &shift(&yc), &p, 0.2)
        .unwrap()
        .predict_intervals(&xe, 0.8)
        .unwrap();
    for (u, v) in a.iter().zip(&b) {
        assert!(
            (u.lower + c - v.lower).abs() < 1e-8 && (u.upper + c - v.upper).abs() < 1e-8,
            "{u:?} vs {v:?}"
        );
    }
}

#[test]
fn calibration_order_does_not_matter() {
    let (_, ds) = iid_cohort(300, 3);
    let (xt, yt) = xy(&ds, 0..150);
    let (xe, _) = xy(&ds, 250..290);
    let order: Vec<usize> = (150..250).rev().collect();
    let rev = ds.subset(&order);
    let (xc, yc) = xy(&ds, 150..250);
    let p = params(20, 3, 3);
    let a = fit_split(&xt, &yt, &xc, &yc, &p, 0.2)
        .unwrap()
        .predict_intervals(&xe, 0.8)
        .unwrap();
    let b = fit_split(&xt, &yt, &rev.features(), &rev.targets(), &p, 0.2)
        .unwrap()
        .predict_intervals(&xe, 0.8)
        .unwrap();
    assert_eq!(a, b);
}

#[test]
fn split_coverage_is_near_nominal() {
    let mut total = 0.0;
    let seeds = 20;
    for s in 0..seeds {
        let (_, ds) = iid_cohort(900, 100 + s);
        let (xt, yt) = xy(&ds, 0..300);
        let (xc, yc) = xy(&ds, 300..500);
        let (xe, ye) = xy(&ds, 500..800);
        let m = fit_split(&xt, &yt, &xc, &yc, &params(30, 3, s), 0.2).unwrap();
        total += coverage(&m.predict_intervals(&xe, 0.8).unwrap(), &ye).unwrap();
    }
    let mean = total / seeds as f64;
    assert!((0.76..=0.84).contains(&mean), "mean coverage {mean}");
}

#[test]
fn in_sample_residuals_undercover_with_an_overfit_learner() {
    let (mut naive, mut cv) = (0.0, 0.0);
    for s in 0..3 {
        let (_, ds) = iid_cohort(800, 200 + s);
        let (xt, yt) = xy(&ds, 0..300);
        let (xe, ye) = xy(&ds, 300..700);
        let p = params(300, 7, s);
        naive += coverage(
            &fit_naive(&xt, &yt, &p, 0.2)
                .unwrap()
                .predict_intervals(&xe, 0.8)
                .unwrap(),
            &ye,
        )
        .unwrap();
        cv += coverage(
            &fit_cvplus(&xt, &yt, 5, &p, 0.2, false)
                .unwrap()
                .predict_intervals(&xe, 0.8)
                .unwrap(),
            &ye,
        )
        .unwrap();
    }
    assert!(naive / 3.0 < 0.75, "naive {}", naive / 3.0);
    assert!(cv / 3.0 > 0.75, "cv+ {}", cv / 3.0);
}

#[test]
fn bootstrap_leaves_out_about_a_third() {
    let (_, ds) = iid_cohort(200, 4);
    let (xt, yt) = xy(&ds, 0..150);
    let m = fit_jab(&xt, &yt, 40, &params(5, 2, 4), 0.2).unwrap();
    let cells = m.in_bag.len() * m.in_bag[0].len();
    let out = m.in_bag.iter().flatten().filter(|&&b| !b).count();
    let frac = out as f64 / cells as f64;
    // (1 − 1/n)^n for n = 150 is about 0.366.
    assert!((frac - 0.364).abs() < 0.08, "out-of-bag fraction {frac}");
}

#[test]
fn ground_truth_intervals_cover_at_nominal_rate() {
    let (cohort, ds) = iid_cohort(3000, 5);
    let x = ds.features();
    let ivs: Vec<PredictionInterval> = x
        .rows()
        .map(|r| cohort.truth.oracle_interval(r, Horizon::OneYear, 0.2))
        .collect();
    let cov = coverage(&ivs, &ds.targets()).unwrap();
    assert!((0.77..=0.85).contains(&cov), "oracle coverage {cov}");
}
