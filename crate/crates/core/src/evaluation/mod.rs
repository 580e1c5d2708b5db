//! Metrics, significance tests and reports.

pub mod importance;
pub mod metrics;
pub mod report;
pub mod significance;
pub mod stats;
pub mod summary;
pub mod svg;

pub use importance::{
    model_importance, permutation_importance, FeatureImportance, ImportanceMetric,
};
pub use metrics::{
    auc, classification_metrics, coverage, cross_validated_classification, marginal_mean,
    mean_length, regression_metrics, rmse, ClassificationMetrics, RegressionMetrics,
};
pub use report::{
    fmt_num, horizon_report, partition, write_baseline, write_calibration, write_frontier,
    write_summaries, write_table3, BaselineRow, HorizonReport, ReportConfig, StageSeeds,
    SUMMARY_HEADER,
};
pub use significance::{
    paired_run, significance_reports, significance_study, write_runs, write_significance,
    RunRecord, SignificanceConfig, SignificanceStudy,
};
pub use stats::{
    bootstrap_ci, ln_gamma, paired_t_test, regularized_incomplete_beta, student_t_cdf,
    student_t_two_sided_p, TTest,
};
pub use summary::{summarize_grid, EvaluationSummary, SignificanceReport};
pub use svg::frontier_svg;
