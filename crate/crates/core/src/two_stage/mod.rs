//! Two-stage intervals: a zero/change classifier in front of a conformal regressor.

pub mod calibration;
pub mod model;
pub mod sweep;

pub use calibration::{
    compute_gamma, estimate_beta, select_cutoff, BetaEstimate, CutoffMode, GammaFormula,
};
pub use model::{
    evaluate_standard, fit_change_classifier, fit_standard, fit_two_stage, prepare, CellMetrics,
    Partitions, PreparedBatch, TwoStageComponents, TwoStageConfig, TwoStageModel,
};
pub use sweep::{
    cutoff_grid, default_grid, parse_grid, select_best, sweep_components, sweep_r, SweepCell,
    SweepResult, SWEEP_HEADER,
};
