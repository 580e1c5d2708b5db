//! Conformal prediction intervals around boosted regressors.

pub mod interval;
pub mod model;
pub mod quantile;

pub use interval::PredictionInterval;
pub use model::{
    fit_conformal, fit_cvplus, fit_jab, fit_jackknife_plus, fit_naive, fit_split, BaseDetail,
    BasePredictions, ConformalConfig, ConformalMethod, ConformalModel, JACKKNIFE_MAX_N,
    MIN_BOOTSTRAPS,
};
pub use quantile::{conformal_quantile, conformal_rank};
