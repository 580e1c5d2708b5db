//! Gradient-boosted decision trees for the zero classifier and the change regressor.

pub mod gbt;
pub mod grid;
pub mod params;
pub mod tree;

pub use gbt::{
    fit_classifier, fit_regressor, logistic_grad_hess, logistic_loss, sigmoid, train, EvalSet,
    GbtModel, TrainOutcome, MODEL_FORMAT_VERSION,
};
pub use grid::{cv_score, grid_search, GbtGrid, GridCell, GridSearchResult};
pub use params::{GbtParams, Objective};
pub use tree::Tree;
