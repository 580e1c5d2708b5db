//! Two-stage conformal prediction for zero-inflated outcomes.
//!
//! A gradient-boosted classifier decides whether an outcome is exactly zero;
//! where it is not confident, a conformal regressor trained on the non-zero
//! samples supplies an interval whose level is adjusted for the abstentions.

pub mod conformal;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod learners;
pub mod ledd;
pub mod seed;
pub mod synthetic;
pub mod two_stage;

pub use data::{
    Dataset, DatasetSplit, FeatureMatrix, Horizon, SplitFractions, SupervisedSample, VisitRecord,
    ZERO_TOL,
};
pub use error::{Error, Result};
