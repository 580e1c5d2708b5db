//! Synthetic zero-inflated cohorts with known ground truth.

pub mod generate;
pub mod spec;

pub use generate::{generate, Cohort, GroundTruth};
pub use spec::{standardize, CohortSpec, LinearFn, FEATURE_CENTERS, FEATURE_SCALES};
