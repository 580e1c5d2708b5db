//! Shared record types, CSV ingestion and dataset partitioning.

pub mod matrix;
pub mod records;
pub mod samples;
pub mod split;

pub use matrix::FeatureMatrix;
pub use records::{
    load_demographics, load_visits, read_visits, write_visits, Demographics, Race, RejectReason,
    Route, RowRejection, Sex, VisitLoad, VisitRecord,
};
pub use samples::{
    is_zero_target, read_samples, write_samples, Dataset, Horizon, SupervisedSample, FEATURE_NAMES,
    ZERO_TOL,
};
pub use split::{
    fold_indices, kfold_assignment, make_grouped_split, make_split, make_split_with, DatasetSplit,
    SplitFractions, SplitOptions,
};
