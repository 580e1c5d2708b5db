//! Medication administrations to LEDD series to supervised targets.

pub mod conversion;
pub mod series;
pub mod supervised;
pub mod transform;

pub use conversion::{convert_to_ledd, ConversionTable};
pub use series::{ledd_series, pct_change, relative_change, LeddPoint, LeddSeries, PctChanges};
pub use supervised::{
    apply_winsor_bounds, build_supervised, visit_features, FeatureConfig, SupervisedBuild,
    DEFAULT_AGE_YEARS,
};
pub use transform::{
    interpolated_quantile, signed_exp, signed_log, sorted_copy, winsorize, WinsorBounds,
    WinsorPolicy,
};
