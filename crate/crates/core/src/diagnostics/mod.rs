//! Conflict diagnostics: subset posteriors by imputation averaging, the
//! maximum log relative belief statistic, Renyi divergences, calibration
//! against fresh imputations, and the window scan for raw series.

pub mod conflict;
pub mod regressor;
pub mod window;

pub use conflict::{
    calibrate_conflict, max_log_relative_belief, relative_belief_detail, renyi_divergence, subset_posterior, CompletionSource, ConflictReport,
    IdentityCompletion, RelativeBelief, SummaryCompletion,
};
pub use regressor::{FeatureMap, MappedRegressor, NormalRegressor, PosteriorQuery, PosteriorRegressor};
pub use window::{window_scan, window_set, WindowScanConfig, WindowScanReport};
