//! Lagged exogenous-signal forecasting toolkit.
//!
//! The crate answers one question about a pair of weekly series: does adding
//! an exogenous series (at some lag) make a small convolutional forecaster
//! more accurate on the target, and does that gain survive retraining on a
//! time-shuffled copy of the exogenous series?
//!
//! * [`series`] turns incidents into calendar-aligned weekly series, feature
//!   matrices and windowed train/validation sets.
//! * [`tensor`] is a minimal reverse-mode engine with the layers the
//!   forecaster uses.
//! * [`train`] holds the loss, Adam, early stopping and plateau schedules.
//! * [`metrics`] has scaled MAE and a 1-D SSIM.
//! * [`importance`] runs the baseline / lag-grid / permutation experiment.
//! * [`synth`] generates planted-signal data with a known lag.

pub mod importance;
pub mod metrics;
pub mod series;
pub mod synth;
pub mod tensor;
pub mod train;

pub use importance::{
    classify_cell, evaluate_feature_lag, permutation_test, permute_series, run_grid, train_baseline,
    Classification, ExperimentData, ExperimentPlan, GridReport, GridRun, LagCellResult, NamedSeries,
};
pub use metrics::{scaled_mae, ssim_1d, SsimConfig};
pub use series::{
    aggregate_weekly, apply_lag, chronological_split, make_windows, scale_global_max,
    FeatureMatrix, IncidentRecord, SeriesKind, SplitDataset, WeeklySeries, WindowSample,
};
pub use synth::{generate_synthetic, SyntheticData, SyntheticSpec};
pub use tensor::{Network, NetworkSpec, RngState, Tensor};
pub use train::{train, TrainConfig, TrainedModel};
