//! Localized conformal prediction.
//!
//! Prediction intervals whose calibration up-weights samples near each test
//! point through a localizer kernel, with an effective quantile level chosen
//! so that marginal coverage at the nominal level is preserved in finite
//! samples.
//!
//! The building blocks, bottom-up:
//!
//! - [`quantile`]: weighted empirical distributions with a `+inf` atom and
//!   their lower quantiles.
//! - [`localizers`]: kernels `H(x1, x2, X)` and row-normalized weights.
//! - [`calibration`]: the feasibility checks for an effective level, the grid
//!   search over levels and the randomized exact-level rule.
//! - [`intervals`]: prediction sets and the conformal baselines.
//! - [`tuning`]: bandwidth selection on an independent sample.
//! - [`simbench`]: data generators and the Monte Carlo coverage harness.

pub mod calibration;
pub mod data;
pub mod error;
pub mod intervals;
pub mod localizers;
pub mod quantile;
pub mod simbench;
pub mod tuning;

pub use calibration::{
    default_alpha_grid, eval_g1, eval_g2, grid_search_alpha, randomized_alpha, CalibrationModel,
    G1Result, G2Check, G2Witness, LocalizedCalibration,
};
pub use data::{Features, Sample};
pub use error::{LcpError, Result};
pub use intervals::{
    exact_lcp_set_datadep, lcp_interval, lcp_set_generic, local_coverage_interval,
    split_conformal_interval, weighted_conformal_interval, IntervalPrediction, PredictionSet,
    Predictor, ScoreFunction,
};
pub use localizers::{
    build_local_weights, eval_localizer, select_projection_axis, KernelMatrix, LocalWeightRow,
    LocalizerKind, LocalizerSpec, WeightFn,
};
pub use quantile::{cdf_at, substitute_atom, weighted_quantile, ScoreValue, WeightedAtomSet};
pub use tuning::{loo_thresholds, tune_bandwidth, TuningConfig, TuningReport};
