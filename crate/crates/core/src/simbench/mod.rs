//! Synthetic designs and the Monte Carlo coverage harness.

pub mod experiment;
pub mod generators;
pub mod learners;

pub use experiment::{
    default_tune_grid, parse_methods, run_coverage_experiment, run_experiment, CoverageRow,
    CoverageTable, ExperimentConfig, ExperimentRun, Method, Outcome, RepRecord,
};
pub use generators::{
    gen_counterexample2, gen_covariate_shift, gen_example1, gen_highdim, shift_weight,
    Example1Noise, Generator, HighDimCase,
};
pub use learners::{cv_scores, Learner, LearnerKind, LinearModel};
