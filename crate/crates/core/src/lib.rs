//! Model-free variable selection by trace pursuit.
//!
//! The crate tests `Y ⟂ x_j | X_F` through the change in the trace of a
//! sufficient dimension reduction kernel (SIR, SAVE or directional
//! regression) when `x_j` joins the working set `F`, calibrates the test with
//! a weighted χ² null law, and builds three selectors on top of it: stepwise
//! (STP), forward screening with a modified BIC (FTP) and their hybrid (HTP).
//! A simulation bench reproduces the standard benchmark designs.
//!
//! Predictor indices are 0-based throughout the library.

// negated comparisons below are deliberate: NaN must fail the guards
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod data;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod null;
pub mod select;
pub mod sim;

pub use data::{
    compute_moments, slice_response, CenteredSample, Dataset, MomentStats, SliceAssignment,
};
pub use error::{Error, Result};
pub use kernels::{
    trace_diff, trace_kernel, AuxiliarySaveDrStats, Method, ResidualStats, WorkingSet,
};
pub use null::{
    influence_samples, omega_hat, trace_test, weighted_chisq_upper_quantile, InfluenceSample,
    NullDistribution, QuantileMethod, TraceTest,
};
pub use select::{
    bic_score, default_k_max, ftp_run, htp_run, stp_run, Action, PathStep, SelectionReport,
    SolutionPath, StageSizes, StopReason, StpConfig, TrailEntry,
};
pub use sim::{
    evaluate, generate, model_signal, run_experiment, select_once, Algorithm, ExperimentResult,
    Generator, Model, PredictorDist, SelectionMetrics, SimDesign,
};
