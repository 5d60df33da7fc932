//! Traveling waves of `−m p Δp + (c + α(y)) p_x = |∇p|²` on `ℝ × T¹`:
//! δ-regularized truncated solves, continuation to small δ and large L,
//! and the post-processing that checks the limit profile.

// `!(x > 0.0)` is used throughout to reject NaN along with the bad range
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli_io;
pub mod flowfield;
pub mod grid_field;
pub mod newton_solver;
pub mod planar_ode;
pub mod quadrature;
pub mod wave_analysis;

pub use cli_io::{run, Command, ConfigError, RunConfig, RunError, RunOptions, RunOutcome};
pub use flowfield::{validate_speed, FlowError, FlowProfile, WaveParams};
pub use grid_field::{Boundary, Grid, GridError, ScalarField2D};
pub use newton_solver::{
    continuation, solve_truncated, ContinuationPlan, NewtonOptions, SolveReport, SolverError, Stage, WaveProblem,
};
pub use planar_ode::{barrier_pair, BarrierOptions, BarrierPair, PlanarError, PlanarProfile};
pub use wave_analysis::{pin_translate, AnalysisError, Pinned};
