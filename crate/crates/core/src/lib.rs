//! Single-step one-shot optimization with unsteady ODE/PDE constraints.
//!
//! The state equation is a Backward-Euler discretization `y' = f(y, u)` on a
//! time grid. Instead of converging every time step before advancing, one
//! sweep `H` applies a single quasi-Newton step per time step; the adjoint
//! sweep and a BFGS-preconditioned design step run alongside it, so state,
//! multipliers and design converge together.
// `!(x > 0.0)` deliberately rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;

pub mod adjoint;
pub mod bfgs;
pub mod grid;
pub mod inner;
pub mod linalg;
pub mod model;
pub mod models;
pub mod oneshot;
pub mod rescale;
pub mod sweep;
pub mod trajectory;

pub use adjoint::{adjoint_sweep, jacobian_vector_product, objective_jn, reduced_gradient};
pub use bfgs::{bfgs_update, BfgsState};
pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use inner::{be_residual, qn_step, solve_classic, solve_timestep, ClassicOptions, InnerPreconditioner};
pub use model::{Model, StateJacobian};
pub use oneshot::{
    oneshot_step, retardation_factor, run_nested, run_oneshot, IterationRecord, OneShotConfig, OneShotState,
    OptimizationReport,
};
pub use rescale::{resample_to_grid, rescale_times, RescaledTimes};
pub use sweep::{
    estimate_contraction, residual_report, run_simulation, sweep_h, sweep_with_rescaling, Linearization,
    SimulationOptions, SimulationResult, SweepOptions, SweepReport,
};
pub use trajectory::{trajectory_norm, AdjointTrajectory, DesignVector, StateVector, Trajectory};
