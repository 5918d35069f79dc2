//! The coupled single-step one-shot iteration
//!
//! ```text
//! y_{k+1}    = H(y_k, u_k)
//! ybar_{k+1} = grad_y J_N(y_k, u_k) + (dH/dy)^T ybar_k
//! u_{k+1}    = u_k - B_k^{-1} (grad_u J_N(y_k, u_k) + (dH/du)^T ybar_k)
//! ```
//!
//! with all three blocks reading the iteration-`k` values, and the nested
//! reduced-space baseline that fully converges state and adjoint per design.

use log::{debug, info};
use serde::Serialize;

use crate::adjoint::{backward_pass, converge_adjoint, objective_jn};
use crate::bfgs::BfgsState;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::inner::{solve_classic, ClassicOptions};
use crate::model::Model;
use crate::sweep::{
    residual_report, run_simulation, sweep_frozen, sweep_with_rescaling_frozen, Linearization, SimulationOptions,
    SweepOptions,
};
use crate::trajectory::{AdjointTrajectory, DesignVector, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OneShotConfig {
    /// Common tolerance on the reduced gradient, primal and adjoint residuals.
    pub eps_stop: f64,
    pub max_iter: usize,
    /// Weights of the augmented Lagrangian; only `0` is supported.
    pub alpha: f64,
    pub beta: f64,
    /// `B_0 = b0_scale * I`.
    pub b0_scale: f64,
    /// Apply secant updates to `B`; when off, `B = B_0` throughout.
    pub bfgs_updates: bool,
    pub rescaling: bool,
    /// Number of initial iterations with the design held fixed.
    pub design_freeze: usize,
    /// Cap on the Euclidean norm of one design step.
    pub max_design_step: f64,
    pub preconditioner_scale: f64,
}

impl Default for OneShotConfig {
    fn default() -> Self {
        Self {
            eps_stop: 1e-3,
            max_iter: 5000,
            alpha: 0.0,
            beta: 0.0,
            b0_scale: 1.0,
            bfgs_updates: true,
            rescaling: false,
            design_freeze: 10,
            max_design_step: 1.0,
            preconditioner_scale: 1.0,
        }
    }
}

impl OneShotConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.into()));
        if !(self.eps_stop > 0.0) {
            return bad("eps_stop must be positive");
        }
        if self.alpha != 0.0 || self.beta != 0.0 {
            return bad("only alpha = beta = 0 (reduced-gradient preconditioning) is supported");
        }
        if !(self.b0_scale > 0.0) {
            return bad("b0_scale must be positive");
        }
        if !(self.max_design_step > 0.0) {
            return bad("max_design_step must be positive");
        }
        if !(self.preconditioner_scale > 0.0) {
            return bad("preconditioner_scale must be positive");
        }
        Ok(())
    }

    fn sweep(&self) -> SweepOptions {
        SweepOptions { preconditioner_scale: self.preconditioner_scale }
    }
}

/// Residuals and objective of the iterate `(y_k, ybar_k, u_k)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub jn: f64,
    /// Euclidean norm of all Backward-Euler residuals of `y_k`.
    pub primal_residual: f64,
    pub per_step_residual_max: f64,
    /// `|ybar_{k+1} - ybar_k|`
    pub adjoint_residual: f64,
    pub reduced_grad_norm: f64,
    pub design: Vec<f64>,
    /// Whether the design step leaving this iterate was shortened by the cap.
    pub step_capped: bool,
    pub rescaling_accepted_fraction: Option<f64>,
}

impl IterationRecord {
    fn converged(&self, eps: f64) -> bool {
        self.reduced_grad_norm <= eps && self.primal_residual <= eps && self.adjoint_residual <= eps
    }
}

#[derive(Debug, Clone)]
pub struct OneShotState {
    pub traj: Trajectory,
    pub adj: AdjointTrajectory,
    pub u: DesignVector,
    pub bfgs: BfgsState,
    pub k: usize,
    pub history: Vec<IterationRecord>,
}

impl OneShotState {
    /// Constant trajectory `y^i = y^0(u0)`, zero multipliers, `B_0 = gamma I`.
    pub fn new<M: Model + ?Sized>(
        model: &M,
        grid: &TimeGrid,
        u0: DesignVector,
        config: &OneShotConfig,
    ) -> Result<Self> {
        if u0.len() != model.design_dim() {
            return Err(Error::ShapeMismatch(format!(
                "design has length {}, model expects {}",
                u0.len(),
                model.design_dim()
            )));
        }
        Ok(Self {
            traj: Trajectory::constant(grid.steps(), &model.initial_state(&u0)),
            adj: Trajectory::zeros(grid.steps(), model.state_dim()),
            bfgs: BfgsState::new(model.design_dim(), config.b0_scale),
            u: u0,
            k: 0,
            history: Vec::new(),
        })
    }
}

/// All three block updates computed from iterate `k`, not yet committed.
struct Evaluation {
    record: IterationRecord,
    traj: Trajectory,
    adj: AdjointTrajectory,
    u: DesignVector,
    grad: DesignVector,
}

fn evaluate<M: Model + ?Sized>(
    model: &M,
    grid: &TimeGrid,
    state: &OneShotState,
    config: &OneShotConfig,
) -> Result<Evaluation> {
    let k = state.k;
    let (y, u) = (&state.traj, &state.u);
    let lin = Linearization::new(model, grid, y, u, &config.sweep())?;
    let current = residual_report(model, grid, y, u)?;

    let (traj, accepted) = if config.rescaling {
        let (t, rep) = sweep_with_rescaling_frozen(model, grid, y, u, &lin)?;
        (t, rep.rescaling.map(|r| r.accepted_fraction))
    } else {
        (sweep_frozen(model, grid, y, u, &lin)?, None)
    };
    if !traj.is_finite() {
        return Err(Error::Divergence { block: "primal", iteration: k });
    }

    let (adj, grad) = backward_pass(model, grid, y, &state.adj, u, &lin, true)?;
    if !adj.is_finite() {
        return Err(Error::Divergence { block: "adjoint", iteration: k });
    }
    if !grad.iter().all(|g| g.is_finite()) {
        return Err(Error::Divergence { block: "design", iteration: k });
    }

    let mut step_capped = false;
    let next_u = if k < config.design_freeze || grad.is_empty() {
        u.clone()
    } else {
        let mut bfgs = state.bfgs.clone();
        if k > config.design_freeze && config.bfgs_updates {
            bfgs.update(&(u - &bfgs.last_u), &(&grad - &bfgs.last_g));
        }
        let mut d = bfgs.direction(&grad);
        let norm = d.norm();
        if norm > config.max_design_step {
            d *= config.max_design_step / norm;
            step_capped = true;
            debug!("iteration {k}: design step {norm:.3e} capped to {}", config.max_design_step);
        }
        u - d
    };
    if !next_u.iter().all(|x| x.is_finite()) {
        return Err(Error::Divergence { block: "design", iteration: k });
    }

    let record = IterationRecord {
        iter: k,
        jn: objective_jn(model, grid, y, u),
        primal_residual: current.total_residual,
        per_step_residual_max: current.max_step_residual(),
        adjoint_residual: adj.axpy(-1.0, &state.adj).norm(),
        reduced_grad_norm: grad.norm(),
        design: u.iter().cloned().collect(),
        step_capped,
        rescaling_accepted_fraction: accepted,
    };
    Ok(Evaluation { record, traj, adj, u: next_u, grad })
}

fn commit(state: &mut OneShotState, config: &OneShotConfig, eval: Evaluation) {
    let k = state.k;
    if k >= config.design_freeze && !eval.grad.is_empty() {
        if k > config.design_freeze && config.bfgs_updates {
            let s = &state.u - &state.bfgs.last_u;
            let w = &eval.grad - &state.bfgs.last_g;
            state.bfgs.update(&s, &w);
        }
        state.bfgs.last_u = state.u.clone();
        state.bfgs.last_g = eval.grad;
    }
    state.traj = eval.traj;
    state.adj = eval.adj;
    state.u = eval.u;
    state.history.push(eval.record);
    state.k += 1;
}

/// One Jacobi-coupled iteration. Returns the record describing the iterate
/// the step started from.
pub fn oneshot_step<M: Model + ?Sized>(
    model: &M,
    grid: &TimeGrid,
    state: &mut OneShotState,
    config: &OneShotConfig,
) -> Result<IterationRecord> {
    let eval = evaluate(model, grid, state, config)?;
    let record = eval.record.clone();
    commit(state, config, eval);
    Ok(record)
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizationReport {
    pub converged: bool,
    /// Design updates performed (one-shot iterations or nested BFGS steps).
    pub iterations: usize,
    pub design: Vec<f64>,
    pub jn: f64,
    pub reduced_grad_norm: f64,
    pub primal_residual: f64,
    pub adjoint_residual: f64,
    /// Nested only: Newton iterations of all classical solves.
    pub inner_iterations: Option<usize>,
    /// Nested only: adjoint sweeps over all design evaluations.
    pub adjoint_sweeps: Option<usize>,
    /// One record per evaluated iterate, the last one being the returned state.
    pub history: Vec<IterationRecord>,
}

impl OptimizationReport {
    fn from_history(converged: bool, history: Vec<IterationRecord>) -> Self {
        let last = history.last().expect("at least one iterate is evaluated");
        Self {
            converged,
            iterations: last.iter,
            design: last.design.clone(),
            jn: last.jn,
            reduced_grad_norm: last.reduced_grad_norm,
            primal_residual: last.primal_residual,
            adjoint_residual: last.adjoint_residual,
            inner_iterations: None,
            adjoint_sweeps: None,
            history,
        }
    }
}

/// Iterate [`oneshot_step`] until the reduced gradient, the primal and the
/// adjoint residual of an iterate are all at most `eps_stop`, or `max_iter`
/// steps were taken. Exhausting `max_iter` is reported, not raised.
pub fn run_oneshot<M: Model + ?Sized>(
    model: &M,
    grid: &TimeGrid,
    u0: &DesignVector,
    config: &OneShotConfig,
) -> Result<OptimizationReport> {
    run_oneshot_with(model, grid, u0, config, |_, _| {})
}

/// [`run_oneshot`] with a callback seeing each state and its record.
pub fn run_oneshot_with<M, F>(
    model: &M,
    grid: &TimeGrid,
    u0: &DesignVector,
    config: &OneShotConfig,
    mut observe: F,
) -> Result<OptimizationReport>
where
    M: Model + ?Sized,
    F: FnMut(&OneShotState, &IterationRecord),
{
    config.validate()?;
    let mut state = OneShotState::new(model, grid, u0.clone(), config)?;
    loop {
        let eval = evaluate(model, grid, &state, config)?;
        observe(&state, &eval.record);
        let done = eval.record.converged(config.eps_stop);
        if done || state.k == config.max_iter {
            let mut history = std::mem::take(&mut state.history);
            history.push(eval.record);
            info!("one-shot {} after {} iterations", if done { "converged" } else { "stopped" }, state.k);
            return Ok(OptimizationReport::from_history(done, history));
        }
        commit(&mut state, config, eval);
    }
}

/// Reduced-space BFGS: every design is evaluated with a fully converged
/// classical simulation and adjoint, followed by one unsearched BFGS step.
pub fn run_nested<M: Model + ?Sized>(
    model: &M,
    grid: &TimeGrid,
    u0: &DesignVector,
    config: &OneShotConfig,
    classic: &ClassicOptions,
) -> Result<OptimizationReport> {
    config.validate()?;
    if u0.len() != model.design_dim() {
        return Err(Error::ShapeMismatch("design length does not match the model".into()));
    }
    let adjoint_tol = classic.tol;
    let mut bfgs = BfgsState::new(model.design_dim(), config.b0_scale);
    let mut u = u0.clone();
    let mut history = Vec::new();
    let (mut inner, mut sweeps) = (0, 0);
    for k in 0..=config.max_iter {
        let (traj, its) = solve_classic(model, grid, &u, classic)?;
        inner += its;
        let lin = Linearization::new(model, grid, &traj, &u, &config.sweep())?;
        let (adj, n) = converge_adjoint(model, grid, &traj, &u, &lin, adjoint_tol, config.max_iter.max(1000))?;
        sweeps += n;
        let (next_adj, grad) = backward_pass(model, grid, &traj, &adj, &u, &lin, true)?;
        let report = residual_report(model, grid, &traj, &u)?;
        let mut record = IterationRecord {
            iter: k,
            jn: objective_jn(model, grid, &traj, &u),
            primal_residual: report.total_residual,
            per_step_residual_max: report.max_step_residual(),
            adjoint_residual: next_adj.axpy(-1.0, &adj).norm(),
            reduced_grad_norm: grad.norm(),
            design: u.iter().cloned().collect(),
            step_capped: false,
            rescaling_accepted_fraction: None,
        };
        let done = record.reduced_grad_norm <= config.eps_stop;
        if done || k == config.max_iter || grad.is_empty() {
            history.push(record);
            let mut out = OptimizationReport::from_history(done || grad.is_empty(), history);
            out.inner_iterations = Some(inner);
            out.adjoint_sweeps = Some(sweeps);
            return Ok(out);
        }
        if k > 0 {
            bfgs.update(&(&u - &bfgs.last_u), &(&grad - &bfgs.last_g));
        }
        let mut d = bfgs.direction(&grad);
        let norm = d.norm();
        if norm > config.max_design_step {
            d *= config.max_design_step / norm;
            record.step_capped = true;
        }
        bfgs.last_u = u.clone();
        bfgs.last_g = grad;
        u -= d;
        if !u.iter().all(|x| x.is_finite()) {
            return Err(Error::Divergence { block: "design", iteration: k });
        }
        history.push(record);
    }
    unreachable!("the loop returns at k == max_iter")
}

/// One-shot iterations divided by the iterations a frozen-design simulation
/// needs at the reported optimum to reach `eps_stop`.
pub fn retardation_factor<M: Model + ?Sized>(
    model: &M,
    grid: &TimeGrid,
    report: &OptimizationReport,
    config: &OneShotConfig,
) -> Result<f64> {
    let u = DesignVector::from_vec(report.design.clone());
    let sim = run_simulation(
        model,
        grid,
        &u,
        &SimulationOptions {
            sweep: config.sweep(),
            tol: config.eps_stop,
            max_iter: config.max_iter,
            rescaling: config.rescaling,
        },
    )?;
    Ok(report.iterations as f64 / sim.iterations.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{AdvectionDiffusionModel, ControlledVdpModel, LinearTestModel};

    #[test]
    fn nonzero_weights_rejected() {
        for cfg in [
            OneShotConfig { alpha: 0.5, ..Default::default() },
            OneShotConfig { beta: -1.0, ..Default::default() },
            OneShotConfig { eps_stop: 0.0, ..Default::default() },
        ] {
            assert!(matches!(cfg.validate(), Err(Error::InvalidArgument(_))));
        }
        assert!(OneShotConfig::default().validate().is_ok());
    }

    #[test]
    fn kkt_point_is_stationary() {
        // y' = -y + u, J^ = (y - 0)^2 + u^2 with y0 = 0: optimum u = 0, y = 0, ybar = 0
        let m = LinearTestModel { gain: 1.0, penalty: 1.0, ..LinearTestModel::decay(-1.0, 0.0) };
        let grid = TimeGrid::uniform(1.0, 10).unwrap();
        let cfg = OneShotConfig { design_freeze: 0, ..Default::default() };
        let mut st = OneShotState::new(&m, &grid, DesignVector::zeros(1), &cfg).unwrap();
        for _ in 0..3 {
            let rec = oneshot_step(&m, &grid, &mut st, &cfg).unwrap();
            assert_eq!(rec.reduced_grad_norm, 0.0);
        }
        assert_eq!(st.u[0], 0.0);
        assert_eq!(st.traj.norm(), 0.0);
        assert_eq!(st.adj.norm(), 0.0);
        assert_eq!(st.history.len(), st.k);
    }

    #[test]
    fn design_free_model_reduces_to_simulation() {
        let m = AdvectionDiffusionModel::new(1.0, 1e-3, 20).unwrap();
        let grid = TimeGrid::uniform(0.5, 10).unwrap();
        let cfg = OneShotConfig { eps_stop: 1e-9, ..Default::default() };
        let rep = run_oneshot(&m, &grid, &DesignVector::zeros(0), &cfg).unwrap();
        assert!(rep.converged);
        assert!(rep.design.is_empty());
    }

    #[test]
    fn frozen_design_matches_simulation_count() {
        let m = ControlledVdpModel::default();
        let grid = TimeGrid::uniform(2.0, 40).unwrap();
        let cfg = OneShotConfig { max_iter: 60, design_freeze: 60, ..Default::default() };
        let u0 = DesignVector::from_element(1, 0.5);
        let rep = run_oneshot(&m, &grid, &u0, &cfg).unwrap();
        assert!(rep.history.iter().all(|r| r.design == vec![0.5]));
        let sim = run_simulation(
            &m,
            &grid,
            &u0,
            &SimulationOptions { sweep: SweepOptions::default(), tol: 1e-3, max_iter: 60, rescaling: false },
        )
        .unwrap();
        let first = rep.history.iter().position(|r| r.primal_residual <= 1e-3).unwrap();
        assert_eq!(first, sim.iterations);
    }

    #[test]
    fn nested_solves_linear_quadratic_problem_quickly() {
        let m = LinearTestModel { lambda: -0.5, gain: 1.0, y0: 1.0, y0_gain: 0.0, target: 0.3, penalty: 0.1 };
        let grid = TimeGrid::uniform(1.0, 20).unwrap();
        let cfg = OneShotConfig { eps_stop: 1e-8, max_iter: 50, max_design_step: 1e3, ..Default::default() };
        let rep = run_nested(&m, &grid, &DesignVector::zeros(1), &cfg, &ClassicOptions::default()).unwrap();
        assert!(rep.converged);
        // one design variable: the second step is a secant step, exact on a quadratic
        assert!(rep.iterations <= 3, "{}", rep.iterations);
    }

    #[test]
    fn fixed_preconditioner_oneshot_matches_nested() {
        let m = ControlledVdpModel::default();
        let grid = TimeGrid::uniform(5.0, 128).unwrap();
        let u0 = DesignVector::zeros(1);
        let cfg = OneShotConfig { b0_scale: 10.0, bfgs_updates: false, ..Default::default() };
        let one = run_oneshot(&m, &grid, &u0, &cfg).unwrap();
        let nested = run_nested(&m, &grid, &u0, &OneShotConfig::default(), &ClassicOptions::default()).unwrap();
        assert!(one.converged && nested.converged);
        assert!((one.design[0] - nested.design[0]).abs() <= 1e-2, "{:?} {:?}", one.design, nested.design);
        assert!(((one.jn - nested.jn) / nested.jn).abs() <= 1e-3);
        let r = retardation_factor(&m, &grid, &one, &cfg).unwrap();
        assert!(r.is_finite() && r > 0.0);

        // residuals and gradient fall together over the run
        let h = &one.history;
        let (early, late) = (&h[h.len() / 4], h.last().unwrap());
        assert!(late.primal_residual < early.primal_residual);
        assert!(late.adjoint_residual < early.adjoint_residual);
        assert!(late.reduced_grad_norm < early.reduced_grad_norm);
    }
}
