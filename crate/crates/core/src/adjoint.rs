//! Discrete objective `J_N`, the simultaneous adjoint update
//! `ybar <- grad_y J_N + (dH/dy)^T ybar`, and the reduced gradient
//! `grad_u J_N + (dH/du)^T ybar`.
//!
//! The derivative of `H` follows its recursive structure. With `z^i = H(y,u)^i`
//! and `z^0 = y^0(u)`,
//!
//! ```text
//! dz^i = A_i dy^i + B_i dz^{i-1} + C_i du,   dz^0 = D du
//! A_i  = I - P_i^{-1} (I/dt_i - df/dy)
//! B_i  = P_i^{-1} / dt_i
//! C_i  = P_i^{-1} df/du
//! ```
//!
//! where the preconditioners `P_i` are frozen at the current iterate. At a
//! primal fixed point the residual vanishes, so the frozen derivative equals
//! the exact one.

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::Model;
use crate::sweep::{check_shape, Linearization, StepLinearization, SweepOptions};
use crate::trajectory::{AdjointTrajectory, DesignVector, StateVector, Trajectory};

/// `(1/T) sum_i dt_i J^(y^i, u)`
pub fn objective_jn<M: Model + ?Sized>(model: &M, grid: &TimeGrid, traj: &Trajectory, u: &DesignVector) -> f64 {
    let total: f64 =
        traj.states().iter().zip(grid.step_sizes()).map(|(y, dt)| dt * model.objective_instant(y, u)).sum();
    total / grid.final_time()
}

impl StepLinearization {
    /// `A_i v`
    pub fn apply_a(&self, v: &StateVector) -> StateVector {
        let dr = v / self.dt - self.jacobian.apply(v);
        v - self.precond.solve(&dr)
    }

    /// `A_i^T w`
    pub fn apply_a_transpose(&self, w: &StateVector) -> StateVector {
        let q = self.precond.solve_transpose(w);
        w - (&q / self.dt - self.jacobian.apply_transpose(&q))
    }

    /// `B_i v`
    pub fn apply_b(&self, v: &StateVector) -> StateVector {
        self.precond.solve(v) / self.dt
    }

    /// `B_i^T w`
    pub fn apply_b_transpose(&self, w: &StateVector) -> StateVector {
        self.precond.solve_transpose(w) / self.dt
    }
}

/// Forward action `(dH/dy) v`: `w_0 = 0`, `w_i = A_i v^i + B_i w_{i-1}`.
pub fn jacobian_vector_product<M: Model + ?Sized>(
    model: &M,
    grid: &TimeGrid,
    traj: &Trajectory,
    u: &DesignVector,
    v: &Trajectory,
    opts: &SweepOptions,
) -> Result<Trajectory> {
    let lin = Linearization::new(model, grid, traj, u, opts)?;
    jacobian_vector_product_frozen(model, grid, traj, u, v, &lin)
}

pub fn jacobian_vector_product_frozen<M: Model + ?Sized>(
    model: &M,
    grid: &TimeGrid,
    traj: &Trajectory,
    _u: &DesignVector,
    v: &Trajectory,
    lin: &Linearization,
) -> Result<Trajectory> {
    check_shape(model, grid, traj)?;
    if !v.same_shape(traj) {
        return Err(Error::ShapeMismatch("direction does not match the trajectory".into()));
    }
    let mut w = StateVector::zeros(model.state_dim());
    let mut out = Vec::with_capacity(v.steps());
    for i in 1..=v.steps() {
        let step = lin.step(i);
        w = step.apply_a(v.state(i)) + step.apply_b(&w);
        out.push(w.clone());
    }
    Trajectory::new(out)
}

/// Transposed action `(dH/dy)^T w` (the adjoint sweep without the objective).
pub fn transpose_product_frozen<M: Model + ?Sized>(
    model: &M,
    grid: &TimeGrid,
    traj: &Trajectory,
    u: &DesignVector,
    w: &Trajectory,
    lin: &Linearization,
) -> Result<Trajectory> {
    Ok(backward_pass(model, grid, traj, w, u, lin, false)?.0)
}

/// One backward pass. For `j = N..1`, with `v_N = ybar^N`:
/// `out_j = [dt_j/T grad_y J^(y^j)] + A_j^T v_j`, `v_{j-1} = ybar^{j-1} + B_j^T v_j`;
/// the design part accumulates `C_j^T v_j` and finally `D^T B_1^T v_1`.
/// Objective terms are included only when `with_objective` is set.
pub fn backward_pass<M: Model + ?Sized>(
    model: &M,
    grid: &TimeGrid,
    traj: &Trajectory,
    adj: &AdjointTrajectory,
    u: &DesignVector,
    lin: &Linearization,
    with_objective: bool,
) -> Result<(AdjointTrajectory, DesignVector)> {
    check_shape(model, grid, traj)?;
    if !adj.same_shape(traj) {
        return Err(Error::ShapeMismatch("adjoint does not match the trajectory".into()));
    }
    let n = traj.steps();
    let t_final = grid.final_time();
    let mut out = vec![StateVector::zeros(model.state_dim()); n];
    let mut design = DesignVector::zeros(model.design_dim());
    let mut carry = StateVector::zeros(model.state_dim());
    for j in (1..=n).rev() {
        let step = lin.step(j);
        let y = traj.state(j);
        let v = adj.state(j) + &carry;
        let q = step.precond.solve_transpose(&v);
        let mut o = &v - (&q / step.dt - step.jacobian.apply_transpose(&q));
        design += model.rhs_jac_u_transpose_apply(&step.state, u, &q);
        if with_objective {
            let weight = step.dt / t_final;
            o += model.objective_grad_y(y, u) * weight;
            design += model.objective_grad_u(y, u) * weight;
        }
        out[j - 1] = o;
        carry = q / step.dt;
    }
    design += model.initial_state_jac_u_transpose_apply(u, &carry);
    Ok((Trajectory::new(out)?, design))
}

/// `grad_y J_N(y, u) + (dH/dy)^T ybar`
pub fn adjoint_sweep<M: Model + ?Sized>(
    model: &M,
    grid: &TimeGrid,
    traj: &Trajectory,
    adj: &AdjointTrajectory,
    u: &DesignVector,
    opts: &SweepOptions,
) -> Result<AdjointTrajectory> {
    let lin = Linearization::new(model, grid, traj, u, opts)?;
    Ok(backward_pass(model, grid, traj, adj, u, &lin, true)?.0)
}

/// `grad_u J_N(y, u) + (dH/du)^T ybar`
pub fn reduced_gradient<M: Model + ?Sized>(
    model: &M,
    grid: &TimeGrid,
    traj: &Trajectory,
    adj: &AdjointTrajectory,
    u: &DesignVector,
    opts: &SweepOptions,
) -> Result<DesignVector> {
    let lin = Linearization::new(model, grid, traj, u, opts)?;
    Ok(backward_pass(model, grid, traj, adj, u, &lin, true)?.1)
}

/// Iterate [`adjoint_sweep`] at a fixed primal until successive iterates
/// differ by at most `tol`. Returns the adjoint and the sweep count.
pub fn converge_adjoint<M: Model + ?Sized>(
    model: &M,
    grid: &TimeGrid,
    traj: &Trajectory,
    u: &DesignVector,
    lin: &Linearization,
    tol: f64,
    max_iter: usize,
) -> Result<(AdjointTrajectory, usize)> {
    let mut adj = Trajectory::zeros(traj.steps(), model.state_dim());
    for k in 1..=max_iter {
        let next = backward_pass(model, grid, traj, &adj, u, lin, true)?.0;
        let change = next.axpy(-1.0, &adj).norm();
        adj = next;
        if change <= tol {
            return Ok((adj, k));
        }
        if !change.is_finite() {
            return Err(Error::Divergence { block: "adjoint", iteration: k });
        }
    }
    let change = backward_pass(model, grid, traj, &adj, u, lin, true)?.0.axpy(-1.0, &adj).norm();
    Err(Error::NonConvergence { iterations: max_iter, residual: change })
}
