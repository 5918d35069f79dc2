//! Backward-Euler residual `R(y^i, y^{i-1}, u)` and the single quasi-Newton
//! update `G^i`, plus the classical converged-per-step solver.

use nalgebra::{DMatrix, Dyn, LU};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg::{CyclicTridiagonal, CyclicTridiagonalLu};
use crate::model::{Model, StateJacobian};
use crate::trajectory::{DesignVector, StateVector, Trajectory};

/// Factorized `P = scale * (I/dt - df_h/dy)`, the approximation of `dR/dy^i`
/// used by one quasi-Newton step. `scale = 1` is the exact Newton matrix.
#[derive(Debug, Clone)]
pub struct InnerPreconditioner {
    kind: Factored,
}

#[derive(Debug, Clone)]
enum Factored {
    Dense { lu: LU<f64, Dyn, Dyn>, lu_t: LU<f64, Dyn, Dyn> },
    Cyclic { lu: CyclicTridiagonalLu, lu_t: CyclicTridiagonalLu },
}

impl InnerPreconditioner {
    pub fn new(jacobian: &StateJacobian, dt: f64, scale: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("preconditioner scale must be positive, got {scale}")));
        }
        let kind = match jacobian {
            StateJacobian::Dense(j) => {
                let m = j.nrows();
                let p = (DMatrix::identity(m, m) / dt - j) * scale;
                let lu = p.clone().lu();
                if !lu.is_invertible() || !p.iter().all(|x| x.is_finite()) {
                    return Err(Error::Singular { step: None });
                }
                let lu_t = p.transpose().lu();
                Factored::Dense { lu, lu_t }
            }
            StateJacobian::CyclicTridiagonal(j) => {
                let p: CyclicTridiagonal = j.shifted(scale / dt, -scale);
                Factored::Cyclic { lu: CyclicTridiagonalLu::new(&p)?, lu_t: CyclicTridiagonalLu::new(&p.transpose())? }
            }
        };
        Ok(Self { kind })
    }

    /// `P^{-1} r`
    pub fn solve(&self, r: &StateVector) -> StateVector {
        match &self.kind {
            // invertibility was checked at construction
            Factored::Dense { lu, .. } => lu.solve(r).expect("factorization is invertible"),
            Factored::Cyclic { lu, .. } => lu.solve(r),
        }
    }

    /// `P^{-T} r`
    pub fn solve_transpose(&self, r: &StateVector) -> StateVector {
        match &self.kind {
            Factored::Dense { lu_t, .. } => lu_t.solve(r).expect("factorization is invertible"),
            Factored::Cyclic { lu_t, .. } => lu_t.solve(r),
        }
    }
}

/// `(y_i - y_prev) / dt - f_h(y_i, u)`
pub fn be_residual<M: Model + ?Sized>(
    model: &M,
    y_i: &StateVector,
    y_prev: &StateVector,
    dt: f64,
    u: &DesignVector,
) -> Result<StateVector> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    Ok((y_i - y_prev) / dt - model.rhs(y_i, u))
}

/// One quasi-Newton update `y_i - P^{-1} R(y_i, y_prev, u)`.
pub fn qn_step<M: Model + ?Sized>(
    model: &M,
    y_i: &StateVector,
    y_prev: &StateVector,
    dt: f64,
    u: &DesignVector,
    precond: &InnerPreconditioner,
) -> Result<StateVector> {
    let r = be_residual(model, y_i, y_prev, dt, u)?;
    Ok(y_i - precond.solve(&r))
}

/// Settings of the classical per-step solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub preconditioner_scale: f64,
}

impl Default for ClassicOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 50, preconditioner_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepSolution {
    pub state: StateVector,
    pub iterations: usize,
    pub residual: f64,
    /// Ratio of the last two residual norms, when at least two iterations ran.
    pub contraction: Option<f64>,
}

/// Iterate `G^i` from `y_prev` until `|R| <= tol`, refreshing `P` every iteration.
pub fn solve_timestep<M: Model + ?Sized>(
    model: &M,
    y_prev: &StateVector,
    dt: f64,
    u: &DesignVector,
    opts: &ClassicOptions,
) -> Result<StepSolution> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let mut y = y_prev.clone();
    let mut r = be_residual(model, &y, y_prev, dt, u)?;
    let mut res = r.norm();
    let mut last_ratio = None;
    let mut iterations = 0;
    while res > opts.tol {
        if iterations == opts.max_iter || !res.is_finite() {
            return Err(Error::NonConvergence { iterations, residual: res });
        }
        let p = InnerPreconditioner::new(&model.rhs_jacobian(&y, u), dt, opts.preconditioner_scale)?;
        y -= p.solve(&r);
        r = be_residual(model, &y, y_prev, dt, u)?;
        let next = r.norm();
        last_ratio = Some(next / res);
        res = next;
        iterations += 1;
    }
    Ok(StepSolution { state: y, iterations, residual: res, contraction: last_ratio })
}

/// Classical time marching: converge every step with [`solve_timestep`] before
/// advancing. Returns the trajectory and the total number of inner iterations.
pub fn solve_classic<M: Model + ?Sized>(
    model: &M,
    grid: &TimeGrid,
    u: &DesignVector,
    opts: &ClassicOptions,
) -> Result<(Trajectory, usize)> {
    let mut prev = model.initial_state(u);
    let mut states = Vec::with_capacity(grid.steps());
    let mut total = 0;
    for (i, &dt) in grid.step_sizes().iter().enumerate() {
        let sol = solve_timestep(model, &prev, dt, u, opts).map_err(|e| e.at_step(i + 1))?;
        total += sol.iterations;
        prev = sol.state;
        states.push(prev.clone());
    }
    Ok((Trajectory::new(states)?, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{AdvectionDiffusionModel, LinearTestModel, VanDerPolModel};

    fn sv(v: &[f64]) -> StateVector {
        StateVector::from_row_slice(v)
    }

    fn vdp_precond(y: &StateVector, dt: f64, u: f64, scale: f64) -> InnerPreconditioner {
        let m = VanDerPolModel::default();
        InnerPreconditioner::new(&m.rhs_jacobian(y, &DesignVector::from_element(1, u)), dt, scale).unwrap()
    }

    #[test]
    fn stationary_point_has_zero_residual() {
        let m = VanDerPolModel::default();
        let o = sv(&[0.0, 0.0]);
        let r = be_residual(&m, &o, &o, 0.1, &DesignVector::from_element(1, 1.0)).unwrap();
        assert_eq!(r, o);
    }

    #[test]
    fn residual_hand_example() {
        let m = VanDerPolModel::default();
        let r =
            be_residual(&m, &sv(&[0.01, 0.0]), &sv(&[0.0, 0.0]), 0.01, &DesignVector::from_element(1, 1.0)).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-14);
        assert!((r[1] - 0.01).abs() < 1e-14);
    }

    #[test]
    fn residual_rejects_nonpositive_step() {
        let m = VanDerPolModel::default();
        let o = sv(&[0.0, 0.0]);
        let u = DesignVector::from_element(1, 1.0);
        assert!(matches!(be_residual(&m, &o, &o, 0.0, &u), Err(Error::InvalidArgument(_))));
        assert!(be_residual(&m, &o, &o, -0.1, &u).is_err());
    }

    #[test]
    fn residual_is_linear_for_linear_model() {
        let m = AdvectionDiffusionModel::new(1.0, 1e-5, 16).unwrap();
        let none = DesignVector::zeros(0);
        let y = m.initial_profile();
        let yp = y.map(|v| v * 0.5 + 0.1);
        let r1 = be_residual(&m, &y, &yp, 0.01, &none).unwrap();
        let r2 = be_residual(&m, &(&y * 2.0), &(&yp * 2.0), 0.01, &none).unwrap();
        assert!((r2 - r1 * 2.0).norm() < 1e-10);
    }

    #[test]
    fn step_is_identity_at_solution() {
        let m = VanDerPolModel::default();
        let u = DesignVector::from_element(1, 1.0);
        let prev = sv(&[1.5, -0.3]);
        let sol = solve_timestep(&m, &prev, 0.05, &u, &ClassicOptions { tol: 1e-14, ..Default::default() }).unwrap();
        let p = vdp_precond(&sol.state, 0.05, 1.0, 2.0);
        let next = qn_step(&m, &sol.state, &prev, 0.05, &u, &p).unwrap();
        assert!((next - &sol.state).norm() < 1e-14);
    }

    #[test]
    fn exact_newton_on_linear_scalar_is_backward_euler() {
        let (lambda, dt, y_prev) = (-3.0, 0.1, 2.0);
        let m = LinearTestModel::decay(lambda, y_prev);
        let u = DesignVector::zeros(1);
        let p = InnerPreconditioner::new(&m.rhs_jacobian(&sv(&[0.0]), &u), dt, 1.0).unwrap();
        let y = qn_step(&m, &sv(&[7.0]), &sv(&[y_prev]), dt, &u, &p).unwrap();
        assert!((y[0] - y_prev / (1.0 - lambda * dt)).abs() < 1e-14);
    }

    #[test]
    fn newton_steps_converge_quadratically() {
        let m = VanDerPolModel::default();
        let u = DesignVector::from_element(1, 1.0);
        let (prev, dt) = (sv(&[2.0, 0.0]), 0.1);
        let mut y = sv(&[1.6, -0.9]);
        let mut res = vec![be_residual(&m, &y, &prev, dt, &u).unwrap().norm()];
        for _ in 0..3 {
            let p = vdp_precond(&y, dt, 1.0, 1.0);
            y = qn_step(&m, &y, &prev, dt, &u, &p).unwrap();
            res.push(be_residual(&m, &y, &prev, dt, &u).unwrap().norm());
        }
        // r_{k+1} / r_k shrinks along with r_k
        let ratios: Vec<f64> = res.windows(2).map(|w| w[1] / w[0]).collect();
        assert!(ratios[1] < ratios[0] && ratios[2] < ratios[1], "{res:?}");
        assert!(ratios[2] < 1e-3, "{res:?}");
    }

    #[test]
    fn trivial_dynamics_return_previous_state() {
        let m = LinearTestModel::decay(0.0, 1.0);
        let prev = sv(&[0.4]);
        let s = solve_timestep(&m, &prev, 0.1, &DesignVector::zeros(1), &ClassicOptions::default()).unwrap();
        assert!(s.iterations <= 1);
        assert_eq!(s.state, prev);
    }

    #[test]
    fn linear_advection_diffusion_converges_in_one_iteration() {
        let m = AdvectionDiffusionModel::new(1.0, 1e-5, 100).unwrap();
        let opts = ClassicOptions { tol: 1e-12, ..Default::default() };
        let s = solve_timestep(&m, &m.initial_profile(), 0.01, &DesignVector::zeros(0), &opts).unwrap();
        assert_eq!(s.iterations, 1);
        assert!(s.residual <= 1e-12);
    }

    #[test]
    fn vdp_step_converges_fast_on_limit_cycle() {
        let m = VanDerPolModel::default();
        let u = DesignVector::from_element(1, 1.0);
        let opts = ClassicOptions { tol: 1e-10, ..Default::default() };
        // points on or near the u = 1 limit cycle
        for prev in [sv(&[2.0, 0.0]), sv(&[0.0, 2.6]), sv(&[-1.0, 1.2]), sv(&[-2.0, 0.0])] {
            let s = solve_timestep(&m, &prev, 0.01, &u, &opts).unwrap();
            assert!(s.iterations <= 5, "{} iterations from {prev:?}", s.iterations);
        }
    }

    #[test]
    fn iteration_limit_reports_residual() {
        let m = VanDerPolModel::default();
        let u = DesignVector::from_element(1, 1.0);
        let opts = ClassicOptions { tol: 1e-14, max_iter: 1, preconditioner_scale: 4.0 };
        match solve_timestep(&m, &sv(&[2.0, 0.0]), 0.1, &u, &opts) {
            Err(Error::NonConvergence { iterations, residual }) => {
                assert_eq!(iterations, 1);
                assert!(residual > 1e-14);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn singular_preconditioner_is_reported() {
        // I/dt - J = 0 for J = I/dt
        let j = StateJacobian::Dense(DMatrix::identity(2, 2) * 10.0);
        assert!(matches!(InnerPreconditioner::new(&j, 0.1, 1.0), Err(Error::Singular { .. })));
    }

    #[test]
    fn fixed_point_iff_zero_residual() {
        let m = VanDerPolModel::default();
        let u = DesignVector::from_element(1, 0.5);
        let prev = sv(&[0.3, 0.8]);
        let y = sv(&[0.35, 0.7]);
        let p = vdp_precond(&y, 0.05, 0.5, 1.5);
        let step = qn_step(&m, &y, &prev, 0.05, &u, &p).unwrap();
        let r = be_residual(&m, &y, &prev, 0.05, &u).unwrap();
        assert!((step - &y).norm() > 0.0 && r.norm() > 0.0);
    }

    #[test]
    fn damped_step_contracts_locally() {
        let m = VanDerPolModel::default();
        let u = DesignVector::from_element(1, 1.0);
        let (prev, dt) = (sv(&[1.0, 1.5]), 0.05);
        let star =
            solve_timestep(&m, &prev, dt, &u, &ClassicOptions { tol: 1e-14, ..Default::default() }).unwrap().state;
        for scale in [1.0, 1.5, 2.0] {
            let y = &star + sv(&[1e-4, -2e-4]);
            let p = vdp_precond(&y, dt, 1.0, scale);
            let next = qn_step(&m, &y, &prev, dt, &u, &p).unwrap();
            let rho = (next - &star).norm() / (y - &star).norm();
            assert!(rho < 1.0, "scale {scale}: rho {rho}");
            assert!((rho - (1.0 - 1.0 / scale)).abs() < 1e-3, "scale {scale}: rho {rho}");
        }
    }
}
