//! The modified time-marching iterator `H`: one quasi-Newton step per time
//! step, each consuming the already-updated previous state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::adjoint;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::inner::{be_residual, InnerPreconditioner};
use crate::model::{Model, StateJacobian};
use crate::rescale::{resample_to_grid, rescale_times};
use crate::trajectory::{DesignVector, StateVector, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    /// Multiplier on the exact Newton matrix; `1` gives full Newton steps.
    pub preconditioner_scale: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { preconditioner_scale: 1.0 }
    }
}

/// Frozen data of step `i` at the iterate `(y^i_k, u_k)`.
#[derive(Debug, Clone)]
pub struct StepLinearization {
    pub dt: f64,
    pub state: StateVector,
    pub jacobian: StateJacobian,
    pub precond: InnerPreconditioner,
}

/// Per-step preconditioners and Jacobians of `H` at one iterate. Built once
/// per outer iteration and shared by the primal, adjoint and design updates.
#[derive(Debug, Clone)]
pub struct Linearization {
    steps: Vec<StepLinearization>,
}

impl Linearization {
    pub fn new<M: Model + ?Sized>(
        model: &M,
        grid: &TimeGrid,
        traj: &Trajectory,
        u: &DesignVector,
        opts: &SweepOptions,
    ) -> Result<Self> {
        check_shape(model, grid, traj)?;
        let steps = traj
            .states()
            .iter()
            .zip(grid.step_sizes())
            .enumerate()
            .map(|(idx, (y, &dt))| {
                let jacobian = model.rhs_jacobian(y, u);
                let precond = InnerPreconditioner::new(&jacobian, dt, opts.preconditioner_scale)
                    .map_err(|e| e.at_step(idx + 1))?;
                Ok(StepLinearization { dt, state: y.clone(), jacobian, precond })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { steps })
    }

    /// Step `i`, 1-based.
    pub fn step(&self, i: usize) -> &StepLinearization {
        &self.steps[i - 1]
    }

    pub fn steps(&self) -> usize {
        self.steps.len()
    }
}

pub(crate) fn check_shape<M: Model + ?Sized>(model: &M, grid: &TimeGrid, traj: &Trajectory) -> Result<()> {
    if traj.steps() != grid.steps() || traj.state_dim() != model.state_dim() {
        return Err(Error::ShapeMismatch(format!(
            "trajectory is {}x{}, expected {}x{}",
            traj.steps(),
            traj.state_dim(),
            grid.steps(),
            model.state_dim()
        )));
    }
    Ok(())
}

/// `y_{k+1} = H(y_k, u)`.
pub fn sweep_h<M: Model + ?Sized>(
    model: &M,
    grid: &TimeGrid,
    traj: &Trajectory,
    u: &DesignVector,
    opts: &SweepOptions,
) -> Result<Trajectory> {
    let lin = Linearization::new(model, grid, traj, u, opts)?;
    sweep_frozen(model, grid, traj, u, &lin)
}

/// `H` with the preconditioners taken from `lin` instead of rebuilt from `traj`.
pub fn sweep_frozen<M: Model + ?Sized>(
    model: &M,
    grid: &TimeGrid,
    traj: &Trajectory,
    u: &DesignVector,
    lin: &Linearization,
) -> Result<Trajectory> {
    check_shape(model, grid, traj)?;
    let mut prev = model.initial_state(u);
    let mut out = Vec::with_capacity(traj.steps());
    for (i, y) in traj.states().iter().enumerate() {
        let step = &lin.steps[i];
        let r = be_residual(model, y, &prev, step.dt, u)?;
        let next = y - step.precond.solve(&r);
        out.push(next.clone());
        prev = next;
    }
    Trajectory::new(out)
}

/// Per-step residual norms of one iterate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub per_step_residual: Vec<f64>,
    pub total_residual: f64,
    pub iteration_index: usize,
    pub rho_estimate: Option<f64>,
    /// Fraction of steps whose rescaled time passed the safeguard, and whether
    /// the rescaled trajectory replaced the plain sweep. `None` without rescaling.
    pub rescaling: Option<RescalingOutcome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RescalingOutcome {
    pub accepted_fraction: f64,
    pub applied: bool,
}

impl SweepReport {
    pub fn max_step_residual(&self) -> f64 {
        self.per_step_residual.iter().cloned().fold(0.0, f64::max)
    }
}

pub fn residual_report<M: Model + ?Sized>(
    model: &M,
    grid: &TimeGrid,
    traj: &Trajectory,
    u: &DesignVector,
) -> Result<SweepReport> {
    check_shape(model, grid, traj)?;
    let mut prev = model.initial_state(u);
    let mut per_step = Vec::with_capacity(traj.steps());
    for (y, &dt) in traj.states().iter().zip(grid.step_sizes()) {
        per_step.push(be_residual(model, y, &prev, dt, u)?.norm());
        prev = y.clone();
    }
    let total = per_step.iter().map(|r| r * r).sum::<f64>().sqrt();
    Ok(SweepReport {
        per_step_residual: per_step,
        total_residual: total,
        iteration_index: 0,
        rho_estimate: None,
        rescaling: None,
    })
}

/// Largest singular value of `dH/dy` (frozen preconditioners) by `probes`
/// power iterations on `(dH/dy)^T (dH/dy)` from a seeded random start.
pub fn estimate_contraction<M: Model + ?Sized>(
    model: &M,
    grid: &TimeGrid,
    traj: &Trajectory,
    u: &DesignVector,
    opts: &SweepOptions,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    if probes == 0 {
        return Err(Error::InvalidArgument("at least one probe is required".into()));
    }
    let lin = Linearization::new(model, grid, traj, u, opts)?;
    estimate_contraction_frozen(model, grid, traj, u, &lin, probes, seed)
}

pub fn estimate_contraction_frozen<M: Model + ?Sized>(
    model: &M,
    grid: &TimeGrid,
    traj: &Trajectory,
    u: &DesignVector,
    lin: &Linearization,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = model.state_dim();
    let start: Vec<StateVector> =
        (0..traj.steps()).map(|_| StateVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0))).collect();
    let mut x = Trajectory::new(start)?;
    let n0 = x.norm();
    if n0 == 0.0 {
        return Ok(0.0);
    }
    x = x.scale(1.0 / n0);
    let mut sigma: f64 = 0.0;
    for _ in 0..probes {
        let jx = adjoint::jacobian_vector_product_frozen(model, grid, traj, u, &x, lin)?;
        sigma = sigma.max(jx.norm());
        let z = adjoint::transpose_product_frozen(model, grid, traj, u, &jx, lin)?;
        let nz = z.norm();
        if nz == 0.0 || !nz.is_finite() {
            break;
        }
        x = z.scale(1.0 / nz);
    }
    Ok(sigma)
}

/// `H` followed by adaptive time rescaling. The rescaled trajectory is kept
/// only if its total residual does not exceed that of the plain sweep.
pub fn sweep_with_rescaling<M: Model + ?Sized>(
    model: &M,
    grid: &TimeGrid,
    traj: &Trajectory,
    u: &DesignVector,
    opts: &SweepOptions,
) -> Result<(Trajectory, SweepReport)> {
    let lin = Linearization::new(model, grid, traj, u, opts)?;
    sweep_with_rescaling_frozen(model, grid, traj, u, &lin)
}

pub fn sweep_with_rescaling_frozen<M: Model + ?Sized>(
    model: &M,
    grid: &TimeGrid,
    traj: &Trajectory,
    u: &DesignVector,
    lin: &Linearization,
) -> Result<(Trajectory, SweepReport)> {
    let plain = sweep_frozen(model, grid, traj, u, lin)?;
    let plain_report = residual_report(model, grid, &plain, u)?;
    let times = rescale_times(model, grid, &plain, u);
    let accepted_fraction = times.accepted.iter().filter(|&&a| a).count() as f64 / times.accepted.len().max(1) as f64;
    let resampled = resample_to_grid(&plain, &times, grid)?;
    let resampled_report = residual_report(model, grid, &resampled, u)?;
    let applied = resampled_report.total_residual <= plain_report.total_residual;
    let (traj, mut report) = if applied { (resampled, resampled_report) } else { (plain, plain_report) };
    report.rescaling = Some(RescalingOutcome { accepted_fraction, applied });
    Ok((traj, report))
}

/// Result of iterating `H` (optionally with rescaling) at a fixed design.
#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub trajectory: Trajectory,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<SweepReport>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationOptions {
    pub sweep: SweepOptions,
    pub tol: f64,
    pub max_iter: usize,
    pub rescaling: bool,
}

/// Iterate `H` from the constant trajectory `y^i = y^0` until the total
/// residual drops to `tol`. History entry `k` describes iterate `k`
/// (entry 0 is the starting trajectory).
pub fn run_simulation<M: Model + ?Sized>(
    model: &M,
    grid: &TimeGrid,
    u: &DesignVector,
    opts: &SimulationOptions,
) -> Result<SimulationResult> {
    run_simulation_with(model, grid, u, opts, |_, _| {})
}

/// [`run_simulation`] with a callback observing every iterate and its report.
pub fn run_simulation_with<M, F>(
    model: &M,
    grid: &TimeGrid,
    u: &DesignVector,
    opts: &SimulationOptions,
    mut observe: F,
) -> Result<SimulationResult>
where
    M: Model + ?Sized,
    F: FnMut(&Trajectory, &SweepReport),
{
    let mut traj = Trajectory::constant(grid.steps(), &model.initial_state(u));
    let mut report = residual_report(model, grid, &traj, u)?;
    observe(&traj, &report);
    let mut history = vec![report.clone()];
    let mut k = 0;
    while report.total_residual > opts.tol && k < opts.max_iter {
        k += 1;
        let (next, mut rep) = if opts.rescaling {
            sweep_with_rescaling(model, grid, &traj, u, &opts.sweep)?
        } else {
            let next = sweep_h(model, grid, &traj, u, &opts.sweep)?;
            let rep = residual_report(model, grid, &next, u)?;
            (next, rep)
        };
        if !next.is_finite() {
            return Err(Error::Divergence { block: "primal", iteration: k });
        }
        rep.iteration_index = k;
        observe(&next, &rep);
        traj = next;
        report = rep;
        history.push(report.clone());
    }
    Ok(SimulationResult { converged: report.total_residual <= opts.tol, trajectory: traj, iterations: k, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inner::{solve_timestep, ClassicOptions};
    use crate::models::{AdvectionDiffusionModel, LinearTestModel, VanDerPolModel};

    fn classic<M: Model>(model: &M, grid: &TimeGrid, u: &DesignVector) -> Trajectory {
        let opts = ClassicOptions { tol: 1e-13, ..Default::default() };
        let mut prev = model.initial_state(u);
        let mut out = vec![];
        for &dt in grid.step_sizes() {
            prev = solve_timestep(model, &prev, dt, u, &opts).unwrap().state;
            out.push(prev.clone());
        }
        Trajectory::new(out).unwrap()
    }

    #[test]
    fn converged_trajectory_is_a_fixed_point() {
        let m = VanDerPolModel::default();
        let grid = TimeGrid::uniform(5.0, 50).unwrap();
        let u = m.default_design();
        let star = classic(&m, &grid, &u);
        let next = sweep_h(&m, &grid, &star, &u, &SweepOptions { preconditioner_scale: 2.0 }).unwrap();
        assert!((next.axpy(-1.0, &star)).norm() < 1e-12);
    }

    #[test]
    fn trivial_dynamics_settle_in_one_sweep() {
        let m = LinearTestModel::decay(0.0, 0.75);
        let grid = TimeGrid::uniform(1.0, 7).unwrap();
        let u = DesignVector::zeros(1);
        let start = Trajectory::new((0..7).map(|i| StateVector::from_element(1, i as f64)).collect()).unwrap();
        let next = sweep_h(&m, &grid, &start, &u, &SweepOptions::default()).unwrap();
        for s in next.states() {
            assert!((s[0] - 0.75).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_scalar_one_sweep_is_backward_euler() {
        let (lambda, y0, n) = (-2.0, 1.5, 10);
        let m = LinearTestModel::decay(lambda, y0);
        let grid = TimeGrid::uniform(1.0, n).unwrap();
        let u = DesignVector::zeros(1);
        let next = sweep_h(&m, &grid, &Trajectory::zeros(n, 1), &u, &SweepOptions::default()).unwrap();
        let dt = 0.1;
        for (i, s) in next.states().iter().enumerate() {
            let exact = y0 / (1.0 - lambda * dt).powi(i as i32 + 1);
            assert!((s[0] - exact).abs() < 1e-13 * exact.abs());
        }
    }

    #[test]
    fn residual_report_of_zero_advection_diffusion_trajectory() {
        let m = AdvectionDiffusionModel::new(1.0, 1e-5, 100).unwrap();
        let grid = TimeGrid::uniform(1.0, 100).unwrap();
        let rep = residual_report(&m, &grid, &Trajectory::zeros(100, 100), &DesignVector::zeros(0)).unwrap();
        assert!(rep.per_step_residual[0] > 1.0);
        assert!(rep.per_step_residual[1..].iter().all(|&r| r == 0.0));
        let total: f64 = rep.per_step_residual.iter().map(|r| r * r).sum::<f64>().sqrt();
        assert!((rep.total_residual - total).abs() <= 1e-12 * total);
    }

    #[test]
    fn converged_report_is_below_tolerance() {
        let m = VanDerPolModel::default();
        let grid = TimeGrid::uniform(4.0, 40).unwrap();
        let u = m.default_design();
        let rep = residual_report(&m, &grid, &classic(&m, &grid, &u), &u).unwrap();
        assert!(rep.max_step_residual() <= 1e-13);
    }

    #[test]
    fn contraction_vanishes_for_exact_newton() {
        let grid = TimeGrid::uniform(1.0, 20).unwrap();
        let trivial = LinearTestModel::decay(0.0, 1.0);
        let u = DesignVector::zeros(1);
        let traj = Trajectory::constant(20, &StateVector::from_element(1, 0.3));
        let rho = estimate_contraction(&trivial, &grid, &traj, &u, &SweepOptions::default(), 5, 1).unwrap();
        assert!(rho <= 1e-14, "{rho}");
        let lin = LinearTestModel::decay(-1.5, 1.0);
        let star = classic(&lin, &grid, &u);
        let rho = estimate_contraction(&lin, &grid, &star, &u, &SweepOptions::default(), 5, 1).unwrap();
        assert!(rho <= 1e-8, "{rho}");
    }

    #[test]
    fn exact_newton_sweep_has_zero_state_derivative() {
        let m = VanDerPolModel::default();
        let grid = TimeGrid::uniform(5.0, 64).unwrap();
        let u = m.default_design();
        let star = classic(&m, &grid, &u);
        let rho = estimate_contraction(&m, &grid, &star, &u, &SweepOptions::default(), 20, 3).unwrap();
        assert!(rho <= 1e-12, "{rho}");
    }

    #[test]
    fn damped_decay_contraction_is_between_half_and_one() {
        // A_i = I/2 and |B_i| = 1/(2(1 + dt)) < 1/2: rho in (1/2, 1)
        let m = LinearTestModel::decay(-1.0, 1.0);
        let grid = TimeGrid::uniform(4.0, 40).unwrap();
        let u = DesignVector::zeros(1);
        let star = classic(&m, &grid, &u);
        let opts = SweepOptions { preconditioner_scale: 2.0 };
        let rho = estimate_contraction(&m, &grid, &star, &u, &opts, 200, 3).unwrap();
        let bound = 0.5 / (1.0 - 0.5 / 1.1);
        assert!(rho > 0.5 && rho <= bound, "{rho}");
    }

    #[test]
    fn sweeps_are_deterministic() {
        let m = VanDerPolModel::default();
        let grid = TimeGrid::uniform(3.0, 30).unwrap();
        let u = m.default_design();
        let start = Trajectory::constant(30, &m.initial_state(&u));
        let opts = SweepOptions { preconditioner_scale: 1.3 };
        let a = sweep_h(&m, &grid, &start, &u, &opts).unwrap();
        let b = sweep_h(&m, &grid, &start, &u, &opts).unwrap();
        for (x, y) in a.states().iter().zip(b.states()) {
            assert!(x.iter().zip(y.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn simulation_converges_geometrically() {
        let m = VanDerPolModel::default();
        let grid = TimeGrid::uniform(4.0, 64).unwrap();
        let opts = SimulationOptions {
            sweep: SweepOptions { preconditioner_scale: 2.0 },
            tol: 1e-10,
            max_iter: 2000,
            rescaling: false,
        };
        let sim = run_simulation(&m, &grid, &m.default_design(), &opts).unwrap();
        assert!(sim.converged);
        // tail ratio of successive total residuals stays below one
        let r: Vec<f64> = sim.history.iter().map(|h| h.total_residual).collect();
        let tail = &r[r.len() - 10..];
        let rate = (tail[9] / tail[0]).powf(1.0 / 9.0);
        assert!(rate < 1.0, "{rate}");
    }

    #[test]
    fn rescaled_sweep_never_increases_residual() {
        let m = VanDerPolModel::default();
        let grid = TimeGrid::uniform(6.0, 60).unwrap();
        let u = m.default_design();
        let opts = SweepOptions { preconditioner_scale: 2.0 };
        let mut traj = Trajectory::constant(60, &m.initial_state(&u));
        for _ in 0..30 {
            let plain = sweep_h(&m, &grid, &traj, &u, &opts).unwrap();
            let plain_res = residual_report(&m, &grid, &plain, &u).unwrap().total_residual;
            let (next, rep) = sweep_with_rescaling(&m, &grid, &traj, &u, &opts).unwrap();
            assert!(rep.total_residual <= plain_res);
            assert!(rep.rescaling.is_some());
            traj = next;
        }
    }

    #[test]
    fn rescaling_is_identity_at_converged_state() {
        let m = VanDerPolModel::default();
        let grid = TimeGrid::uniform(3.0, 30).unwrap();
        let u = m.default_design();
        let star = classic(&m, &grid, &u);
        let (next, rep) = sweep_with_rescaling(&m, &grid, &star, &u, &SweepOptions::default()).unwrap();
        assert!(rep.rescaling.unwrap().applied);
        assert!(next.axpy(-1.0, &star).norm() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let m = VanDerPolModel::default();
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let r = sweep_h(&m, &grid, &Trajectory::zeros(3, 2), &m.default_design(), &SweepOptions::default());
        assert!(matches!(r, Err(Error::ShapeMismatch(_))));
    }
}
