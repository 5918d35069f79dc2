//! Adaptive time rescaling: assign each state the time that minimizes its
//! Backward-Euler residual, then resample the trajectory onto the reference grid.

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::Model;
use crate::trajectory::{DesignVector, StateVector, Trajectory};

/// Below this `|f_h|` the time direction is undefined and the step is left alone.
const DEGENERATE_RHS: f64 = 1e-14;
/// Minimal spacing between rescaled times, relative to `T`.
const MIN_SPACING: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct RescaledTimes {
    /// `t~_1 .. t~_N`
    pub t_tilde: Vec<f64>,
    /// Whether step `i` kept its rescaled time (false: fell back to `t_i`).
    pub accepted: Vec<bool>,
}

/// Minimizer over `t~` of `|(y - y_prev) / (t~ - t_prev) - f|_2`:
/// `t_prev + <y - y_prev, f> / |f|^2`. `None` when `f` vanishes.
pub fn residual_minimizing_time(t_prev: f64, y: &StateVector, y_prev: &StateVector, f: &StateVector) -> Option<f64> {
    let ff = f.norm_squared();
    if ff.sqrt() < DEGENERATE_RHS {
        return None;
    }
    Some(t_prev + (y - y_prev).dot(f) / ff)
}

/// Rescaled times with the monotonicity safeguard: step `i` keeps its
/// candidate only if `t~_{i-1} + eps < t~_i < t_{i+1} - eps`, otherwise it
/// falls back to `t_i`. Candidates within `eps` of `t_i` snap to `t_i`.
pub fn rescale_times<M: Model + ?Sized>(
    model: &M,
    grid: &TimeGrid,
    traj: &Trajectory,
    u: &DesignVector,
) -> RescaledTimes {
    let n = grid.steps();
    let eps = MIN_SPACING * grid.final_time();
    let mut t_tilde = Vec::with_capacity(n);
    let mut accepted = Vec::with_capacity(n);
    let mut prev_state = model.initial_state(u);
    let mut lower = grid.time(0);
    for i in 1..=n {
        let y = traj.state(i);
        let f = model.rhs(y, u);
        let t_i = grid.time(i);
        let upper = if i < n { grid.time(i + 1) - eps } else { f64::INFINITY };
        let candidate = residual_minimizing_time(grid.time(i - 1), y, &prev_state, &f)
            .filter(|c| c.is_finite() && *c > lower + eps && *c < upper);
        let (t, ok) = match candidate {
            Some(c) if (c - t_i).abs() <= eps => (t_i, true),
            Some(c) => (c, true),
            None => (t_i, false),
        };
        t_tilde.push(t);
        accepted.push(ok);
        lower = t;
        prev_state = y.clone();
    }
    RescaledTimes { t_tilde, accepted }
}

/// Evaluate the piecewise-linear curve through `(t~_i, y^i)` at the reference
/// times `t_1..t_N`, clamping outside `[t~_1, t~_N]`.
pub fn resample_to_grid(traj: &Trajectory, times: &RescaledTimes, grid: &TimeGrid) -> Result<Trajectory> {
    let tt = &times.t_tilde;
    let n = traj.steps();
    if tt.len() != n || grid.steps() != n {
        return Err(Error::ShapeMismatch("rescaled times do not match the trajectory".into()));
    }
    if tt.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("rescaled times are not strictly increasing".into()));
    }
    let states = traj.states();
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for i in 1..=n {
        let t = grid.time(i);
        if t <= tt[0] {
            out.push(states[0].clone());
            continue;
        }
        if t >= tt[n - 1] {
            out.push(states[n - 1].clone());
            continue;
        }
        while tt[seg + 1] < t {
            seg += 1;
        }
        let w = (t - tt[seg]) / (tt[seg + 1] - tt[seg]);
        out.push(&states[seg] * (1.0 - w) + &states[seg + 1] * w);
    }
    Trajectory::new(out)
}
