//! Space-time containers: the state trajectory `(y^1, ..., y^N)` and its adjoint.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// A state `y^i` (or multiplier) of fixed dimension `m`.
pub type StateVector = DVector<f64>;
/// Design variables `u`.
pub type DesignVector = DVector<f64>;

/// States at times `t_1..t_N`; `y^0` is owned by the model, not stored here.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: Vec<StateVector>,
}

/// Multipliers `(ybar^1, ..., ybar^N)`, same shape as the primal trajectory.
pub type AdjointTrajectory = Trajectory;

impl Trajectory {
    pub fn new(states: Vec<StateVector>) -> Result<Self> {
        if let Some(first) = states.first() {
            let m = first.len();
            if states.iter().any(|s| s.len() != m) {
                return Err(Error::ShapeMismatch("states differ in dimension".into()));
            }
        }
        Ok(Self { states })
    }

    pub fn zeros(steps: usize, dim: usize) -> Self {
        Self { states: vec![StateVector::zeros(dim); steps] }
    }

    /// Every state equal to `state`.
    pub fn constant(steps: usize, state: &StateVector) -> Self {
        Self { states: vec![state.clone(); steps] }
    }

    pub fn steps(&self) -> usize {
        self.states.len()
    }

    pub fn state_dim(&self) -> usize {
        self.states.first().map_or(0, |s| s.len())
    }

    /// State `y^i` for 1-based `i`.
    pub fn state(&self, i: usize) -> &StateVector {
        &self.states[i - 1]
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn states_mut(&mut self) -> &mut [StateVector] {
        &mut self.states
    }

    pub fn into_states(self) -> Vec<StateVector> {
        self.states
    }

    /// Euclidean inner product on `Y^N`.
    pub fn dot(&self, other: &Trajectory) -> f64 {
        self.states.iter().zip(&other.states).map(|(a, b)| a.dot(b)).sum()
    }

    pub fn norm(&self) -> f64 {
        trajectory_norm(self)
    }

    pub fn is_finite(&self) -> bool {
        self.states.iter().all(|s| s.iter().all(|x| x.is_finite()))
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &Trajectory) -> Trajectory {
        Trajectory { states: self.states.iter().zip(&other.states).map(|(a, b)| a + b * alpha).collect() }
    }

    pub fn scale(&self, alpha: f64) -> Trajectory {
        Trajectory { states: self.states.iter().map(|a| a * alpha).collect() }
    }

    pub fn same_shape(&self, other: &Trajectory) -> bool {
        self.steps() == other.steps() && self.state_dim() == other.state_dim()
    }
}

/// `sqrt(sum_i |y^i|_2^2)`, the unweighted Euclidean norm on `Y^N`.
pub fn trajectory_norm(a: &Trajectory) -> f64 {
    a.states.iter().map(|s| s.norm_squared()).sum::<f64>().sqrt()
}
