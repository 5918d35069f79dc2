use nalgebra::DMatrix;

use crate::model::{Model, StateJacobian};
use crate::trajectory::{DesignVector, StateVector};

/// Scalar linear problem `y' = lambda y + gain u`, `y(0) = y0 + y0_gain u`,
/// with objective `(y - target)^2 + penalty u^2`. Small enough for
/// closed-form checks of the solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearTestModel {
    pub lambda: f64,
    pub gain: f64,
    pub y0: f64,
    pub y0_gain: f64,
    pub target: f64,
    pub penalty: f64,
}

impl LinearTestModel {
    /// `y' = lambda y` from `y0`, no design dependence.
    pub fn decay(lambda: f64, y0: f64) -> Self {
        Self { lambda, gain: 0.0, y0, y0_gain: 0.0, target: 0.0, penalty: 0.0 }
    }
}

impl Model for LinearTestModel {
    fn state_dim(&self) -> usize {
        1
    }
    fn design_dim(&self) -> usize {
        1
    }
    fn rhs(&self, y: &StateVector, u: &DesignVector) -> StateVector {
        StateVector::from_element(1, self.lambda * y[0] + self.gain * u[0])
    }
    fn rhs_jacobian(&self, _y: &StateVector, _u: &DesignVector) -> StateJacobian {
        StateJacobian::Dense(DMatrix::from_element(1, 1, self.lambda))
    }
    fn rhs_jac_u_transpose_apply(&self, _y: &StateVector, _u: &DesignVector, w: &StateVector) -> DesignVector {
        DesignVector::from_element(1, self.gain * w[0])
    }
    fn initial_state(&self, u: &DesignVector) -> StateVector {
        StateVector::from_element(1, self.y0 + self.y0_gain * u[0])
    }
    fn initial_state_jac_u_transpose_apply(&self, _u: &DesignVector, w: &StateVector) -> DesignVector {
        DesignVector::from_element(1, self.y0_gain * w[0])
    }
    fn objective_instant(&self, y: &StateVector, u: &DesignVector) -> f64 {
        (y[0] - self.target).powi(2) + self.penalty * u[0] * u[0]
    }
    fn objective_grad_y(&self, y: &StateVector, _u: &DesignVector) -> StateVector {
        StateVector::from_element(1, 2.0 * (y[0] - self.target))
    }
    fn objective_grad_u(&self, _y: &StateVector, u: &DesignVector) -> DesignVector {
        DesignVector::from_element(1, 2.0 * self.penalty * u[0])
    }
}
