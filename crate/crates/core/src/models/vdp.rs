use nalgebra::{DMatrix, Matrix2, Vector2};

use crate::model::{Model, StateJacobian};
use crate::trajectory::{DesignVector, StateVector};

/// Van der Pol oscillator `x' = v`, `v' = -x + u (1 - x^2) v` with the damping
/// factor `u` as the single design variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VanDerPolModel {
    pub u_default: f64,
    pub x0: f64,
    pub v0: f64,
}

impl Default for VanDerPolModel {
    fn default() -> Self {
        Self { u_default: 1.0, x0: 2.0, v0: 0.0 }
    }
}

impl VanDerPolModel {
    pub fn new(u_default: f64, x0: f64, v0: f64) -> Self {
        Self { u_default, x0, v0 }
    }

    pub fn default_design(&self) -> DesignVector {
        DesignVector::from_element(1, self.u_default)
    }

    pub fn eval(y: &Vector2<f64>, u: f64) -> Vector2<f64> {
        let (x, v) = (y[0], y[1]);
        Vector2::new(v, -x + u * (1.0 - x * x) * v)
    }

    /// `(df/dy, df/du)` at `(y, u)`.
    pub fn jacobians(y: &Vector2<f64>, u: f64) -> (Matrix2<f64>, Vector2<f64>) {
        let (x, v) = (y[0], y[1]);
        let dfdy = Matrix2::new(0.0, 1.0, -1.0 - 2.0 * u * x * v, u * (1.0 - x * x));
        let dfdu = Vector2::new(0.0, (1.0 - x * x) * v);
        (dfdy, dfdu)
    }
}

fn pair(y: &StateVector) -> Vector2<f64> {
    Vector2::new(y[0], y[1])
}

impl Model for VanDerPolModel {
    fn state_dim(&self) -> usize {
        2
    }

    fn design_dim(&self) -> usize {
        1
    }

    fn rhs(&self, y: &StateVector, u: &DesignVector) -> StateVector {
        let f = Self::eval(&pair(y), u[0]);
        StateVector::from_column_slice(f.as_slice())
    }

    fn rhs_jacobian(&self, y: &StateVector, u: &DesignVector) -> StateJacobian {
        let (a, _) = Self::jacobians(&pair(y), u[0]);
        StateJacobian::Dense(DMatrix::from_column_slice(2, 2, a.as_slice()))
    }

    fn rhs_jac_y_apply(&self, y: &StateVector, u: &DesignVector, v: &StateVector) -> StateVector {
        let (a, _) = Self::jacobians(&pair(y), u[0]);
        let r = a * pair(v);
        StateVector::from_column_slice(r.as_slice())
    }

    fn rhs_jac_y_transpose_apply(&self, y: &StateVector, u: &DesignVector, w: &StateVector) -> StateVector {
        let (a, _) = Self::jacobians(&pair(y), u[0]);
        let r = a.tr_mul(&pair(w));
        StateVector::from_column_slice(r.as_slice())
    }

    fn rhs_jac_u_transpose_apply(&self, y: &StateVector, u: &DesignVector, w: &StateVector) -> DesignVector {
        let (_, b) = Self::jacobians(&pair(y), u[0]);
        DesignVector::from_element(1, b.dot(&pair(w)))
    }

    fn initial_state(&self, _u: &DesignVector) -> StateVector {
        StateVector::from_vec(vec![self.x0, self.v0])
    }

    /// Half the squared phase-space radius.
    fn objective_instant(&self, y: &StateVector, _u: &DesignVector) -> f64 {
        0.5 * y.norm_squared()
    }

    fn objective_grad_y(&self, y: &StateVector, _u: &DesignVector) -> StateVector {
        y.clone()
    }
}

/// Van der Pol control problem: choose the damping `u` to minimize the time
/// average of `x^2 + v^2 + u_pen (u - u_ref)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlledVdpModel {
    pub oscillator: VanDerPolModel,
    pub u_pen: f64,
    pub u_ref: f64,
}

impl Default for ControlledVdpModel {
    fn default() -> Self {
        Self { oscillator: VanDerPolModel::default(), u_pen: 0.1, u_ref: 0.0 }
    }
}

impl ControlledVdpModel {
    pub fn new(oscillator: VanDerPolModel, u_pen: f64, u_ref: f64) -> Self {
        Self { oscillator, u_pen, u_ref }
    }

    /// Starting design of an optimization run.
    pub fn default_design(&self) -> DesignVector {
        self.oscillator.default_design()
    }
}

impl Model for ControlledVdpModel {
    fn state_dim(&self) -> usize {
        2
    }
    fn design_dim(&self) -> usize {
        1
    }
    fn rhs(&self, y: &StateVector, u: &DesignVector) -> StateVector {
        self.oscillator.rhs(y, u)
    }
    fn rhs_jacobian(&self, y: &StateVector, u: &DesignVector) -> StateJacobian {
        self.oscillator.rhs_jacobian(y, u)
    }
    fn rhs_jac_y_apply(&self, y: &StateVector, u: &DesignVector, v: &StateVector) -> StateVector {
        self.oscillator.rhs_jac_y_apply(y, u, v)
    }
    fn rhs_jac_y_transpose_apply(&self, y: &StateVector, u: &DesignVector, w: &StateVector) -> StateVector {
        self.oscillator.rhs_jac_y_transpose_apply(y, u, w)
    }
    fn rhs_jac_u_transpose_apply(&self, y: &StateVector, u: &DesignVector, w: &StateVector) -> DesignVector {
        self.oscillator.rhs_jac_u_transpose_apply(y, u, w)
    }
    fn initial_state(&self, u: &DesignVector) -> StateVector {
        self.oscillator.initial_state(u)
    }

    fn objective_instant(&self, y: &StateVector, u: &DesignVector) -> f64 {
        let d = u[0] - self.u_ref;
        y.norm_squared() + self.u_pen * d * d
    }

    fn objective_grad_y(&self, y: &StateVector, _u: &DesignVector) -> StateVector {
        y * 2.0
    }

    fn objective_grad_u(&self, _y: &StateVector, u: &DesignVector) -> DesignVector {
        DesignVector::from_element(1, 2.0 * self.u_pen * (u[0] - self.u_ref))
    }
}
