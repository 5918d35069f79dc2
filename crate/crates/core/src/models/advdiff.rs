use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::CyclicTridiagonal;
use crate::model::{Model, StateJacobian};
use crate::trajectory::{DesignVector, StateVector};

/// `y_t + a y_x - mu y_xx = 0` on the periodic unit interval, central
/// differences on `M` points, `y(0, x) = sin(2 pi x)`. Carries no design.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvectionDiffusionModel {
    pub a: f64,
    pub mu: f64,
    points: usize,
    dx: f64,
    stencil: CyclicTridiagonal,
}

impl AdvectionDiffusionModel {
    pub fn new(a: f64, mu: f64, points: usize) -> Result<Self> {
        if points < 3 {
            return Err(Error::InvalidArgument(format!(
                "advection-diffusion needs at least 3 grid points, got {points}"
            )));
        }
        if !(mu >= 0.0 && mu.is_finite() && a.is_finite()) {
            return Err(Error::InvalidArgument("a must be finite and mu >= 0".into()));
        }
        let dx = 1.0 / points as f64;
        let adv = a / (2.0 * dx);
        let diff = mu / (dx * dx);
        let stencil =
            CyclicTridiagonal::new(vec![adv + diff; points], vec![-2.0 * diff; points], vec![-adv + diff; points])?;
        Ok(Self { a, mu, points, dx, stencil })
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// The linear spatial operator; `f_h(y) = L y`.
    pub fn operator(&self) -> &CyclicTridiagonal {
        &self.stencil
    }

    /// `sin(2 pi j dx)`, `j = 0..M-1`.
    pub fn initial_profile(&self) -> StateVector {
        StateVector::from_fn(self.points, |j, _| (2.0 * PI * j as f64 * self.dx).sin())
    }
}

impl Model for AdvectionDiffusionModel {
    fn state_dim(&self) -> usize {
        self.points
    }

    fn design_dim(&self) -> usize {
        0
    }

    fn rhs(&self, y: &StateVector, _u: &DesignVector) -> StateVector {
        self.stencil.apply(y)
    }

    fn rhs_jacobian(&self, _y: &StateVector, _u: &DesignVector) -> StateJacobian {
        StateJacobian::CyclicTridiagonal(self.stencil.clone())
    }

    fn rhs_jac_y_apply(&self, _y: &StateVector, _u: &DesignVector, v: &StateVector) -> StateVector {
        self.stencil.apply(v)
    }

    fn rhs_jac_y_transpose_apply(&self, _y: &StateVector, _u: &DesignVector, w: &StateVector) -> StateVector {
        self.stencil.apply_transpose(w)
    }

    fn rhs_jac_u_transpose_apply(&self, _y: &StateVector, _u: &DesignVector, _w: &StateVector) -> DesignVector {
        DesignVector::zeros(0)
    }

    fn initial_state(&self, _u: &DesignVector) -> StateVector {
        self.initial_profile()
    }

    /// Discrete `L2` energy `1/2 sum_j y_j^2 dx`.
    fn objective_instant(&self, y: &StateVector, _u: &DesignVector) -> f64 {
        0.5 * self.dx * y.norm_squared()
    }

    fn objective_grad_y(&self, y: &StateVector, _u: &DesignVector) -> StateVector {
        y * self.dx
    }
}
