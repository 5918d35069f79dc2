//! The problem interface consumed by every solver: right-hand side `f_h(y, u)`,
//! its derivative actions, the initial state `y^0(u)` and the instantaneous
//! objective `J^(y, u)`.

use nalgebra::DMatrix;

use crate::linalg::CyclicTridiagonal;
use crate::trajectory::{DesignVector, StateVector};

/// Structure of `df_h/dy`, used to pick the inner preconditioner's factorization.
#[derive(Debug, Clone, PartialEq)]
pub enum StateJacobian {
    Dense(DMatrix<f64>),
    CyclicTridiagonal(CyclicTridiagonal),
}

impl StateJacobian {
    pub fn dim(&self) -> usize {
        match self {
            StateJacobian::Dense(a) => a.nrows(),
            StateJacobian::CyclicTridiagonal(a) => a.dim(),
        }
    }

    pub fn apply(&self, v: &StateVector) -> StateVector {
        match self {
            StateJacobian::Dense(a) => a * v,
            StateJacobian::CyclicTridiagonal(a) => a.apply(v),
        }
    }

    pub fn apply_transpose(&self, w: &StateVector) -> StateVector {
        match self {
            StateJacobian::Dense(a) => a.tr_mul(w),
            StateJacobian::CyclicTridiagonal(a) => a.apply_transpose(w),
        }
    }
}

/// A semi-discretized unsteady problem `dy/dt = f_h(y, u)`, `y(0) = y^0(u)`.
///
/// State dimension `m` and design dimension `n` are fixed per instance.
pub trait Model {
    fn state_dim(&self) -> usize;
    fn design_dim(&self) -> usize;

    fn rhs(&self, y: &StateVector, u: &DesignVector) -> StateVector;

    /// `df_h/dy` at `(y, u)` as an explicit structured matrix.
    fn rhs_jacobian(&self, y: &StateVector, u: &DesignVector) -> StateJacobian;

    /// `(df_h/dy) v`
    fn rhs_jac_y_apply(&self, y: &StateVector, u: &DesignVector, v: &StateVector) -> StateVector {
        self.rhs_jacobian(y, u).apply(v)
    }

    /// `(df_h/dy)^T w`
    fn rhs_jac_y_transpose_apply(&self, y: &StateVector, u: &DesignVector, w: &StateVector) -> StateVector {
        self.rhs_jacobian(y, u).apply_transpose(w)
    }

    /// `(df_h/du)^T w`
    fn rhs_jac_u_transpose_apply(&self, y: &StateVector, u: &DesignVector, w: &StateVector) -> DesignVector;

    fn initial_state(&self, u: &DesignVector) -> StateVector;

    /// `(dy^0/du)^T w`; zero for models whose initial condition ignores the design.
    fn initial_state_jac_u_transpose_apply(&self, _u: &DesignVector, _w: &StateVector) -> DesignVector {
        DesignVector::zeros(self.design_dim())
    }

    fn objective_instant(&self, y: &StateVector, u: &DesignVector) -> f64;

    fn objective_grad_y(&self, y: &StateVector, u: &DesignVector) -> StateVector;

    /// `dJ^/du`; zero unless the objective depends on the design directly.
    fn objective_grad_u(&self, _y: &StateVector, _u: &DesignVector) -> DesignVector {
        DesignVector::zeros(self.design_dim())
    }
}

impl<M: Model + ?Sized> Model for &M {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn design_dim(&self) -> usize {
        (**self).design_dim()
    }
    fn rhs(&self, y: &StateVector, u: &DesignVector) -> StateVector {
        (**self).rhs(y, u)
    }
    fn rhs_jacobian(&self, y: &StateVector, u: &DesignVector) -> StateJacobian {
        (**self).rhs_jacobian(y, u)
    }
    fn rhs_jac_y_apply(&self, y: &StateVector, u: &DesignVector, v: &StateVector) -> StateVector {
        (**self).rhs_jac_y_apply(y, u, v)
    }
    fn rhs_jac_y_transpose_apply(&self, y: &StateVector, u: &DesignVector, w: &StateVector) -> StateVector {
        (**self).rhs_jac_y_transpose_apply(y, u, w)
    }
    fn rhs_jac_u_transpose_apply(&self, y: &StateVector, u: &DesignVector, w: &StateVector) -> DesignVector {
        (**self).rhs_jac_u_transpose_apply(y, u, w)
    }
    fn initial_state(&self, u: &DesignVector) -> StateVector {
        (**self).initial_state(u)
    }
    fn initial_state_jac_u_transpose_apply(&self, u: &DesignVector, w: &StateVector) -> DesignVector {
        (**self).initial_state_jac_u_transpose_apply(u, w)
    }
    fn objective_instant(&self, y: &StateVector, u: &DesignVector) -> f64 {
        (**self).objective_instant(y, u)
    }
    fn objective_grad_y(&self, y: &StateVector, u: &DesignVector) -> StateVector {
        (**self).objective_grad_y(y, u)
    }
    fn objective_grad_u(&self, y: &StateVector, u: &DesignVector) -> DesignVector {
        (**self).objective_grad_u(y, u)
    }
}

/// Finite-difference and pairing checks for hand-coded model derivatives.
pub mod check {
    use super::*;

    /// `|(f(y + eps v) - f(y - eps v)) / 2eps - (df/dy) v|`
    pub fn jac_y_fd_error<M: Model + ?Sized>(
        model: &M,
        y: &StateVector,
        u: &DesignVector,
        v: &StateVector,
        eps: f64,
    ) -> f64 {
        let fd = (model.rhs(&(y + v * eps), u) - model.rhs(&(y - v * eps), u)) / (2.0 * eps);
        (fd - model.rhs_jac_y_apply(y, u, v)).norm()
    }

    /// Central difference of `f` along design direction `du`, paired with `w`,
    /// against `<du, (df/du)^T w>`. Returns `(fd, adjoint)`.
    pub fn jac_u_pairing<M: Model + ?Sized>(
        model: &M,
        y: &StateVector,
        u: &DesignVector,
        du: &DesignVector,
        w: &StateVector,
        eps: f64,
    ) -> (f64, f64) {
        let fd = (model.rhs(y, &(u + du * eps)) - model.rhs(y, &(u - du * eps))) / (2.0 * eps);
        (fd.dot(w), du.dot(&model.rhs_jac_u_transpose_apply(y, u, w)))
    }

    /// Relative defect of `<(df/dy) v, w> = <v, (df/dy)^T w>`.
    pub fn transpose_pairing_defect<M: Model + ?Sized>(
        model: &M,
        y: &StateVector,
        u: &DesignVector,
        v: &StateVector,
        w: &StateVector,
    ) -> f64 {
        let a = model.rhs_jac_y_apply(y, u, v).dot(w);
        let b = v.dot(&model.rhs_jac_y_transpose_apply(y, u, w));
        (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
    }

    /// Central difference of `J^` in `y` along `v` against `<grad_y J^, v>`.
    pub fn objective_grad_y_error<M: Model + ?Sized>(
        model: &M,
        y: &StateVector,
        u: &DesignVector,
        v: &StateVector,
        eps: f64,
    ) -> f64 {
        let fd =
            (model.objective_instant(&(y + v * eps), u) - model.objective_instant(&(y - v * eps), u)) / (2.0 * eps);
        (fd - model.objective_grad_y(y, u).dot(v)).abs()
    }
}
