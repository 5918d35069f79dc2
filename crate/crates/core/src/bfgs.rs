//! Secant approximation `B_k` of the design Hessian, used as the design-step
//! preconditioner `u <- u - B^{-1} g`.

use nalgebra::DMatrix;

use crate::trajectory::DesignVector;

/// Relative curvature threshold below which an update is skipped.
pub const SKIP_TOL: f64 = 1e-12;

/// `B` is kept as `L L^T` with `L` lower triangular, so positive
/// definiteness survives rounding; the assembled matrix is cached.
#[derive(Debug, Clone, PartialEq)]
pub struct BfgsState {
    l: DMatrix<f64>,
    b: DMatrix<f64>,
    pub last_u: DesignVector,
    pub last_g: DesignVector,
}

impl BfgsState {
    /// `B_0 = gamma I`.
    pub fn new(n: usize, gamma: f64) -> Self {
        Self {
            l: DMatrix::identity(n, n) * gamma.sqrt(),
            b: DMatrix::identity(n, n) * gamma,
            last_u: DesignVector::zeros(n),
            last_g: DesignVector::zeros(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// Lower-triangular factor `L` of `B = L L^T`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// `B <- B - (B s)(B s)^T / <s, B s> + w w^T / <s, w>`, evaluated in
    /// factored form: with `v = sqrt(<s,w> / <s,Bs>) L^T s` and
    /// `J = L + (w - L v) v^T / <v,v>`, the update is `J J^T`, re-triangularized
    /// by a QR factorization of `J^T`.
    /// Returns `false` (leaving `B` untouched) when `<s, w> <= SKIP_TOL |s| |w|`.
    pub fn update(&mut self, s: &DesignVector, w: &DesignVector) -> bool {
        let sw = s.dot(w);
        if !(sw > SKIP_TOL * s.norm() * w.norm()) {
            return false;
        }
        let lts = self.l.tr_mul(s);
        let sbs = lts.norm_squared();
        if !(sbs > 0.0) {
            return false;
        }
        let v = lts * (sw / sbs).sqrt();
        let j = &self.l + (w - &self.l * &v) * v.transpose() / v.norm_squared();
        let l = j.transpose().qr().r().transpose();
        if !l.iter().all(|x| x.is_finite()) || l.diagonal().iter().any(|&d| d == 0.0) {
            return false;
        }
        let b = &l * l.transpose();
        self.b = (&b + b.transpose()) * 0.5;
        self.l = l;
        true
    }

    /// `B^{-1} g`
    pub fn direction(&self, g: &DesignVector) -> DesignVector {
        let y = self.l.solve_lower_triangular(g).unwrap_or_else(|| g.clone());
        self.l.tr_solve_lower_triangular(&y).unwrap_or(y)
    }
}

/// Update with `s = u_{k+1} - u_k` and `w = g_new - g_old`.
pub fn bfgs_update(mut state: BfgsState, s: &DesignVector, g_new: &DesignVector, g_old: &DesignVector) -> BfgsState {
    state.update(s, &(g_new - g_old));
    state
}
