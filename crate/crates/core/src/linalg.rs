//! Structured linear algebra for the inner preconditioners.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Periodic tridiagonal matrix. Row `j` reads
/// `lower[j] * x[j-1] + diag[j] * x[j] + upper[j] * x[j+1]` with indices mod `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CyclicTridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl CyclicTridiagonal {
    pub fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if n < 3 || lower.len() != n || upper.len() != n {
            return Err(Error::InvalidArgument(
                "cyclic tridiagonal matrix needs three bands of equal length >= 3".into(),
            ));
        }
        Ok(Self { lower, diag, upper })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        DVector::from_fn(n, |j, _| {
            self.lower[j] * x[(j + n - 1) % n] + self.diag[j] * x[j] + self.upper[j] * x[(j + 1) % n]
        })
    }

    pub fn transpose(&self) -> Self {
        let n = self.dim();
        Self {
            lower: (0..n).map(|j| self.upper[(j + n - 1) % n]).collect(),
            diag: self.diag.clone(),
            upper: (0..n).map(|j| self.lower[(j + 1) % n]).collect(),
        }
    }

    pub fn apply_transpose(&self, x: &DVector<f64>) -> DVector<f64> {
        self.transpose().apply(x)
    }

    /// `alpha * I + beta * self`.
    pub fn shifted(&self, alpha: f64, beta: f64) -> Self {
        Self {
            lower: self.lower.iter().map(|v| beta * v).collect(),
            diag: self.diag.iter().map(|v| alpha + beta * v).collect(),
            upper: self.upper.iter().map(|v| beta * v).collect(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut a = DMatrix::zeros(n, n);
        for j in 0..n {
            a[(j, (j + n - 1) % n)] += self.lower[j];
            a[(j, j)] += self.diag[j];
            a[(j, (j + 1) % n)] += self.upper[j];
        }
        a
    }
}

/// Factorization of a [`CyclicTridiagonal`] matrix by the Sherman-Morrison
/// correction of a Thomas elimination. No pivoting: intended for diagonally
/// dominant systems such as `I/dt - J` of a diffusive stencil.
#[derive(Debug, Clone)]
pub struct CyclicTridiagonalLu {
    sub: Vec<f64>,
    // modified-diagonal Thomas factors
    c_prime: Vec<f64>,
    denom: Vec<f64>,
    gamma: f64,
    beta: f64,
    z: Vec<f64>,
    z_factor: f64,
}

impl CyclicTridiagonalLu {
    pub fn new(a: &CyclicTridiagonal) -> Result<Self> {
        let n = a.dim();
        // bottom-left and top-right corners
        let alpha = a.upper[n - 1];
        let beta = a.lower[0];
        let gamma = if a.diag[0] != 0.0 { -a.diag[0] } else { -1.0 };
        let mut diag = a.diag.clone();
        diag[0] -= gamma;
        diag[n - 1] -= alpha * beta / gamma;

        let mut c_prime = vec![0.0; n];
        let mut denom = vec![0.0; n];
        let mut prev_c = 0.0;
        for j in 0..n {
            let sub = if j == 0 { 0.0 } else { a.lower[j] };
            let d = diag[j] - sub * prev_c;
            if d == 0.0 || !d.is_finite() {
                return Err(Error::Singular { step: None });
            }
            denom[j] = d;
            let sup = if j + 1 < n { a.upper[j] } else { 0.0 };
            c_prime[j] = sup / d;
            prev_c = c_prime[j];
        }
        let mut lu = Self { sub: a.lower.clone(), c_prime, denom, gamma, beta, z: Vec::new(), z_factor: 0.0 };
        let mut corr = vec![0.0; n];
        corr[0] = gamma;
        corr[n - 1] = alpha;
        lu.z = lu.thomas(&corr);
        let d = 1.0 + lu.z[0] + beta * lu.z[n - 1] / gamma;
        if d == 0.0 || !d.is_finite() {
            return Err(Error::Singular { step: None });
        }
        lu.z_factor = 1.0 / d;
        Ok(lu)
    }

    fn thomas(&self, r: &[f64]) -> Vec<f64> {
        let n = r.len();
        let mut x = vec![0.0; n];
        let mut prev = 0.0;
        for j in 0..n {
            let sub = if j == 0 { 0.0 } else { self.sub[j] };
            x[j] = (r[j] - sub * prev) / self.denom[j];
            prev = x[j];
        }
        for j in (0..n - 1).rev() {
            x[j] -= self.c_prime[j] * x[j + 1];
        }
        x
    }

    pub fn solve(&self, r: &DVector<f64>) -> DVector<f64> {
        let n = r.len();
        let mut x = self.thomas(r.as_slice());
        let fact = (x[0] + self.beta * x[n - 1] / self.gamma) * self.z_factor;
        for (xj, zj) in x.iter_mut().zip(&self.z) {
            *xj -= fact * zj;
        }
        DVector::from_vec(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dominant(n: usize, rng: &mut ChaCha8Rng) -> CyclicTridiagonal {
        let lower: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let upper: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let diag = (0..n).map(|j| 2.5 + lower[j].abs() + upper[j].abs()).collect();
        CyclicTridiagonal::new(lower, diag, upper).unwrap()
    }

    #[test]
    fn solve_matches_dense_lu() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [3, 4, 10, 101] {
            let a = random_dominant(n, &mut rng);
            let r = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let x = CyclicTridiagonalLu::new(&a).unwrap().solve(&r);
            let x_dense = a.to_dense().lu().solve(&r).unwrap();
            assert!((&x - &x_dense).norm() < 1e-12 * x_dense.norm().max(1.0), "n = {n}");
            assert!((a.apply(&x) - &r).norm() < 1e-12);
        }
    }

    #[test]
    fn transpose_agrees_with_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_dominant(6, &mut rng);
        let x = DVector::from_fn(6, |i, _| i as f64 - 2.0);
        let dense = a.to_dense().transpose() * &x;
        assert!((a.apply_transpose(&x) - dense).norm() < 1e-14);
        assert_eq!(a.transpose().transpose(), a);
    }

    #[test]
    fn rejects_short_bands() {
        assert!(CyclicTridiagonal::new(vec![0.0; 2], vec![1.0; 2], vec![0.0; 2]).is_err());
    }
}
