//! Small dense helpers shared across the crate: flat `&[f64]` vector ops and
//! an SPD matrix wrapper that caches the factorizations everything else needs
//! (inverse application, log-determinant, extreme eigenvalues, Cholesky).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `a + c * b` without mutating the inputs.
pub fn add_scaled(a: &[f64], c: f64, b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x + c * y).collect()
}

pub fn scale(c: f64, a: &[f64]) -> Vec<f64> {
    a.iter().map(|x| c * x).collect()
}

/// Vector of `dim` independent standard normal draws.
pub fn standard_normal_vec<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// Symmetric positive definite matrix with cached Cholesky factor, inverse,
/// log-determinant, and spectrum endpoints.
///
/// Construction fails on asymmetric or non-positive-definite input, so a held
/// value can be used without re-checking.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    dim: usize,
    mat: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    inv: DMatrix<f64>,
    log_det: f64,
    lambda_min: f64,
    lambda_max: f64,
}

impl SpdMatrix {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::invalid("matrix", "empty"));
        }
        for row in rows {
            if row.len() != dim {
                return Err(Error::invalid("matrix", "not square"));
            }
        }
        let mat = DMatrix::from_fn(dim, dim, |i, j| rows[i][j]);
        Self::from_dmatrix(mat)
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0).expect("identity is SPD")
    }

    pub fn scaled_identity(dim: usize, c: f64) -> Result<Self> {
        if c <= 0.0 || !c.is_finite() {
            return Err(Error::invalid("matrix scale", format!("{c} is not positive")));
        }
        Self::from_dmatrix(DMatrix::from_diagonal_element(dim, dim, c))
    }

    fn from_dmatrix(mat: DMatrix<f64>) -> Result<Self> {
        let dim = mat.nrows();
        for i in 0..dim {
            for j in 0..i {
                let denom = 1.0 + mat[(i, j)].abs().max(mat[(j, i)].abs());
                if (mat[(i, j)] - mat[(j, i)]).abs() > 1e-12 * denom {
                    return Err(Error::invalid("matrix", "not symmetric"));
                }
            }
        }
        if mat.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("matrix", "non-finite entry"));
        }
        let chol = Cholesky::new(mat.clone())
            .ok_or_else(|| Error::invalid("matrix", "not positive definite"))?;
        let inv = chol.inverse();
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let eigvals = mat.clone().symmetric_eigen().eigenvalues;
        let lambda_min = eigvals.iter().cloned().fold(f64::INFINITY, f64::min);
        let lambda_max = eigvals.iter().cloned().fold(0.0, f64::max);
        if lambda_min <= 0.0 {
            return Err(Error::invalid("matrix", "not positive definite"));
        }
        Ok(Self {
            dim,
            mat,
            chol,
            inv,
            log_det,
            lambda_min,
            lambda_max,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.mat[(i, j)]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.mat[(i, j)]).collect())
            .collect()
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    /// Operator norm; equals the largest eigenvalue for an SPD matrix.
    pub fn op_norm(&self) -> f64 {
        self.lambda_max
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let out = &self.mat * DVector::from_column_slice(v);
        out.iter().cloned().collect()
    }

    pub fn apply_inv(&self, v: &[f64]) -> Vec<f64> {
        let out = &self.inv * DVector::from_column_slice(v);
        out.iter().cloned().collect()
    }

    /// `v' (self^-1) v`, the squared Mahalanobis norm of `v`.
    pub fn inv_quadratic_form(&self, v: &[f64]) -> f64 {
        dot(v, &self.apply_inv(v))
    }

    /// The inverse, repackaged with its own cached factorizations.
    pub fn inverse(&self) -> Self {
        Self::from_dmatrix(self.inv.clone()).expect("inverse of SPD is SPD")
    }

    /// `a * self + b * I`; requires a result that is still positive definite.
    pub fn scale_add_identity(&self, a: f64, b: f64) -> Result<Self> {
        let mut out = &self.mat * a;
        for i in 0..self.dim {
            out[(i, i)] += b;
        }
        Self::from_dmatrix(out)
    }

    /// `mean + L z` for the cached Cholesky factor `L`, i.e. one draw from
    /// `N(mean, self)` when `z` is standard normal.
    pub fn correlate(&self, mean: &[f64], z: &[f64]) -> Vec<f64> {
        let lz = self.chol.l_dirty().lower_triangle() * DVector::from_column_slice(z);
        mean.iter().zip(lz.iter()).map(|(m, v)| m + v).collect()
    }

    /// Log-density of `N(mean, self)` at `y`.
    pub fn log_gaussian_density(&self, mean: &[f64], y: &[f64]) -> f64 {
        let diff = sub(y, mean);
        -0.5 * (self.dim as f64 * (2.0 * std::f64::consts::PI).ln()
            + self.log_det
            + self.inv_quadratic_form(&diff))
    }
}
