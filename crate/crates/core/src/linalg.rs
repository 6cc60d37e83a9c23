//! Small dense linear algebra on top of `nalgebra`.
//!
//! The factorizations here add explicit thresholds to what nalgebra offers:
//! LU solves refuse pivots below `1e-12 * ‖M‖∞`, and the positive-definiteness
//! test requires every Cholesky pivot to exceed `1e-12 * trace(M) / n`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

const PIVOT_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is singular: pivot {pivot:.3e} below threshold {threshold:.3e}")]
    Singular { pivot: f64, threshold: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Maximum absolute row sum.
pub fn norm_inf(m: &Matrix) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn vec_norm_inf(v: &Vector) -> f64 {
    v.amax()
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Partially pivoted LU factorization of a square matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    inner: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    /// Smallest pivot magnitude divided by `‖M‖∞`.
    pub pivot_ratio: f64,
}

impl Lu {
    pub fn new(m: &Matrix) -> Result<Self, LinalgError> {
        if !m.is_square() {
            return Err(LinalgError::Dimension(format!(
                "LU needs a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = norm_inf(m);
        let threshold = PIVOT_THRESHOLD * scale;
        let inner = m.clone().lu();
        let u = inner.u();
        let min_pivot = u.diagonal().iter().map(|d| d.abs()).fold(f64::INFINITY, f64::min);
        if !(min_pivot > threshold) || scale == 0.0 {
            return Err(LinalgError::Singular {
                pivot: min_pivot,
                threshold,
            });
        }
        let pivot_ratio = if m.nrows() == 0 { 1.0 } else { min_pivot / scale };
        Ok(Self { inner, pivot_ratio })
    }

    pub fn dim(&self) -> usize {
        self.inner.l().nrows()
    }

    pub fn solve_vec(&self, rhs: &Vector) -> Result<Vector, LinalgError> {
        self.check_rows(rhs.nrows())?;
        self.inner
            .solve(rhs)
            .ok_or(LinalgError::Singular { pivot: 0.0, threshold: 0.0 })
    }

    pub fn solve_mat(&self, rhs: &Matrix) -> Result<Matrix, LinalgError> {
        self.check_rows(rhs.nrows())?;
        self.inner
            .solve(rhs)
            .ok_or(LinalgError::Singular { pivot: 0.0, threshold: 0.0 })
    }

    pub fn inverse(&self) -> Result<Matrix, LinalgError> {
        self.solve_mat(&Matrix::identity(self.dim(), self.dim()))
    }

    fn check_rows(&self, rows: usize) -> Result<(), LinalgError> {
        if rows != self.dim() {
            return Err(LinalgError::Dimension(format!(
                "right-hand side has {rows} rows, matrix is {0}x{0}",
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Solves `M x = rhs` by partially pivoted LU.
pub fn lu_solve(m: &Matrix, rhs: &Vector) -> Result<Vector, LinalgError> {
    Lu::new(m)?.solve_vec(rhs)
}

/// Solves `M X = rhs` for a matrix right-hand side.
pub fn lu_solve_mat(m: &Matrix, rhs: &Matrix) -> Result<Matrix, LinalgError> {
    Lu::new(m)?.solve_mat(rhs)
}

/// Positive-definiteness test by Cholesky on the symmetrized input.
///
/// Returns the lower factor when every pivot exceeds `1e-12 * trace / n`,
/// `None` otherwise (including for the zero matrix).
pub fn cholesky_pd(m: &Matrix) -> Option<Matrix> {
    if !m.is_square() || m.nrows() == 0 {
        return None;
    }
    let n = m.nrows();
    let a = symmetrize(m);
    let threshold = PIVOT_THRESHOLD * a.trace() / n as f64;
    if !(threshold > 0.0) {
        return None;
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let pivot = a[(j, j)] - (0..j).map(|k| l[(j, k)] * l[(j, k)]).sum::<f64>();
        if !(pivot > threshold) {
            return None;
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let s = a[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>();
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

pub fn is_positive_definite(m: &Matrix) -> bool {
    cholesky_pd(m).is_some()
}
