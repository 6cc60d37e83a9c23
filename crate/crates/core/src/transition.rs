//! State transition matrices of `x' = A(t)x` and the Gramians built on them.
//!
//! `Φ(t, t_b)` is integrated forward from the identity. `Φ(t_b, t)` comes
//! from its own integration of `d/dt Φ(t_b, t) = -Φ(t_b, t) A(t)` rather than
//! from inverting `Φ(t, t_b)` pointwise.

use nalgebra::{DMatrixView, DMatrixViewMut};

use crate::error::{Error, Result};
use crate::linalg::{self, Lu, Matrix};
use crate::matrix_function::MatrixFunction;
use crate::ode::{self, DenseTrajectory, Tolerance};

#[derive(Debug, Clone)]
pub struct TransitionOperator {
    a: MatrixFunction,
    t_base: f64,
    t_end: f64,
    forward: DenseTrajectory,
    adjoint: DenseTrajectory,
}

/// Builds `Φ(·, t_base)` and `Φ(t_base, ·)` on `[t_base, t_end]`.
pub fn build_transition(
    a: &MatrixFunction,
    t_base: f64,
    t_end: f64,
    tol: Tolerance,
) -> Result<TransitionOperator> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "A(t) must be square, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !(t_base < t_end) {
        return Err(Error::InvalidInput(format!(
            "transition interval must be increasing, got [{t_base}, {t_end}]"
        )));
    }
    // surface domain errors with a message instead of a bare integrator failure
    a.eval(t_base)?;
    a.eval(t_end)?;

    let n = a.rows();
    let identity = Matrix::identity(n, n);
    let mut a_buf = Matrix::zeros(n, n);
    let forward = ode::integrate(
        |t, y, dy| {
            a.eval_into(t, &mut a_buf);
            let y = DMatrixView::from_slice(y, n, n);
            let mut dy = DMatrixViewMut::from_slice(dy, n, n);
            dy.gemm(1.0, &a_buf, &y, 0.0);
        },
        identity.as_slice(),
        t_base,
        t_end,
        tol,
    )?;
    let adjoint = ode::integrate(
        |t, y, dy| {
            a.eval_into(t, &mut a_buf);
            let y = DMatrixView::from_slice(y, n, n);
            let mut dy = DMatrixViewMut::from_slice(dy, n, n);
            dy.gemm(-1.0, &y, &a_buf, 0.0);
        },
        identity.as_slice(),
        t_base,
        t_end,
        tol,
    )?;
    Ok(TransitionOperator {
        a: a.clone(),
        t_base,
        t_end,
        forward,
        adjoint,
    })
}

impl TransitionOperator {
    pub fn dim(&self) -> usize {
        self.a.rows()
    }

    pub fn a(&self) -> &MatrixFunction {
        &self.a
    }

    pub fn t_base(&self) -> f64 {
        self.t_base
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Accepted steps of the forward integration.
    pub fn mesh(&self) -> &[f64] {
        self.forward.mesh()
    }

    /// `Φ(t, t_base)`.
    pub fn from_base(&self, t: f64) -> Matrix {
        let n = self.dim();
        self.forward.eval_matrix(t, n, n)
    }

    /// `Φ(t_base, t)`.
    pub fn to_base(&self, t: f64) -> Matrix {
        let n = self.dim();
        self.adjoint.eval_matrix(t, n, n)
    }

    /// `d/dt Φ(t_base, t)` from the dense interpolant.
    pub fn to_base_derivative(&self, t: f64) -> Matrix {
        let n = self.dim();
        self.adjoint.derivative_matrix(t, n, n)
    }

    /// `Φ(t, s) = Φ(t, t_base) Φ(t_base, s)`.
    pub fn phi(&self, t: f64, s: f64) -> Matrix {
        self.from_base(t) * self.to_base(s)
    }
}

/// `S = ∫ Φ(t_base, s) Φ(t_base, s)ᵀ ds` over `[t0, t1]`, symmetrized and
/// certified positive definite.
pub fn gramian_s(op: &TransitionOperator, t0: f64, t1: f64, tol: Tolerance) -> Result<Matrix> {
    let n = op.dim();
    let s = ode::quadrature(
        |s| {
            let x = op.to_base(s);
            &x * x.transpose()
        },
        n,
        n,
        t0,
        t1,
        tol,
    )?;
    certify_pd(linalg::symmetrize(&s), t0, t1)
}

/// Same Gramian with `Φ(t_base, s)` obtained by LU-inverting `Φ(s, t_base)`
/// at every quadrature node. Used to cross-check the adjoint integration.
pub fn gramian_s_by_inversion(
    op: &TransitionOperator,
    t0: f64,
    t1: f64,
    tol: Tolerance,
) -> Result<Matrix> {
    let n = op.dim();
    let mut failure = None;
    let s = ode::quadrature(
        |s| match Lu::new(&op.from_base(s)).and_then(|lu| lu.inverse()) {
            Ok(x) => &x * x.transpose(),
            Err(e) => {
                failure.get_or_insert(e);
                Matrix::from_element(n, n, f64::NAN)
            }
        },
        n,
        n,
        t0,
        t1,
        tol,
    );
    if let Some(e) = failure {
        return Err(e.into());
    }
    certify_pd(linalg::symmetrize(&s?), t0, t1)
}

fn certify_pd(s: Matrix, t0: f64, t1: f64) -> Result<Matrix> {
    if linalg::is_positive_definite(&s) {
        Ok(s)
    } else {
        Err(Error::NotPositiveDefinite { t0, t1 })
    }
}

/// Controllability Gramian on a window together with the Kalman verdict.
#[derive(Debug, Clone)]
pub struct Controllability {
    pub t0: f64,
    pub t1: f64,
    pub gramian: Matrix,
    pub controllable: bool,
}

/// `W = ∫ Φ(τ0, s) B(s) B(s)ᵀ Φ(τ0, s)ᵀ ds` over `[τ0, τ1]`.
pub fn controllability_gramian(
    a: &MatrixFunction,
    b: &MatrixFunction,
    t0: f64,
    t1: f64,
    tol: Tolerance,
) -> Result<Controllability> {
    if b.rows() != a.rows() {
        return Err(Error::Dimension(format!(
            "B(t) has {} rows, A(t) is {}x{}",
            b.rows(),
            a.rows(),
            a.cols()
        )));
    }
    let op = build_transition(a, t0, t1, tol)?;
    let mut b_buf = Matrix::zeros(b.rows(), b.cols());
    let w = ode::quadrature(
        |s| {
            b.eval_into(s, &mut b_buf);
            let xb = op.to_base(s) * &b_buf;
            &xb * xb.transpose()
        },
        a.rows(),
        a.rows(),
        t0,
        t1,
        tol,
    )?;
    let gramian = linalg::symmetrize(&w);
    let controllable = linalg::is_positive_definite(&gramian);
    Ok(Controllability {
        t0,
        t1,
        gramian,
        controllable,
    })
}
