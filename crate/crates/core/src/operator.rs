//! Linear differential operators with time-dependent matrix coefficients.
//!
//! Every operator is kept in the normal form
//!
//! ```text
//! L = σ D^p + C_{p-1}(t) D^{p-1} + ... + C_0(t),   σ = ±1
//! ```
//!
//! The two input conventions only differ in how `C_k` is read off:
//! `D^p + Σ a_k D^k` gives `C_k = a_k`, `D^p - Σ A_k D^k` gives `C_k = -A_k`.
//! Adjoints and compositions expand `D^k (M(t) ·)` with the Leibniz rule and
//! symbolic derivatives of the coefficient entries.

use crate::error::{Error, Result};
use crate::expr::TimeExpr;
use crate::linalg::{Matrix, Vector};
use crate::matrix_function::MatrixFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convention {
    /// `D^p + a_{p-1} D^{p-1} + ... + a_0`
    Scalar,
    /// `D^p - A_{p-1} D^{p-1} - ... - A_0`
    Matrix,
}

#[derive(Debug, Clone)]
pub struct LinearDiffOperator {
    order: usize,
    dim: usize,
    convention: Convention,
    leading_sign: f64,
    coefficients: Vec<MatrixFunction>,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn sign(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

impl LinearDiffOperator {
    /// Operator from normal-form coefficients `C_0..C_{p-1}` and leading sign.
    pub fn new(
        leading_sign: f64,
        coefficients: Vec<MatrixFunction>,
        dim: usize,
        convention: Convention,
    ) -> Result<Self> {
        if leading_sign != 1.0 && leading_sign != -1.0 {
            return Err(Error::InvalidInput(format!(
                "leading sign must be +1 or -1, got {leading_sign}"
            )));
        }
        for (k, c) in coefficients.iter().enumerate() {
            if (c.rows(), c.cols()) != (dim, dim) {
                return Err(Error::Dimension(format!(
                    "coefficient of D^{k} is {}x{}, expected {dim}x{dim}",
                    c.rows(),
                    c.cols()
                )));
            }
        }
        Ok(Self {
            order: coefficients.len(),
            dim,
            convention,
            leading_sign,
            coefficients,
        })
    }

    /// `D^p + a_{p-1} D^{p-1} + ... + a_0` acting on scalar functions.
    pub fn from_scalar(coefficients: Vec<TimeExpr>) -> Self {
        let coefficients = coefficients
            .into_iter()
            .map(|a| MatrixFunction::new(1, 1, vec![a]))
            .collect();
        Self::new(1.0, coefficients, 1, Convention::Scalar).expect("1x1 coefficients")
    }

    /// `D^p - A_{p-1} D^{p-1} - ... - A_0` on `R^n`.
    pub fn from_matrix(coefficients: Vec<MatrixFunction>) -> Result<Self> {
        let dim = coefficients.first().map(MatrixFunction::rows).ok_or_else(|| {
            Error::InvalidInput("matrix operator needs at least one coefficient".into())
        })?;
        let coefficients = coefficients.iter().map(MatrixFunction::neg).collect();
        Self::new(1.0, coefficients, dim, Convention::Matrix)
    }

    /// `D^p` on `R^n`.
    pub fn derivative_power(order: usize, dim: usize, convention: Convention) -> Self {
        Self {
            order,
            dim,
            convention,
            leading_sign: 1.0,
            coefficients: vec![MatrixFunction::zeros(dim, dim); order],
        }
    }

    /// `D - A(t)`.
    pub fn first_order(a: &MatrixFunction) -> Result<Self> {
        Self::from_matrix(vec![a.clone()])
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn leading_sign(&self) -> f64 {
        self.leading_sign
    }

    /// Normal-form coefficient `C_k` of `D^k`; `σI` for `k = p`.
    pub fn coefficient(&self, k: usize) -> MatrixFunction {
        match k.cmp(&self.order) {
            std::cmp::Ordering::Less => self.coefficients[k].clone(),
            std::cmp::Ordering::Equal => MatrixFunction::scaled_identity(self.dim, self.leading_sign),
            std::cmp::Ordering::Greater => MatrixFunction::zeros(self.dim, self.dim),
        }
    }

    pub fn coefficients(&self) -> &[MatrixFunction] {
        &self.coefficients
    }

    /// Coefficient as written in the operator's own convention: `a_k` for
    /// scalar form, `A_k` for matrix form (with `σ` factored out).
    pub fn convention_coefficient(&self, k: usize) -> MatrixFunction {
        let c = self.coefficients[k].scale(self.leading_sign);
        match self.convention {
            Convention::Scalar => c,
            Convention::Matrix => c.neg(),
        }
    }

    fn full_coefficients(&self) -> Vec<MatrixFunction> {
        (0..=self.order).map(|k| self.coefficient(k)).collect()
    }

    /// Formal adjoint `L* g = Σ_k (-1)^k D^k (C_kᵀ g)` in normal form.
    pub fn adjoint(&self) -> Self {
        let p = self.order;
        let transposed: Vec<MatrixFunction> = self.coefficients.iter().map(MatrixFunction::transpose).collect();
        let coefficients = (0..p)
            .map(|i| {
                (i..p).fold(MatrixFunction::zeros(self.dim, self.dim), |acc, k| {
                    let term = transposed[k].derivative(k - i).scale(sign(k) * binomial(k, i));
                    acc.add(&term)
                })
            })
            .collect();
        Self {
            order: p,
            dim: self.dim,
            convention: self.convention,
            leading_sign: self.leading_sign * sign(p),
            coefficients,
        }
    }

    /// `self ∘ inner`, i.e. `f ↦ self(inner(f))`.
    pub fn compose(&self, inner: &Self) -> Result<Self> {
        if self.dim != inner.dim {
            return Err(Error::Dimension(format!(
                "cannot compose operators on R^{} and R^{}",
                self.dim, inner.dim
            )));
        }
        let n = self.dim;
        let order = self.order + inner.order;
        let outer = self.full_coefficients();
        let inner_full = inner.full_coefficients();
        let mut result = vec![MatrixFunction::zeros(n, n); order + 1];
        for (k, m) in outer.iter().enumerate() {
            if m.is_zero() {
                continue;
            }
            for (j, nj) in inner_full.iter().enumerate() {
                for i in 0..=k {
                    let d = nj.derivative(i);
                    if d.is_zero() {
                        continue;
                    }
                    let term = m.mul(&d).scale(binomial(k, i));
                    let r = k - i + j;
                    result[r] = result[r].add(&term);
                }
            }
        }
        result.truncate(order);
        Ok(Self {
            order,
            dim: n,
            convention: inner.convention,
            leading_sign: self.leading_sign * inner.leading_sign,
            coefficients: result,
        })
    }

    /// `Σ_k C_k(t) f^{(k)}(t)` from the derivatives `f, f', ..., f^{(p)}`.
    pub fn apply(&self, t: f64, derivatives: &[Vector]) -> Result<Vector> {
        let needed = self.order + 1;
        if derivatives.len() < needed {
            return Err(Error::MissingDerivative {
                order: self.order,
                needed,
                given: derivatives.len(),
            });
        }
        let mut out = &derivatives[self.order] * self.leading_sign;
        for (k, c) in self.coefficients.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let ck: Matrix = c.eval(t)?;
            out += ck * &derivatives[k];
        }
        Ok(out)
    }

    /// Symbolic `L f` for an `n x 1` column of expressions.
    pub fn apply_symbolic(&self, f: &MatrixFunction) -> Result<MatrixFunction> {
        if (f.rows(), f.cols()) != (self.dim, 1) {
            return Err(Error::Dimension(format!(
                "operator on R^{} applied to a {}x{} function",
                self.dim,
                f.rows(),
                f.cols()
            )));
        }
        Ok(self
            .full_coefficients()
            .iter()
            .enumerate()
            .fold(MatrixFunction::zeros(self.dim, 1), |acc, (k, c)| {
                acc.add(&c.mul(&f.derivative(k)))
            }))
    }

    /// Block companion matrix `F(t)` with `z' = F z` equivalent to `L x = 0`,
    /// where `z = (x, x', ..., x^{(p-1)})`.
    pub fn companion_reduction(&self) -> MatrixFunction {
        let (n, p) = (self.dim, self.order);
        let mut entries = vec![TimeExpr::zero(); (n * p) * (n * p)];
        let width = n * p;
        for block in 0..p.saturating_sub(1) {
            for i in 0..n {
                entries[(block * n + i) * width + (block + 1) * n + i] = TimeExpr::one();
            }
        }
        let last = (p - 1) * n;
        for (k, c) in self.coefficients.iter().enumerate() {
            let c = c.scale(-self.leading_sign);
            for i in 0..n {
                for j in 0..n {
                    entries[(last + i) * width + k * n + j] = c.entry(i, j).clone();
                }
            }
        }
        MatrixFunction::new(width, width, entries)
    }
}
