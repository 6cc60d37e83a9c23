//! Matrices whose entries are expressions in `t`.

use nalgebra::DMatrix;

use crate::expr::{parse, ExprError, TimeExpr};

/// A `rows × cols` grid of [`TimeExpr`] entries, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFunction {
    rows: usize,
    cols: usize,
    entries: Vec<TimeExpr>,
}

impl MatrixFunction {
    pub fn new(rows: usize, cols: usize, entries: Vec<TimeExpr>) -> Self {
        assert_eq!(entries.len(), rows * cols, "entry count must be rows * cols");
        Self {
            rows,
            cols,
            entries,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> TimeExpr) -> Self {
        let entries = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .map(|(i, j)| f(i, j))
            .collect();
        Self::new(rows, cols, entries)
    }

    /// Parses a row-major grid of expression strings. Rows must have equal
    /// length.
    pub fn parse<S: AsRef<str>>(rows: &[Vec<S>]) -> Result<Self, ExprError> {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged matrix rows");
        let entries = rows
            .iter()
            .flatten()
            .map(|s| parse(s.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(rows.len(), cols, entries))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |_, _| TimeExpr::zero())
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, factor: f64) -> Self {
        Self::from_fn(n, n, |i, j| {
            TimeExpr::constant(if i == j { factor } else { 0.0 })
        })
    }

    pub fn constant(m: &DMatrix<f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| TimeExpr::constant(m[(i, j)]))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entry(&self, i: usize, j: usize) -> &TimeExpr {
        &self.entries[i * self.cols + j]
    }

    pub fn entries(&self) -> &[TimeExpr] {
        &self.entries
    }

    pub fn is_constant(&self) -> bool {
        self.entries.iter().all(TimeExpr::is_constant)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(TimeExpr::is_zero)
    }

    /// Checked evaluation.
    pub fn eval(&self, t: f64) -> Result<DMatrix<f64>, ExprError> {
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] = self.entry(i, j).eval(t)?;
            }
        }
        Ok(out)
    }

    /// Unchecked evaluation into `out`; domain errors become NaN entries.
    pub fn eval_into(&self, t: f64, out: &mut DMatrix<f64>) {
        debug_assert_eq!(out.shape(), (self.rows, self.cols));
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] = self.entry(i, j).value(t);
            }
        }
    }

    pub fn values(&self, t: f64) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows, self.cols);
        self.eval_into(t, &mut out);
        out
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.entry(j, i).clone())
    }

    pub fn differentiate(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| self.entry(i, j).differentiate())
    }

    pub fn derivative(&self, k: usize) -> Self {
        (0..k).fold(self.clone(), |m, _| m.differentiate())
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self::from_fn(self.rows, self.cols, |i, j| {
            self.entry(i, j).add(other.entry(i, j))
        })
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self::from_fn(self.rows, self.cols, |i, j| {
            self.entry(i, j).sub(other.entry(i, j))
        })
    }

    pub fn neg(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| self.entry(i, j).neg())
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| self.entry(i, j).scale(factor))
    }

    /// Symbolic matrix product.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimensions must agree");
        Self::from_fn(self.rows, other.cols, |i, j| {
            (0..self.cols).fold(TimeExpr::zero(), |acc, k| {
                acc.add(&self.entry(i, k).mul(other.entry(k, j)))
            })
        })
    }

    /// `M(t + delta)`.
    pub fn shifted(&self, delta: f64) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| self.entry(i, j).shifted(delta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotational() -> MatrixFunction {
        MatrixFunction::parse(&[vec!["0", "t^2"], vec!["-t^2", "0"]]).unwrap()
    }

    #[test]
    fn evaluates_entries() {
        let a = rotational().eval(2.0).unwrap();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[0.0, 4.0, -4.0, 0.0]));
    }

    #[test]
    fn symbolic_product_matches_numeric_product() {
        let a = rotational();
        let b = MatrixFunction::parse(&[vec!["1", "t"], vec!["sin(t)", "2"]]).unwrap();
        let t = 0.7;
        let symbolic = a.mul(&b).eval(t).unwrap();
        let numeric = a.eval(t).unwrap() * b.eval(t).unwrap();
        assert!((symbolic - numeric).amax() < 1e-14);
    }

    #[test]
    fn transpose_of_skew_is_negation() {
        let a = rotational();
        let sum = a.add(&a.transpose()).eval(1.3).unwrap();
        assert_eq!(sum.amax(), 0.0);
        let d = a.differentiate().eval(1.5).unwrap();
        assert_eq!(d, DMatrix::from_row_slice(2, 2, &[0.0, 3.0, -3.0, 0.0]));
    }
}
