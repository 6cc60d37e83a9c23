//! Generalized splines as piecewise solutions of `L*L x = 0`.
//!
//! On each interval the spline is a combination of the canonical fundamental
//! system of the companion form of `L*L`, restarted at the interval's left
//! knot. The combination coefficients of all intervals come from one square
//! linear system collecting interpolation, type-I boundary and `C^{2p-2}`
//! continuity conditions.

use std::f64::consts::PI;

use nalgebra::{DMatrixView, DMatrixViewMut};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::TimeExpr;
use crate::linalg::{Lu, Matrix, Vector};
use crate::matrix_function::MatrixFunction;
use crate::ode::{self, DenseTrajectory, Tolerance};
use crate::operator::LinearDiffOperator;
use crate::profile::ToleranceProfile;
use crate::spline::{stencil, validate_knots};

/// Interior residual samples per interval.
pub const RESIDUAL_SAMPLES: usize = 50;

#[derive(Debug, Clone)]
pub struct SplineSpec {
    pub operator: LinearDiffOperator,
    pub knots: Vec<f64>,
    pub values: Vec<Vector>,
    /// `f^{(k)}(t_0)` for `k = 1..p-1`.
    pub left: Vec<Vector>,
    /// `f^{(k)}(t_m)` for `k = 1..p-1`.
    pub right: Vec<Vector>,
}

impl SplineSpec {
    pub fn new(
        operator: LinearDiffOperator,
        knots: Vec<f64>,
        values: Vec<Vector>,
        left: Vec<Vector>,
        right: Vec<Vector>,
    ) -> Result<Self> {
        let spec = Self {
            operator,
            knots,
            values,
            left,
            right,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn order(&self) -> usize {
        self.operator.order()
    }

    pub fn dim(&self) -> usize {
        self.operator.dim()
    }

    pub fn validate(&self) -> Result<()> {
        validate_knots(&self.knots)?;
        let (p, n) = (self.order(), self.dim());
        if p == 0 {
            return Err(Error::InvalidInput("operator: order must be at least 1".into()));
        }
        if self.values.len() != self.knots.len() {
            return Err(Error::InvalidInput(format!(
                "values: {} knots but {} values",
                self.knots.len(),
                self.values.len()
            )));
        }
        for (side, list) in [("left", &self.left), ("right", &self.right)] {
            if list.len() != p - 1 {
                return Err(Error::InvalidInput(format!(
                    "boundary.{side}: order {p} needs {} derivative values, got {}",
                    p - 1,
                    list.len()
                )));
            }
        }
        let all = self.values.iter().chain(&self.left).chain(&self.right);
        if let Some(v) = all.clone().find(|v| v.len() != n) {
            return Err(Error::Dimension(format!(
                "interpolation and boundary values must have dimension {n}, found {}",
                v.len()
            )));
        }
        if all.flat_map(|v| v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("values: non-finite entry".into()));
        }
        Ok(())
    }

    /// `L*L`, of order `2p`.
    pub fn euler_lagrange(&self) -> Result<LinearDiffOperator> {
        self.operator.adjoint().compose(&self.operator)
    }
}

/// Canonical fundamental matrix `Z(t)` of `z' = F(t) z` with `Z(t_i) = I`.
#[derive(Debug, Clone)]
pub struct FundamentalSystem {
    size: usize,
    trajectory: DenseTrajectory,
}

impl FundamentalSystem {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn t_start(&self) -> f64 {
        self.trajectory.t_start()
    }

    pub fn t_end(&self) -> f64 {
        self.trajectory.t_end()
    }

    /// Column `j` holds the `j`-th basis solution and its derivatives.
    pub fn eval(&self, t: f64) -> Matrix {
        self.trajectory.eval_matrix(t, self.size, self.size)
    }
}

/// Integrates the companion form of `ll` on `[t0, t1]` from the identity.
pub fn fundamental_system(ll: &LinearDiffOperator, t0: f64, t1: f64, tol: Tolerance) -> Result<FundamentalSystem> {
    fundamental_system_of(&ll.companion_reduction(), t0, t1, tol)
}

fn fundamental_system_of(f: &MatrixFunction, t0: f64, t1: f64, tol: Tolerance) -> Result<FundamentalSystem> {
    let q = f.rows();
    f.eval(t0)?;
    f.eval(t1)?;
    let mut f_buf = Matrix::zeros(q, q);
    let trajectory = ode::integrate(
        |t, z, dz| {
            f.eval_into(t, &mut f_buf);
            let z = DMatrixView::from_slice(z, q, q);
            let mut dz = DMatrixViewMut::from_slice(dz, q, q);
            dz.gemm(1.0, &f_buf, &z, 0.0);
        },
        Matrix::identity(q, q).as_slice(),
        t0,
        t1,
        tol,
    )?;
    Ok(FundamentalSystem { size: q, trajectory })
}

/// Spline as coefficient vectors over per-interval fundamental systems.
#[derive(Debug, Clone)]
pub struct PiecewiseSpline {
    order: usize,
    dim: usize,
    knots: Vec<f64>,
    intervals: Vec<FundamentalSystem>,
    coefficients: Vec<Vector>,
    pivot_ratio: f64,
}

/// Solves the collocation system for `spec`.
pub fn solve_spline(spec: &SplineSpec, tol: Tolerance) -> Result<PiecewiseSpline> {
    solve_with_permutation(spec, None, tol)
}

/// Same solve with the basis columns of every interval reordered by `perm`
/// (a permutation of `0..2pn`). The resulting spline must not change.
pub fn solve_spline_permuted(spec: &SplineSpec, perm: &[usize], tol: Tolerance) -> Result<PiecewiseSpline> {
    let q = 2 * spec.order() * spec.dim();
    let mut seen = vec![false; q];
    if perm.len() != q || perm.iter().any(|&j| j >= q || std::mem::replace(&mut seen[j], true)) {
        return Err(Error::InvalidInput(format!("basis permutation must be a permutation of 0..{q}")));
    }
    solve_with_permutation(spec, Some(perm), tol)
}

fn solve_with_permutation(spec: &SplineSpec, perm: Option<&[usize]>, tol: Tolerance) -> Result<PiecewiseSpline> {
    spec.validate()?;
    let (p, n) = (spec.order(), spec.dim());
    let q = 2 * p * n;
    let m = spec.knots.len() - 1;
    let companion = spec.euler_lagrange()?.companion_reduction();
    let intervals = (0..m)
        .into_par_iter()
        .map(|i| {
            fundamental_system_of(&companion, spec.knots[i], spec.knots[i + 1], tol).map_err(|e| e.in_segment(i))
        })
        .collect::<Result<Vec<_>>>()?;

    let permute = |z: Matrix| match perm {
        Some(perm) => Matrix::from_fn(q, q, |r, c| z[(r, perm[c])]),
        None => z,
    };
    let starts: Vec<Matrix> = intervals.iter().map(|f| permute(f.eval(f.t_start()))).collect();
    let ends: Vec<Matrix> = intervals.iter().map(|f| permute(f.eval(f.t_end()))).collect();

    let size = q * m;
    let mut system = Matrix::zeros(size, size);
    let mut rhs = Vector::zeros(size);
    let mut row = 0;
    let mut put = |row: &mut usize, block: usize, z: &Matrix, rows: std::ops::Range<usize>, scale: f64| {
        let k = rows.len();
        let src = z.rows(rows.start, k) * scale;
        let mut target = system.view_mut((*row, block * q), (k, q));
        target += &src;
    };

    // left end: s^{(k)}(t_0), k = 0..p-1
    let left_targets = std::iter::once(&spec.values[0]).chain(&spec.left);
    for (k, target) in left_targets.enumerate() {
        put(&mut row, 0, &starts[0], k * n..(k + 1) * n, 1.0);
        rhs.rows_mut(row, n).copy_from(target);
        row += n;
    }
    // interior knots: interpolation from the right, continuity of s..s^{(2p-2)}
    for i in 1..m {
        put(&mut row, i, &starts[i], 0..n, 1.0);
        rhs.rows_mut(row, n).copy_from(&spec.values[i]);
        row += n;
        let c = (2 * p - 1) * n;
        put(&mut row, i - 1, &ends[i - 1], 0..c, 1.0);
        put(&mut row, i, &starts[i], 0..c, -1.0);
        row += c;
    }
    // right end
    let right_targets = std::iter::once(&spec.values[m]).chain(&spec.right);
    for (k, target) in right_targets.enumerate() {
        put(&mut row, m - 1, &ends[m - 1], k * n..(k + 1) * n, 1.0);
        rhs.rows_mut(row, n).copy_from(target);
        row += n;
    }
    debug_assert_eq!(row, size);

    let lu = Lu::new(&system).map_err(|e| match e {
        crate::linalg::LinalgError::Singular { pivot, .. } => Error::SingularCollocation {
            size,
            pivot_ratio: pivot / crate::linalg::norm_inf(&system).max(f64::MIN_POSITIVE),
        },
        other => other.into(),
    })?;
    let solution = lu.solve_vec(&rhs)?;
    let coefficients = (0..m)
        .map(|i| {
            let c = solution.rows(i * q, q).into_owned();
            match perm {
                Some(perm) => {
                    let mut out = Vector::zeros(q);
                    for (j, &pj) in perm.iter().enumerate() {
                        out[pj] = c[j];
                    }
                    out
                }
                None => c,
            }
        })
        .collect();
    Ok(PiecewiseSpline {
        order: p,
        dim: n,
        knots: spec.knots.clone(),
        intervals,
        coefficients,
        pivot_ratio: lu.pivot_ratio,
    })
}

impl PiecewiseSpline {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn interval_count(&self) -> usize {
        self.intervals.len()
    }

    /// Smallest pivot of the collocation LU relative to the matrix norm.
    pub fn pivot_ratio(&self) -> f64 {
        self.pivot_ratio
    }

    pub fn coefficients(&self, interval: usize) -> &Vector {
        &self.coefficients[interval]
    }

    /// Interval owning `t`, knots going to the interval on their left.
    pub fn interval_index(&self, t: f64) -> usize {
        self.knots[1..self.knots.len() - 1].partition_point(|&k| k < t)
    }

    pub fn interval_index_right(&self, t: f64) -> usize {
        self.knots[1..self.knots.len() - 1].partition_point(|&k| k <= t)
    }

    /// `(s, s', ..., s^{(2p-1)})` stacked, using interval `i`'s representation.
    pub fn jet_on(&self, i: usize, t: f64) -> Vector {
        self.intervals[i].eval(t) * &self.coefficients[i]
    }

    /// `s^{(k)}(t)` from interval `i`.
    pub fn derivative_on(&self, i: usize, t: f64, k: usize) -> Vector {
        assert!(k < 2 * self.order, "derivative order {k} exceeds 2p-1");
        let n = self.dim;
        let z = self.intervals[i].eval(t);
        z.rows(k * n, n) * &self.coefficients[i]
    }

    /// `s^{(k)}(t)`; left limit at interior knots.
    pub fn derivative(&self, t: f64, k: usize) -> Vector {
        self.derivative_on(self.interval_index(t), t, k)
    }

    pub fn derivative_right(&self, t: f64, k: usize) -> Vector {
        self.derivative_on(self.interval_index_right(t), t, k)
    }

    pub fn value(&self, t: f64) -> Vector {
        self.derivative(t, 0)
    }

    /// All derivatives `0..2p-1` at `t` (left limit at knots).
    pub fn jet(&self, t: f64) -> Vec<Vector> {
        let i = self.interval_index(t);
        let n = self.dim;
        let z = self.jet_on(i, t);
        (0..2 * self.order).map(|k| z.rows(k * n, n).into_owned()).collect()
    }
}

/// `∫ ‖L s‖² dt` summed over intervals.
pub fn spline_energy(s: &PiecewiseSpline, l: &LinearDiffOperator, tol: Tolerance) -> Result<f64> {
    energy_with(s, l, None, tol)
}

/// `∫ ‖L (s + η)‖² dt` for a symbolic `n x 1` perturbation `η`.
pub fn spline_energy_perturbed(
    s: &PiecewiseSpline,
    l: &LinearDiffOperator,
    eta: &MatrixFunction,
    tol: Tolerance,
) -> Result<f64> {
    energy_with(s, l, Some(&l.apply_symbolic(eta)?), tol)
}

fn energy_with(s: &PiecewiseSpline, l: &LinearDiffOperator, extra: Option<&MatrixFunction>, tol: Tolerance) -> Result<f64> {
    if l.dim() != s.dim || l.order() > 2 * s.order - 1 {
        return Err(Error::Dimension(format!(
            "operator of order {} on R^{} does not fit a spline of order {} on R^{}",
            l.order(),
            l.dim(),
            s.order,
            s.dim
        )));
    }
    let n = s.dim;
    let mut total = 0.0;
    for i in 0..s.interval_count() {
        let mut failure = None;
        let e = ode::quadrature_scalar(
            |t| {
                let z = s.jet_on(i, t);
                let derivs: Vec<Vector> = (0..=l.order()).map(|k| z.rows(k * n, n).into_owned()).collect();
                match l.apply(t, &derivs) {
                    Ok(mut v) => {
                        if let Some(extra) = extra {
                            v += Vector::from_column_slice(extra.values(t).as_slice());
                        }
                        v.norm_squared()
                    }
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::NAN
                    }
                }
            },
            s.knots[i],
            s.knots[i + 1],
            tol,
        );
        if let Some(e) = failure {
            return Err(e.in_segment(i));
        }
        total += e.map_err(|e| Error::from(e).in_segment(i))?;
    }
    Ok(total)
}

/// Random admissible perturbation `η = q(t) Π_k (t - t_k) ((t - t_0)(t - t_m))^{p-1}`
/// with `q` a random quadratic per component. `η` vanishes at every knot and
/// its first `p-1` derivatives vanish at both ends.
pub fn random_admissible_perturbation(knots: &[f64], order: usize, dim: usize, rng: &mut impl Rng) -> MatrixFunction {
    let (a, b) = (knots[0], *knots.last().unwrap());
    let t = TimeExpr::time();
    let linear = |c: f64| t.sub(&TimeExpr::constant(c));
    let vanishing = knots.iter().fold(TimeExpr::one(), |acc, &k| acc.mul(&linear(k)));
    let ends = linear(a).mul(&linear(b)).powi(order as i32 - 1);
    let base = vanishing.mul(&ends);
    // normalize so the perturbation is O(1) on [a, b]
    let mid = 0.5 * (a + b);
    let scale = base.value(a + 0.3 * (b - a)).abs().max(base.value(mid).abs()).max(1e-12);
    let base = base.scale(1.0 / scale);
    MatrixFunction::from_fn(dim, 1, |_, _| {
        let c: [f64; 3] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let centered = linear(mid).scale(1.0 / (b - a));
        let q = TimeExpr::constant(c[0])
            .add(&centered.scale(c[1]))
            .add(&centered.powi(2).scale(c[2]));
        base.mul(&q)
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimalityReport {
    pub energy: f64,
    pub trials: Vec<f64>,
    pub violations: Vec<usize>,
}

impl MinimalityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Compares the spline energy against `trials` seeded admissible perturbations.
pub fn minimality_check(
    s: &PiecewiseSpline,
    l: &LinearDiffOperator,
    trials: usize,
    seed: u64,
    tol: Tolerance,
) -> Result<MinimalityReport> {
    let energy = spline_energy(s, l, tol)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slack = 1e-7 * (1.0 + energy);
    let mut report = MinimalityReport {
        energy,
        trials: Vec::with_capacity(trials),
        violations: Vec::new(),
    };
    for k in 0..trials {
        let eta = random_admissible_perturbation(&s.knots, s.order, s.dim, &mut rng);
        let e = spline_energy_perturbed(s, l, &eta, tol)?;
        if e < energy - slack {
            report.violations.push(k);
        }
        report.trials.push(e);
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct IntervalResiduals {
    pub index: usize,
    pub t_start: f64,
    pub t_end: f64,
    /// `‖s(t_i) - f(t_i)‖ / (1 + ‖f(t_i)‖)` at both ends of the interval.
    pub interpolation: f64,
    /// `‖L*L s‖` relative to `1 + Σ_k ‖C_k s^{(k)}‖∞`.
    pub ode_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SplineReport {
    pub profile: ToleranceProfile,
    pub intervals: Vec<IntervalResiduals>,
    /// Relative boundary-derivative residual at both ends.
    pub boundary: f64,
    /// Largest relative jump of `s^{(k)}`, `k ≤ 2p-2`, over interior knots.
    pub continuity: f64,
    pub energy: f64,
    pub passed: bool,
}

fn relative(diff: &Vector, reference: &Vector) -> f64 {
    diff.amax() / (1.0 + reference.amax())
}

/// Interpolation, boundary, continuity and ODE residuals of a solved spline.
pub fn verify_spline(s: &PiecewiseSpline, spec: &SplineSpec, profile: &ToleranceProfile, tol: Tolerance) -> Result<SplineReport> {
    let (p, n) = (s.order, s.dim);
    let m = s.interval_count();
    let ll = spec.euler_lagrange()?;
    let knots = &s.knots;

    let mut boundary: f64 = 0.0;
    for k in 1..p {
        let l = s.derivative_on(0, knots[0], k);
        let r = s.derivative_on(m - 1, knots[m], k);
        boundary = boundary.max(relative(&(l - &spec.left[k - 1]), &spec.left[k - 1]));
        boundary = boundary.max(relative(&(r - &spec.right[k - 1]), &spec.right[k - 1]));
    }

    let mut continuity: f64 = 0.0;
    for i in 1..m {
        let left = s.jet_on(i - 1, knots[i]);
        let right = s.jet_on(i, knots[i]);
        for k in 0..2 * p - 1 {
            let (a, b) = (left.rows(k * n, n), right.rows(k * n, n));
            continuity = continuity.max((a - b).amax() / (1.0 + a.amax().max(b.amax())));
        }
    }

    let intervals = (0..m)
        .into_par_iter()
        .map(|i| {
            let (t0, t1) = (knots[i], knots[i + 1]);
            let v0 = &spec.values[i];
            let v1 = &spec.values[i + 1];
            let interpolation = relative(&(s.derivative_on(i, t0, 0) - v0), v0)
                .max(relative(&(s.derivative_on(i, t1, 0) - v1), v1));
            let h = 1e-2 * (t1 - t0);
            let mut worst: f64 = 0.0;
            for k in 0..RESIDUAL_SAMPLES {
                let t = t0 + (t1 - t0) * (0.04 + 0.92 * k as f64 / (RESIDUAL_SAMPLES - 1) as f64);
                let z = s.jet_on(i, t);
                let mut derivs: Vec<Vector> = (0..2 * p).map(|k| z.rows(k * n, n).into_owned()).collect();
                derivs.push(stencil(|u| s.derivative_on(i, u, 2 * p - 1), t, h));
                let residual = ll.apply(t, &derivs)?;
                let scale = 1.0
                    + (0..=2 * p)
                        .map(|k| (ll.coefficient(k).values(t) * &derivs[k]).amax())
                        .fold(0.0, f64::max);
                worst = worst.max(residual.amax() / scale);
            }
            Ok(IntervalResiduals {
                index: i,
                t_start: t0,
                t_end: t1,
                interpolation,
                ode_residual: worst,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let energy = spline_energy(s, &spec.operator, tol)?;
    let passed = boundary <= profile.boundary
        && continuity <= profile.continuity
        && intervals
            .iter()
            .all(|r| r.interpolation <= profile.interpolation && r.ode_residual <= profile.ode_residual);
    Ok(SplineReport {
        profile: *profile,
        intervals,
        boundary,
        continuity,
        energy,
        passed,
    })
}

impl std::fmt::Display for SplineReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mark = |v: f64, limit: f64| if v <= limit { ' ' } else { '*' };
        let pr = &self.profile;
        writeln!(f, "profile: {}", pr.name)?;
        writeln!(f, "{:>3} {:>23} {:>14} {:>14}", "int", "interval", "interpolation", "ode residual")?;
        writeln!(f, "{:>3} {:>23} {:>14.1e} {:>14.1e}", "", "threshold", pr.interpolation, pr.ode_residual)?;
        for r in &self.intervals {
            let ok = r.interpolation <= pr.interpolation && r.ode_residual <= pr.ode_residual;
            let interval = format!("[{:.6}, {:.6}]", r.t_start, r.t_end);
            let a = format!("{:.3e}{}", r.interpolation, mark(r.interpolation, pr.interpolation));
            let b = format!("{:.3e}{}", r.ode_residual, mark(r.ode_residual, pr.ode_residual));
            writeln!(f, "{}{:>2} {interval:>23} {a:>14} {b:>14}", if ok { ' ' } else { '!' }, r.index)?;
        }
        writeln!(f, "boundary   {:.3e}{} (threshold {:.1e})", self.boundary, mark(self.boundary, pr.boundary), pr.boundary)?;
        writeln!(
            f,
            "continuity {:.3e}{} (threshold {:.1e})",
            self.continuity,
            mark(self.continuity, pr.continuity),
            pr.continuity
        )?;
        writeln!(f, "energy     {:.10e}", self.energy)?;
        write!(f, "result: {}", if self.passed { "PASS" } else { "FAIL" })
    }
}

/// `sin^{p+1}(π (t - a) / (b - a))`, vanishing with `p` derivatives at `a`, `b`.
pub fn bump_expr(a: f64, b: f64, p: usize) -> TimeExpr {
    let arg = TimeExpr::time().sub(&TimeExpr::constant(a)).scale(PI / (b - a));
    TimeExpr::call(crate::expr::Func::Sin, &arg).powi(p as i32 + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::Convention;

    fn cubic_spec() -> SplineSpec {
        SplineSpec::new(
            LinearDiffOperator::derivative_power(2, 1, Convention::Scalar),
            vec![0.0, 0.25, 1.0],
            [3.0, 1.0, 0.0].map(|v| Vector::from_element(1, v)).to_vec(),
            vec![Vector::from_element(1, -1.0)],
            vec![Vector::from_element(1, 1.0)],
        )
        .unwrap()
    }

    /// Clamped cubic spline through tridiagonal moments, as an oracle.
    fn clamped_cubic(x: &[f64], y: &[f64], d0: f64, d1: f64) -> impl Fn(f64) -> f64 {
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        let mut r = vec![0.0; n];
        diag[0] = 2.0 * h[0];
        sup[0] = h[0];
        r[0] = 6.0 * ((y[1] - y[0]) / h[0] - d0);
        for i in 1..n - 1 {
            sub[i] = h[i - 1];
            diag[i] = 2.0 * (h[i - 1] + h[i]);
            sup[i] = h[i];
            r[i] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]);
        }
        sub[n - 1] = h[n - 2];
        diag[n - 1] = 2.0 * h[n - 2];
        r[n - 1] = 6.0 * (d1 - (y[n - 1] - y[n - 2]) / h[n - 2]);
        // Thomas algorithm
        for i in 1..n {
            let w = sub[i] / diag[i - 1];
            diag[i] -= w * sup[i - 1];
            r[i] -= w * r[i - 1];
        }
        let mut moments = vec![0.0; n];
        moments[n - 1] = r[n - 1] / diag[n - 1];
        for i in (0..n - 1).rev() {
            moments[i] = (r[i] - sup[i] * moments[i + 1]) / diag[i];
        }
        let (x, y) = (x.to_vec(), y.to_vec());
        move |t| {
            let i = x[1..n - 1].partition_point(|&k| k < t);
            let (a, b, hi) = (x[i + 1] - t, t - x[i], h[i]);
            moments[i] * a.powi(3) / (6.0 * hi)
                + moments[i + 1] * b.powi(3) / (6.0 * hi)
                + (y[i] / hi - moments[i] * hi / 6.0) * a
                + (y[i + 1] / hi - moments[i + 1] * hi / 6.0) * b
        }
    }

    #[test]
    fn monomial_fundamental_system() {
        let d4 = LinearDiffOperator::derivative_power(4, 1, Convention::Scalar);
        let f = fundamental_system(&d4, 0.0, 1.0, Tolerance::default()).unwrap();
        let t: f64 = 0.7;
        let z = f.eval(t);
        let expected = [1.0, t, t * t / 2.0, t.powi(3) / 6.0];
        for (j, e) in expected.iter().enumerate() {
            assert!((z[(0, j)] - e).abs() < 1e-13);
        }
        assert!((z[(1, 3)] - t * t / 2.0).abs() < 1e-13);
    }

    #[test]
    fn trigonometric_wronskian_is_nonsingular() {
        let l = LinearDiffOperator::from_scalar(vec![TimeExpr::constant(144.0), TimeExpr::zero()]);
        let ll = l.adjoint().compose(&l).unwrap();
        let f = fundamental_system(&ll, 0.0, 1.0, Tolerance::default()).unwrap();
        assert!(Lu::new(&f.eval(0.6)).is_ok());
    }

    #[test]
    fn cubic_matches_tridiagonal_oracle() {
        let spec = cubic_spec();
        let s = solve_spline(&spec, Tolerance::default()).unwrap();
        let oracle = clamped_cubic(&[0.0, 0.25, 1.0], &[3.0, 1.0, 0.0], -1.0, 1.0);
        for k in 0..20 {
            let t = k as f64 / 19.0;
            assert!((s.value(t)[0] - oracle(t)).abs() < 1e-8, "t = {t}");
        }
        let report = verify_spline(&s, &spec, &ToleranceProfile::STRICT, Tolerance::default()).unwrap();
        assert!(report.passed, "{report}");
        assert!(report.continuity < 1e-8);
    }

    #[test]
    fn permuted_basis_gives_the_same_spline() {
        let spec = cubic_spec();
        let s = solve_spline(&spec, Tolerance::default()).unwrap();
        let r = solve_spline_permuted(&spec, &[2, 0, 3, 1], Tolerance::default()).unwrap();
        for k in 0..=40 {
            let t = k as f64 / 40.0;
            for d in 0..3 {
                assert!((s.derivative(t, d) - r.derivative(t, d)).amax() < 1e-8);
            }
        }
        assert!(solve_spline_permuted(&spec, &[0, 0, 1, 2], Tolerance::default()).is_err());
    }

    #[test]
    fn single_cubic_energy() {
        // s(t) = t^3 on [0, 1] is its own clamped spline
        let spec = SplineSpec::new(
            LinearDiffOperator::derivative_power(2, 1, Convention::Scalar),
            vec![0.0, 1.0],
            vec![Vector::from_element(1, 0.0), Vector::from_element(1, 1.0)],
            vec![Vector::from_element(1, 0.0)],
            vec![Vector::from_element(1, 3.0)],
        )
        .unwrap();
        let s = solve_spline(&spec, Tolerance::default()).unwrap();
        assert!((s.value(0.5)[0] - 0.125).abs() < 1e-12);
        let e = spline_energy(&s, &spec.operator, Tolerance::default()).unwrap();
        assert!((e - 12.0).abs() < 1e-9);
    }

    #[test]
    fn cubic_is_minimal_among_perturbations() {
        let spec = cubic_spec();
        let s = solve_spline(&spec, Tolerance::default()).unwrap();
        let report = minimality_check(&s, &spec.operator, 20, 7, Tolerance::default()).unwrap();
        assert!(report.passed());
        assert!(report.trials.iter().all(|&e| e > report.energy));
    }

    #[test]
    fn admissible_perturbation_vanishes_where_required() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let knots = [0.0, 0.4, 1.0, 1.5];
        let eta = random_admissible_perturbation(&knots, 3, 2, &mut rng);
        for &k in &knots {
            assert!(eta.values(k).amax() < 1e-12);
        }
        for d in 1..3 {
            assert!(eta.derivative(d).values(0.0).amax() < 1e-12);
            assert!(eta.derivative(d).values(1.5).amax() < 1e-12);
        }
        assert!(eta.values(0.7).amax() > 1e-3);
    }

    #[test]
    fn bad_specs_are_rejected() {
        let mut spec = cubic_spec();
        spec.left.clear();
        assert!(spec.validate().unwrap_err().to_string().contains("boundary.left"));
        let mut spec = cubic_spec();
        spec.knots = vec![0.0, 0.0, 1.0];
        assert!(matches!(solve_spline(&spec, Tolerance::default()), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn bump_vanishes_to_order_p() {
        let b = bump_expr(0.5, 2.0, 2);
        for k in 0..=2 {
            assert!(b.derivative(k).value(0.5).abs() < 1e-12);
            assert!(b.derivative(k).value(2.0).abs() < 1e-12);
        }
    }

    mod props {
        use super::*;
        use crate::operator::Convention;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn scalar_cubic_invariants(
                gaps in proptest::collection::vec(0.2f64..1.0, 1..5),
                values in proptest::collection::vec(-2.0f64..2.0, 5),
                d in proptest::collection::vec(-2.0f64..2.0, 2),
            ) {
                let mut knots = vec![0.0];
                for g in &gaps {
                    knots.push(knots.last().unwrap() + g);
                }
                let spec = SplineSpec::new(
                    LinearDiffOperator::derivative_power(2, 1, Convention::Scalar),
                    knots.clone(),
                    values[..knots.len()].iter().map(|&v| Vector::from_element(1, v)).collect(),
                    vec![Vector::from_element(1, d[0])],
                    vec![Vector::from_element(1, d[1])],
                )
                .unwrap();
                let s = solve_spline(&spec, Tolerance::default()).unwrap();
                let report = verify_spline(&s, &spec, &ToleranceProfile::STRICT, Tolerance::default()).unwrap();
                prop_assert!(report.passed, "{}", report);
            }
        }
    }
}
