//! Adaptive Dormand–Prince 5(4) integration with dense output.
//!
//! Every accepted step keeps the coefficients of the method's fourth-order
//! continuous extension, so a finished [`DenseTrajectory`] can be evaluated
//! (and differentiated) anywhere on the integration interval. Matrix-valued
//! problems are flattened column-major, which is nalgebra's storage order.

use thiserror::Error;

use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
        }
    }
}

impl Tolerance {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h:e}); problem is stiff or blows up")]
    StepUnderflow { t: f64, h: f64 },
    #[error("non-finite right-hand side at t = {t}")]
    NonFinite { t: f64 },
    #[error("gave up after {steps} steps at t = {t}")]
    TooManySteps { t: f64, steps: usize },
}

const MAX_STEPS: usize = 2_000_000;
const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Solution of an initial value problem, evaluable anywhere between
/// `t_start` and `t_end` (which may be decreasing).
#[derive(Debug, Clone)]
pub struct DenseTrajectory {
    dim: usize,
    direction: f64,
    mesh: Vec<f64>,
    // states[i * dim..(i + 1) * dim] is the state at mesh[i]
    states: Vec<f64>,
    // five coefficient vectors per step
    cont: Vec<f64>,
}

impl DenseTrajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t_start(&self) -> f64 {
        self.mesh[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.mesh.last().expect("mesh is never empty")
    }

    /// Accepted step times, including both ends, in integration order.
    pub fn mesh(&self) -> &[f64] {
        &self.mesh
    }

    pub fn steps(&self) -> usize {
        self.mesh.len() - 1
    }

    pub fn mesh_state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn final_state(&self) -> &[f64] {
        self.mesh_state(self.mesh.len() - 1)
    }

    // Index of the step containing t; values outside the interval fall into
    // the first or last step and are extrapolated by its polynomial.
    fn locate(&self, t: f64) -> usize {
        let steps = self.steps();
        let key = (t - self.mesh[0]) * self.direction;
        let idx = self
            .mesh
            .partition_point(|&m| (m - self.mesh[0]) * self.direction <= key);
        idx.saturating_sub(1).min(steps.saturating_sub(1))
    }

    fn mesh_hit(&self, t: f64) -> Option<usize> {
        let i = self.locate(t);
        if self.mesh[i] == t {
            Some(i)
        } else if i + 1 < self.mesh.len() && self.mesh[i + 1] == t {
            Some(i + 1)
        } else {
            None
        }
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        if self.steps() == 0 {
            out.copy_from_slice(self.mesh_state(0));
            return;
        }
        if let Some(i) = self.mesh_hit(t) {
            out.copy_from_slice(self.mesh_state(i));
            return;
        }
        let j = self.locate(t);
        let h = self.mesh[j + 1] - self.mesh[j];
        let s = (t - self.mesh[j]) / h;
        let s1 = 1.0 - s;
        let r = &self.cont[j * 5 * self.dim..(j + 1) * 5 * self.dim];
        let d = self.dim;
        for (i, o) in out.iter_mut().enumerate() {
            let (r1, r2, r3, r4, r5) = (r[i], r[d + i], r[2 * d + i], r[3 * d + i], r[4 * d + i]);
            *o = r1 + s * (r2 + s1 * (r3 + s * (r4 + s1 * r5)));
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }

    /// Time derivative of the dense interpolant.
    pub fn derivative_into(&self, t: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        if self.steps() == 0 {
            out.fill(0.0);
            return;
        }
        let j = self.locate(t);
        let h = self.mesh[j + 1] - self.mesh[j];
        let s = (t - self.mesh[j]) / h;
        let s1 = 1.0 - s;
        let r = &self.cont[j * 5 * self.dim..(j + 1) * 5 * self.dim];
        let d = self.dim;
        for (i, o) in out.iter_mut().enumerate() {
            let (r2, r3, r4, r5) = (r[d + i], r[2 * d + i], r[3 * d + i], r[4 * d + i]);
            let inner4 = r4 + s1 * r5;
            let inner3 = r3 + s * inner4;
            let inner2 = r2 + s1 * inner3;
            let d4 = -r5;
            let d3 = inner4 + s * d4;
            let d2 = -inner3 + s1 * d3;
            let d1 = inner2 + s * d2;
            *o = d1 / h;
        }
    }

    pub fn derivative(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.derivative_into(t, &mut out);
        out
    }

    /// Interprets the state as a column-major `rows × cols` matrix.
    pub fn eval_matrix(&self, t: f64, rows: usize, cols: usize) -> Matrix {
        Matrix::from_vec(rows, cols, self.eval(t))
    }

    pub fn derivative_matrix(&self, t: f64, rows: usize, cols: usize) -> Matrix {
        Matrix::from_vec(rows, cols, self.derivative(t))
    }
}

fn scaled_rms(v: &[f64], y: &[f64], tol: Tolerance) -> f64 {
    let n = v.len().max(1) as f64;
    (v.iter()
        .zip(y)
        .map(|(vi, yi)| {
            let sc = tol.atol + tol.rtol * yi.abs();
            (vi / sc).powi(2)
        })
        .sum::<f64>()
        / n)
        .sqrt()
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Integrates `y' = field(t, y)` from `t0` to `t1` (either direction).
///
/// `field` writes the derivative into its third argument. A non-finite
/// derivative aborts the integration.
pub fn integrate<F>(
    mut field: F,
    y0: &[f64],
    t0: f64,
    t1: f64,
    tol: Tolerance,
) -> Result<DenseTrajectory, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let dim = y0.len();
    let mut traj = DenseTrajectory {
        dim,
        direction: if t1 >= t0 { 1.0 } else { -1.0 },
        mesh: vec![t0],
        states: y0.to_vec(),
        cont: Vec::new(),
    };
    let span = (t1 - t0).abs();
    if span == 0.0 {
        return Ok(traj);
    }
    let dir = traj.direction;
    let h_min = 1e-14 * span;

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut k5 = vec![0.0; dim];
    let mut k6 = vec![0.0; dim];
    let mut k7 = vec![0.0; dim];
    let mut stage = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];
    let mut err = vec![0.0; dim];
    let mut scale_ref = vec![0.0; dim];

    field(t, &y, &mut k1);
    if !all_finite(&k1) {
        return Err(OdeError::NonFinite { t });
    }

    let mut h = initial_step(&mut field, t, &y, &k1, dir, span, tol, &mut stage, &mut k2);
    if !all_finite(&k2) {
        return Err(OdeError::NonFinite { t });
    }
    let mut last_rejected = false;
    let mut steps = 0usize;

    loop {
        if steps >= MAX_STEPS {
            return Err(OdeError::TooManySteps { t, steps });
        }
        let remaining = (t1 - t) * dir;
        let mut last = false;
        if h * dir >= remaining {
            h = t1 - t;
            last = true;
        } else if (remaining - h * dir) < 1e-10 * h.abs() {
            // avoid a sliver final step
            h = t1 - t;
            last = true;
        }
        if h.abs() < h_min {
            return Err(OdeError::StepUnderflow { t, h });
        }

        for i in 0..dim {
            stage[i] = y[i] + h * A21 * k1[i];
        }
        field(t + C2 * h, &stage, &mut k2);
        for i in 0..dim {
            stage[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        field(t + C3 * h, &stage, &mut k3);
        for i in 0..dim {
            stage[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        field(t + C4 * h, &stage, &mut k4);
        for i in 0..dim {
            stage[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        field(t + C5 * h, &stage, &mut k5);
        for i in 0..dim {
            stage[i] = y[i]
                + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_next = if last { t1 } else { t + h };
        field(t_next, &stage, &mut k6);
        for i in 0..dim {
            y_new[i] = y[i]
                + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        field(t_next, &y_new, &mut k7);
        steps += 1;

        let finite = [&k2, &k3, &k4, &k5, &k6, &k7].iter().all(|k| all_finite(k));
        if !finite {
            // a blow-up inside the step: shrink and retry, the field itself is
            // checked again at the accepted points
            h *= MIN_FACTOR;
            last_rejected = true;
            if h.abs() < h_min {
                return Err(OdeError::NonFinite { t });
            }
            continue;
        }

        for i in 0..dim {
            err[i] = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            scale_ref[i] = y[i].abs().max(y_new[i].abs());
        }
        let err_norm = scaled_rms(&err, &scale_ref, tol);

        if err_norm <= 1.0 {
            // accepted: store continuous extension
            traj.cont.extend_from_slice(&y);
            for i in 0..dim {
                traj.cont.push(y_new[i] - y[i]);
            }
            for i in 0..dim {
                traj.cont.push(h * k1[i] - (y_new[i] - y[i]));
            }
            for i in 0..dim {
                let ydiff = y_new[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                traj.cont.push(ydiff - h * k7[i] - bspl);
            }
            for i in 0..dim {
                traj.cont.push(
                    h * (D1 * k1[i]
                        + D3 * k3[i]
                        + D4 * k4[i]
                        + D5 * k5[i]
                        + D6 * k6[i]
                        + D7 * k7[i]),
                );
            }
            t = t_next;
            y.copy_from_slice(&y_new);
            k1.copy_from_slice(&k7);
            traj.mesh.push(t);
            traj.states.extend_from_slice(&y);
            if last {
                return Ok(traj);
            }
            let mut factor = (SAFETY * err_norm.max(1e-10).powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR);
            if last_rejected {
                factor = factor.min(1.0);
            }
            last_rejected = false;
            h *= factor;
        } else {
            let factor = (SAFETY * err_norm.powf(-0.2)).clamp(MIN_FACTOR, 1.0);
            h *= factor;
            last_rejected = true;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn initial_step<F>(
    field: &mut F,
    t: f64,
    y: &[f64],
    f0: &[f64],
    dir: f64,
    span: f64,
    tol: Tolerance,
    y1: &mut [f64],
    f1: &mut [f64],
) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let d0 = scaled_rms(y, y, tol);
    let d1 = scaled_rms(f0, y, tol);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    }
    .min(span);
    for i in 0..y.len() {
        y1[i] = y[i] + dir * h0 * f0[i];
    }
    field(t + dir * h0, y1, f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = scaled_rms(&diff, y, tol) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    dir * (100.0 * h0).min(h1).min(span)
}

/// Integrates a matrix-valued integrand by state augmentation:
/// `Y' = integrand(t)`, `Y(t0) = 0`, returning `Y(t1)`.
pub fn quadrature<F>(
    mut integrand: F,
    rows: usize,
    cols: usize,
    t0: f64,
    t1: f64,
    tol: Tolerance,
) -> Result<Matrix, OdeError>
where
    F: FnMut(f64) -> Matrix,
{
    let traj = integrate(
        |t, _y, dy| {
            let m = integrand(t);
            debug_assert_eq!(m.shape(), (rows, cols));
            dy.copy_from_slice(m.as_slice());
        },
        &vec![0.0; rows * cols],
        t0,
        t1,
        tol,
    )?;
    Ok(Matrix::from_column_slice(rows, cols, traj.final_state()))
}

/// Scalar convenience wrapper around [`quadrature`].
pub fn quadrature_scalar<F>(mut integrand: F, t0: f64, t1: f64, tol: Tolerance) -> Result<f64, OdeError>
where
    F: FnMut(f64) -> f64,
{
    let traj = integrate(|t, _y, dy| dy[0] = integrand(t), &[0.0], t0, t1, tol)?;
    Ok(traj.final_state()[0])
}
