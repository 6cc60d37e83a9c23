//! Closed-form minimizer of the two-point problem on one segment
//!
//! ```text
//! min ∫ ‖B(t)u‖² dt   s.t.  x' = A(t)x + B(t)u,  x(t_i) = x_i,  x(t_{i+1}) = x_{i+1}
//! ```
//!
//! With the cost multiplier normalized to -1/2 the maximality condition gives
//! `ψ = B(t)u`, and the costate solves `ψ' = -A(t)ᵀψ`, so
//! `ψ(t) = Φ(t_i, t)ᵀ ψ_i` with `ψ_i = S⁻¹ (Φ(t_i, t_{i+1}) x_{i+1} - x_i)`.
//! The optimal state is the solution of `x' = A(t)x + ψ(t)` from `x_i`, and
//! the optimal cost is `dᵀ S⁻¹ d` for the same `d`.

use std::f64::consts::PI;

use nalgebra::DMatrixView;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Hypothesis, Result};
use crate::linalg::{self, Lu, Matrix, Vector};
use crate::matrix_function::MatrixFunction;
use crate::ode::{self, DenseTrajectory, Tolerance};
use crate::transition::{self, TransitionOperator};

/// Number of uniform samples, on top of the integrator mesh, at which
/// `B(t)` is checked for singularity.
pub const B_CHECK_SAMPLES: usize = 100;

#[derive(Debug, Clone)]
pub struct SegmentProblem {
    pub a: MatrixFunction,
    pub b: MatrixFunction,
    pub t_start: f64,
    pub t_end: f64,
    pub x_start: Vector,
    pub x_end: Vector,
}

impl SegmentProblem {
    pub fn dim(&self) -> usize {
        self.a.rows()
    }

    fn validate(&self) -> Result<()> {
        let n = self.a.rows();
        if !self.a.is_square() {
            return Err(Error::Dimension(format!(
                "A(t) must be square, got {}x{}",
                self.a.rows(),
                self.a.cols()
            )));
        }
        if (self.b.rows(), self.b.cols()) != (n, n) {
            return Err(Error::Hypothesis {
                hypothesis: Hypothesis::NonsingularInput,
                detail: format!(
                    "B(t) must be square {n}x{n}, got {}x{}",
                    self.b.rows(),
                    self.b.cols()
                ),
            });
        }
        if self.x_start.len() != n || self.x_end.len() != n {
            return Err(Error::Dimension(format!(
                "waypoints must have dimension {n}, got {} and {}",
                self.x_start.len(),
                self.x_end.len()
            )));
        }
        if !(self.t_start < self.t_end) {
            return Err(Error::InvalidInput(format!(
                "segment must have t_start < t_end, got [{}, {}]",
                self.t_start, self.t_end
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SegmentSolution {
    problem: SegmentProblem,
    transition: TransitionOperator,
    gramian: Matrix,
    psi_start: Vector,
    cost: f64,
    state: DenseTrajectory,
    b_pivot_ratio: f64,
}

/// Solves one segment problem.
pub fn solve_segment(problem: &SegmentProblem, tol: Tolerance) -> Result<SegmentSolution> {
    problem.validate()?;
    let (t0, t1) = (problem.t_start, problem.t_end);
    let transition = transition::build_transition(&problem.a, t0, t1, tol)?;
    let gramian = transition::gramian_s(&transition, t0, t1, tol)?;
    let gap = transition.to_base(t1) * &problem.x_end - &problem.x_start;
    let psi_start = Lu::new(&gramian)?.solve_vec(&gap)?;
    let cost = gap.dot(&psi_start);
    let state = integrate_state(problem, &transition, &psi_start, tol)?;

    let mut samples: Vec<f64> = transition.mesh().to_vec();
    samples.extend_from_slice(state.mesh());
    samples.extend((0..=B_CHECK_SAMPLES).map(|k| t0 + (t1 - t0) * k as f64 / B_CHECK_SAMPLES as f64));
    let b_pivot_ratio = certify_input_matrix(&problem.b, &samples)?;

    Ok(SegmentSolution {
        problem: problem.clone(),
        transition,
        gramian,
        psi_start,
        cost,
        state,
        b_pivot_ratio,
    })
}

// x' = A(t)x + Φ(t_i, t)ᵀ ψ_i
fn integrate_state(
    problem: &SegmentProblem,
    transition: &TransitionOperator,
    psi_start: &Vector,
    tol: Tolerance,
) -> Result<DenseTrajectory> {
    let n = problem.dim();
    let mut a_buf = Matrix::zeros(n, n);
    let traj = ode::integrate(
        |t, x, dx| {
            problem.a.eval_into(t, &mut a_buf);
            let x = DMatrixView::from_slice(x, n, 1);
            let rhs = &a_buf * x + transition.to_base(t).tr_mul(psi_start);
            dx.copy_from_slice(rhs.as_slice());
        },
        problem.x_start.as_slice(),
        problem.t_start,
        problem.t_end,
        tol,
    )?;
    Ok(traj)
}

/// Checks that `B(t)` is nonsingular at every sample; returns the smallest
/// LU pivot ratio seen.
pub fn certify_input_matrix(b: &MatrixFunction, samples: &[f64]) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for &t in samples {
        let bt = b.eval(t).map_err(|e| Error::Hypothesis {
            hypothesis: Hypothesis::Smoothness,
            detail: format!("B(t) cannot be evaluated: {e}"),
        })?;
        match Lu::new(&bt) {
            Ok(lu) => worst = worst.min(lu.pivot_ratio),
            Err(_) => {
                return Err(Error::Hypothesis {
                    hypothesis: Hypothesis::NonsingularInput,
                    detail: format!("B(t) is singular at t = {t}"),
                })
            }
        }
    }
    Ok(worst)
}

impl SegmentSolution {
    pub fn problem(&self) -> &SegmentProblem {
        &self.problem
    }

    pub fn transition(&self) -> &TransitionOperator {
        &self.transition
    }

    /// The Gramian `S` of the segment.
    pub fn gramian(&self) -> &Matrix {
        &self.gramian
    }

    /// `ψ(t_i)`.
    pub fn psi_start(&self) -> &Vector {
        &self.psi_start
    }

    /// Closed-form optimal cost `dᵀ S⁻¹ d`.
    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn t_start(&self) -> f64 {
        self.problem.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.problem.t_end
    }

    pub fn state_trajectory(&self) -> &DenseTrajectory {
        &self.state
    }

    /// Smallest `min |pivot| / ‖B‖∞` over the points where `B` was checked.
    pub fn input_pivot_ratio(&self) -> f64 {
        self.b_pivot_ratio
    }

    pub fn state(&self, t: f64) -> Vector {
        Vector::from_vec(self.state.eval(t))
    }

    pub fn costate(&self, t: f64) -> Vector {
        self.transition.to_base(t).tr_mul(&self.psi_start)
    }

    /// `ψ'(t)` from the dense interpolant of `Φ(t_i, ·)`.
    pub fn costate_derivative(&self, t: f64) -> Vector {
        self.transition.to_base_derivative(t).tr_mul(&self.psi_start)
    }

    /// `x'(t) = A(t)x(t) + ψ(t)`.
    pub fn state_derivative(&self, t: f64) -> Vector {
        self.problem.a.values(t) * self.state(t) + self.costate(t)
    }

    /// `u(t) = B(t)⁻¹ ψ(t)`.
    pub fn control(&self, t: f64) -> Result<Vector> {
        let b = self.problem.b.eval(t)?;
        Ok(linalg::lu_solve(&b, &self.costate(t))?)
    }

    /// Copy of this solution with `ψ_i` multiplied by `factor` and the state
    /// re-integrated. The cost field keeps the optimal value. Only useful to
    /// exercise verification on a deliberately wrong trajectory.
    pub fn with_scaled_costate(&self, factor: f64, tol: Tolerance) -> Result<SegmentSolution> {
        let psi_start = &self.psi_start * factor;
        let state = integrate_state(&self.problem, &self.transition, &psi_start, tol)?;
        Ok(SegmentSolution {
            psi_start,
            state,
            ..self.clone()
        })
    }
}

/// `∫ ‖B(t)u(t)‖² dt` over the segment by adaptive quadrature.
pub fn segment_cost_quadrature(s: &SegmentSolution, tol: Tolerance) -> Result<f64> {
    let mut failure = None;
    let cost = ode::quadrature_scalar(
        |t| match s.control(t) {
            Ok(u) => (s.problem.b.values(t) * u).norm_squared(),
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        s.t_start(),
        s.t_end(),
        tol,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(cost?)
}

/// Endpoint-vanishing perturbation
/// `η(t) = sin(πτ) (w₀ + w₁ sin(2πτ))`, `τ = (t - t_i) / Δt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bump {
    pub w0: Vector,
    pub w1: Vector,
}

impl Bump {
    pub fn zero(n: usize) -> Self {
        Self {
            w0: Vector::zeros(n),
            w1: Vector::zeros(n),
        }
    }

    pub fn random(n: usize, rng: &mut impl Rng) -> Self {
        let mut draw = || Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w0 = draw();
        let w1 = draw();
        Self { w0, w1 }
    }

    /// `(η(t), η'(t))` on `[t0, t0 + dt]`.
    pub fn eval(&self, t: f64, t0: f64, dt: f64) -> (Vector, Vector) {
        let tau = (t - t0) / dt;
        let (s1, c1) = (PI * tau).sin_cos();
        let (s2, c2) = (2.0 * PI * tau).sin_cos();
        let eta = (&self.w0 + &self.w1 * s2) * s1;
        let deta = (&self.w0 + &self.w1 * s2) * (PI / dt * c1) + &self.w1 * (s1 * 2.0 * PI / dt * c2);
        (eta, deta)
    }
}

/// Cost of the admissible pair obtained by adding `bump` to the optimal state:
/// `ũ = B⁻¹ (x̃' - A x̃)` with `x̃ = x + η`.
pub fn perturbed_cost(s: &SegmentSolution, bump: &Bump, tol: Tolerance) -> Result<f64> {
    let (t0, t1) = (s.t_start(), s.t_end());
    let dt = t1 - t0;
    let mut failure = None;
    let cost = ode::quadrature_scalar(
        |t| {
            let a = s.problem.a.values(t);
            let b = s.problem.b.values(t);
            let (eta, deta) = bump.eval(t, t0, dt);
            let x = s.state(t) + eta;
            let dx = s.state_derivative(t) + deta;
            match linalg::lu_solve(&b, &(dx - a * x)) {
                Ok(u) => (b * u).norm_squared(),
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        t0,
        t1,
        tol,
    );
    if let Some(e) = failure {
        return Err(e.into());
    }
    Ok(cost?)
}

#[derive(Debug, Clone)]
pub struct PerturbationTrial {
    pub index: usize,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct PerturbationReport {
    pub optimal_cost: f64,
    pub trials: Vec<PerturbationTrial>,
    /// Trials whose cost fell below `optimal - 1e-7 (1 + optimal)`.
    pub violations: Vec<usize>,
}

impl PerturbationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// Smallest `trial cost - optimal cost` over all trials.
    pub fn min_margin(&self) -> f64 {
        self.trials
            .iter()
            .map(|t| t.cost - self.optimal_cost)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Compares the optimal cost against `trials` seeded random perturbations.
pub fn perturbation_check(
    s: &SegmentSolution,
    trials: usize,
    seed: u64,
    tol: Tolerance,
) -> Result<PerturbationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = s.problem.dim();
    let optimal = s.cost();
    let slack = 1e-7 * (1.0 + optimal.abs());
    let mut report = PerturbationReport {
        optimal_cost: optimal,
        trials: Vec::with_capacity(trials),
        violations: Vec::new(),
    };
    for index in 0..trials {
        let bump = Bump::random(n, &mut rng);
        let cost = perturbed_cost(s, &bump, tol)?;
        if cost < optimal - slack {
            report.violations.push(index);
        }
        report.trials.push(PerturbationTrial { index, cost });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_problem(v: &[f64], dt: f64) -> SegmentProblem {
        let n = v.len();
        SegmentProblem {
            a: MatrixFunction::zeros(n, n),
            b: MatrixFunction::identity(n),
            t_start: 0.0,
            t_end: dt,
            x_start: Vector::zeros(n),
            x_end: Vector::from_column_slice(v),
        }
    }

    #[test]
    fn free_particle_interpolates_linearly() {
        let tol = Tolerance::default();
        let v = [1.0, -2.0, 0.5];
        let s = solve_segment(&linear_problem(&v, 1.0), tol).unwrap();
        let v = Vector::from_column_slice(&v);
        for t in [0.0, 0.25, 0.6, 1.0] {
            assert!((s.state(t) - &v * t).amax() < 1e-10);
            assert!((s.control(t).unwrap() - &v).amax() < 1e-10);
        }
        assert!((s.cost() - v.norm_squared()).abs() < 1e-10);
        let q = segment_cost_quadrature(&s, tol).unwrap();
        assert!((q - v.norm_squared()).abs() < 1e-9);
    }

    #[test]
    fn cost_scales_inversely_with_duration() {
        let tol = Tolerance::default();
        let s = solve_segment(&linear_problem(&[3.0, 4.0], 2.0), tol).unwrap();
        assert!((s.cost() - 12.5).abs() < 1e-9);
        assert!((segment_cost_quadrature(&s, tol).unwrap() - 12.5).abs() < 1e-8);
    }

    #[test]
    fn bump_cost_matches_hand_expansion() {
        // ∫ ‖v + η'‖² with η = sin(πt) w gives ‖v‖² + (π²/2)‖w‖²
        let tol = Tolerance::default();
        let s = solve_segment(&linear_problem(&[1.0, 2.0], 1.0), tol).unwrap();
        let zero = perturbed_cost(&s, &Bump::zero(2), tol).unwrap();
        assert!((zero - 5.0).abs() < 1e-9);
        let w = Vector::from_vec(vec![0.3, -0.4]);
        let bump = Bump {
            w0: w.clone(),
            w1: Vector::zeros(2),
        };
        let cost = perturbed_cost(&s, &bump, tol).unwrap();
        let expected = 5.0 + PI * PI / 2.0 * w.norm_squared();
        assert!((cost - expected).abs() < 1e-8);
    }

    #[test]
    fn singular_input_is_a_hypothesis_violation() {
        let mut p = linear_problem(&[1.0, 1.0], 1.0);
        p.b = MatrixFunction::parse(&[vec!["1", "0"], vec!["0", "t - 0.5"]]).unwrap();
        let err = solve_segment(&p, Tolerance::default()).unwrap_err();
        assert!(matches!(
            err,
            Error::Hypothesis {
                hypothesis: Hypothesis::NonsingularInput,
                ..
            }
        ));
    }

    #[test]
    fn scaled_costate_misses_the_target() {
        let tol = Tolerance::default();
        let s = solve_segment(&linear_problem(&[1.0, 0.0], 1.0), tol).unwrap();
        let bad = s.with_scaled_costate(1.01, tol).unwrap();
        assert!((bad.state(1.0)[0] - 1.01).abs() < 1e-9);
    }

    mod props {
        use super::*;
        use crate::expr::TimeExpr;
        use proptest::prelude::*;

        fn instance(n: usize, c: &[f64], dt: f64) -> SegmentProblem {
            let t = TimeExpr::time();
            let a = MatrixFunction::from_fn(n, n, |i, j| {
                let k = 2 * (i * n + j);
                TimeExpr::constant(c[k]).add(&t.scale(c[k + 1]))
            });
            let b = Matrix::from_fn(n, n, |i, j| c[18 + i * n + j] + if i == j { 2.0 } else { 0.0 });
            SegmentProblem {
                a,
                b: MatrixFunction::constant(&b),
                t_start: c[27],
                t_end: c[27] + dt,
                x_start: Vector::from_fn(n, |i, _| c[28 + i]),
                x_end: Vector::from_fn(n, |i, _| c[31 + i]),
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn solution_invariants(n in 1usize..4, c in proptest::collection::vec(-1.0f64..1.0, 34), dt in 0.3f64..1.5) {
                let tol = Tolerance::new(1e-12, 1e-14);
                let p = instance(n, &c, dt);
                let s = solve_segment(&p, tol).unwrap();
                let end_gap = (s.state(p.t_end) - &p.x_end).norm();
                prop_assert!((s.state(p.t_start) - &p.x_start).norm() <= 1e-7 * (1.0 + p.x_end.norm()));
                prop_assert!(end_gap <= 1e-7 * (1.0 + p.x_end.norm()), "{end_gap}");
                for k in 0..=20 {
                    let t = p.t_start + dt * k as f64 / 20.0;
                    let psi = s.costate(t);
                    let bu = p.b.values(t) * s.control(t).unwrap();
                    prop_assert!((&psi - bu).amax() <= 1e-8);
                    let residual = s.costate_derivative(t) + p.a.values(t).transpose() * &psi;
                    prop_assert!(residual.amax() <= 1e-7, "{}", residual.amax());
                }
                let q = segment_cost_quadrature(&s, tol).unwrap();
                prop_assert!((q - s.cost()).abs() <= 1e-7 * (1.0 + s.cost()));
            }

            #[test]
            fn time_translation_is_coherent(c in proptest::collection::vec(-1.0f64..1.0, 34), shift in -2.0f64..2.0) {
                let tol = Tolerance::new(1e-12, 1e-14);
                let p = instance(2, &c, 1.0);
                let q = SegmentProblem {
                    a: p.a.shifted(shift),
                    b: p.b.shifted(shift),
                    t_start: p.t_start - shift,
                    t_end: p.t_end - shift,
                    ..p.clone()
                };
                let (s, r) = (solve_segment(&p, tol).unwrap(), solve_segment(&q, tol).unwrap());
                prop_assert!((s.cost() - r.cost()).abs() <= 1e-8 * (1.0 + s.cost()));
                for k in 0..=10 {
                    let t = p.t_start + k as f64 / 10.0;
                    prop_assert!((s.state(t) - r.state(t - shift)).amax() <= 1e-8);
                }
            }
        }
    }
}
