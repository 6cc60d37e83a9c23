//! Problem (P) over a whole partition: independent segment solves, global
//! evaluation and residual reports.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Hypothesis, Result};
use crate::linalg::Vector;
use crate::lqsegment::{self, SegmentProblem, SegmentSolution};
use crate::matrix_function::MatrixFunction;
use crate::ode::Tolerance;
use crate::operator::LinearDiffOperator;
use crate::profile::ToleranceProfile;
use crate::transition::{self, Controllability};

/// Residual samples per segment used by [`verify`].
pub const VERIFY_SAMPLES: usize = 50;

/// Uniform samples over `[a, b]` used by the smoothness check.
const SMOOTHNESS_SAMPLES: usize = 200;

#[derive(Debug, Clone)]
pub struct ProblemP {
    a: MatrixFunction,
    b: MatrixFunction,
    knots: Vec<f64>,
    waypoints: Vec<Vector>,
}

/// Checks `m ≥ 1` and strictly increasing finite knots.
pub fn validate_knots(knots: &[f64]) -> Result<()> {
    if knots.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "knots: need at least 2 knots, got {}",
            knots.len()
        )));
    }
    if let Some(t) = knots.iter().find(|t| !t.is_finite()) {
        return Err(Error::InvalidInput(format!("knots: non-finite knot {t}")));
    }
    if let Some(i) = knots.windows(2).position(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput(format!(
            "knots must be strictly increasing: knots[{}] = {} is not below knots[{}] = {}",
            i,
            knots[i],
            i + 1,
            knots[i + 1]
        )));
    }
    Ok(())
}

impl ProblemP {
    pub fn new(a: MatrixFunction, b: MatrixFunction, knots: Vec<f64>, waypoints: Vec<Vector>) -> Result<Self> {
        validate_knots(&knots)?;
        if !a.is_square() {
            return Err(Error::Dimension(format!("A(t) must be square, got {}x{}", a.rows(), a.cols())));
        }
        let n = a.rows();
        if (b.rows(), b.cols()) != (n, n) {
            return Err(Error::Hypothesis {
                hypothesis: Hypothesis::NonsingularInput,
                detail: format!("B(t) must be square {n}x{n}, got {}x{}", b.rows(), b.cols()),
            });
        }
        if waypoints.len() != knots.len() {
            return Err(Error::InvalidInput(format!(
                "waypoints: {} knots but {} waypoints",
                knots.len(),
                waypoints.len()
            )));
        }
        if let Some(i) = waypoints.iter().position(|w| w.len() != n) {
            return Err(Error::Dimension(format!(
                "waypoints[{i}] has dimension {}, expected {n}",
                waypoints[i].len()
            )));
        }
        Ok(Self { a, b, knots, waypoints })
    }

    pub fn dim(&self) -> usize {
        self.a.rows()
    }

    pub fn a(&self) -> &MatrixFunction {
        &self.a
    }

    pub fn b(&self) -> &MatrixFunction {
        &self.b
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn waypoints(&self) -> &[Vector] {
        &self.waypoints
    }

    pub fn segment_count(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn segment(&self, i: usize) -> SegmentProblem {
        SegmentProblem {
            a: self.a.clone(),
            b: self.b.clone(),
            t_start: self.knots[i],
            t_end: self.knots[i + 1],
            x_start: self.waypoints[i].clone(),
            x_end: self.waypoints[i + 1].clone(),
        }
    }

    /// Copy with waypoint `i` replaced.
    pub fn with_waypoint(&self, i: usize, x: Vector) -> Result<Self> {
        let mut waypoints = self.waypoints.clone();
        waypoints[i] = x;
        Self::new(self.a.clone(), self.b.clone(), self.knots.clone(), waypoints)
    }
}

/// Verdicts of the standing assumptions on `[a, b]`.
#[derive(Debug, Clone)]
pub struct HypothesisReport {
    pub smooth: bool,
    pub nonsingular_input: bool,
    pub controllability: Option<Controllability>,
    pub detail: Option<String>,
}

impl HypothesisReport {
    pub fn controllable(&self) -> bool {
        self.controllability.as_ref().is_some_and(|c| c.controllable)
    }

    pub fn holds(&self) -> bool {
        self.smooth && self.nonsingular_input && self.controllable()
    }

    /// The first failed hypothesis as an error.
    pub fn into_result(self) -> Result<Self> {
        let failed = if !self.smooth {
            Hypothesis::Smoothness
        } else if !self.nonsingular_input {
            Hypothesis::NonsingularInput
        } else if !self.controllable() {
            Hypothesis::Controllability
        } else {
            return Ok(self);
        };
        Err(Error::Hypothesis {
            hypothesis: failed,
            detail: self.detail.unwrap_or_else(|| "controllability Gramian is not positive definite".into()),
        })
    }
}

/// Evaluates the standing assumptions: finite `A`, `B` and their derivatives,
/// nonsingular `B`, and a positive definite controllability Gramian on `[a, b]`.
pub fn check_hypotheses(p: &ProblemP, tol: Tolerance) -> Result<HypothesisReport> {
    let (t0, t1) = (p.knots[0], *p.knots.last().unwrap());
    let samples: Vec<f64> = (0..=SMOOTHNESS_SAMPLES)
        .map(|k| t0 + (t1 - t0) * k as f64 / SMOOTHNESS_SAMPLES as f64)
        .chain(p.knots.iter().copied())
        .collect();
    let mut report = HypothesisReport {
        smooth: true,
        nonsingular_input: true,
        controllability: None,
        detail: None,
    };
    let (da, db) = (p.a.differentiate(), p.b.differentiate());
    for &t in &samples {
        for (name, m) in [("A", &p.a), ("B", &p.b), ("dA/dt", &da), ("dB/dt", &db)] {
            if let Err(e) = m.eval(t) {
                report.smooth = false;
                report.detail = Some(format!("{name}(t) is not finite at t = {t}: {e}"));
                return Ok(report);
            }
        }
    }
    if let Err(e) = lqsegment::certify_input_matrix(&p.b, &samples) {
        report.nonsingular_input = false;
        report.detail = Some(match e {
            Error::Hypothesis { detail, .. } => detail,
            other => other.to_string(),
        });
        return Ok(report);
    }
    let w = transition::controllability_gramian(&p.a, &p.b, t0, t1, tol)?;
    if !w.controllable {
        report.detail = Some(format!("controllability Gramian on [{t0}, {t1}] is not positive definite"));
    }
    report.controllability = Some(w);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveOptions {
    pub check_hypotheses: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { check_hypotheses: true }
    }
}

/// Concatenation of segment minimizers over the partition.
#[derive(Debug, Clone)]
pub struct GeneralizedSpline {
    knots: Vec<f64>,
    segments: Vec<SegmentSolution>,
    hypotheses: Option<HypothesisReport>,
}

/// Solves every segment problem, in parallel, after the hypothesis checks.
pub fn solve_problem_p(p: &ProblemP, options: SolveOptions, tol: Tolerance) -> Result<GeneralizedSpline> {
    let hypotheses = if options.check_hypotheses {
        Some(check_hypotheses(p, tol)?.into_result()?)
    } else {
        None
    };
    let segments = (0..p.segment_count())
        .into_par_iter()
        .map(|i| lqsegment::solve_segment(&p.segment(i), tol).map_err(|e| e.in_segment(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(GeneralizedSpline {
        knots: p.knots.clone(),
        segments,
        hypotheses,
    })
}

impl GeneralizedSpline {
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn segments(&self) -> &[SegmentSolution] {
        &self.segments
    }

    pub fn hypotheses(&self) -> Option<&HypothesisReport> {
        self.hypotheses.as_ref()
    }

    /// Sum of the closed-form segment costs.
    pub fn total_cost(&self) -> f64 {
        self.segments.iter().map(SegmentSolution::cost).sum()
    }

    /// Sum of segment quadratures of `‖B u‖²`.
    pub fn quadrature_cost(&self, tol: Tolerance) -> Result<f64> {
        self.segments
            .iter()
            .enumerate()
            .map(|(i, s)| lqsegment::segment_cost_quadrature(s, tol).map_err(|e| e.in_segment(i)))
            .sum()
    }

    /// Segment owning `t` with knots assigned to the segment on their left.
    /// Times outside `[a, b]` map to the first or last segment.
    pub fn segment_index(&self, t: f64) -> usize {
        let interior = &self.knots[1..self.knots.len() - 1];
        interior.partition_point(|&k| k < t)
    }

    /// Same as [`segment_index`](Self::segment_index) but knots belong to the
    /// segment on their right.
    pub fn segment_index_right(&self, t: f64) -> usize {
        let interior = &self.knots[1..self.knots.len() - 1];
        interior.partition_point(|&k| k <= t)
    }

    pub fn state(&self, t: f64) -> Vector {
        self.segments[self.segment_index(t)].state(t)
    }

    /// Left limit at interior knots.
    pub fn control(&self, t: f64) -> Result<Vector> {
        self.segments[self.segment_index(t)].control(t)
    }

    pub fn control_right(&self, t: f64) -> Result<Vector> {
        self.segments[self.segment_index_right(t)].control(t)
    }

    /// Left limit at interior knots.
    pub fn costate(&self, t: f64) -> Vector {
        self.segments[self.segment_index(t)].costate(t)
    }

    pub fn costate_right(&self, t: f64) -> Vector {
        self.segments[self.segment_index_right(t)].costate(t)
    }

    /// Copy with `ψ_i` of one segment scaled and its state re-integrated.
    pub fn with_scaled_costate(&self, segment: usize, factor: f64, tol: Tolerance) -> Result<Self> {
        if segment >= self.segments.len() {
            return Err(Error::InvalidInput(format!(
                "segment {segment} out of range (spline has {})",
                self.segments.len()
            )));
        }
        let mut out = self.clone();
        out.segments[segment] = self.segments[segment].with_scaled_costate(factor, tol)?;
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SegmentResiduals {
    pub index: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub interpolation: f64,
    pub maximality: f64,
    pub costate: f64,
    pub euler_lagrange: f64,
    pub cost_gap: f64,
    pub cost: f64,
}

impl SegmentResiduals {
    fn values(&self) -> [f64; 5] {
        [self.interpolation, self.maximality, self.costate, self.euler_lagrange, self.cost_gap]
    }

    pub fn passes(&self, profile: &ToleranceProfile) -> bool {
        self.values().iter().zip(thresholds(profile)).all(|(v, limit)| *v <= limit)
    }
}

fn thresholds(p: &ToleranceProfile) -> [f64; 5] {
    [p.interpolation, p.maximality, p.costate, p.euler_lagrange, p.cost]
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub profile: ToleranceProfile,
    pub segments: Vec<SegmentResiduals>,
    pub passed: bool,
}

/// Residual sample points: `samples` interior times kept `margin · Δt` away
/// from both ends.
fn interior_samples(t0: f64, t1: f64, samples: usize, margin: f64) -> impl Iterator<Item = f64> {
    let dt = t1 - t0;
    (0..samples).map(move |k| {
        let tau = margin + (1.0 - 2.0 * margin) * k as f64 / (samples - 1) as f64;
        t0 + tau * dt
    })
}

/// Sixth-order central difference of `f` at `t`.
pub fn stencil(f: impl Fn(f64) -> Vector, t: f64, h: f64) -> Vector {
    let d1 = f(t + h) - f(t - h);
    let d2 = f(t + 2.0 * h) - f(t - 2.0 * h);
    let d3 = f(t + 3.0 * h) - f(t - 3.0 * h);
    (d1 * 45.0 - d2 * 9.0 + d3) / (60.0 * h)
}

fn max_norm(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(0.0, |acc: f64, v| if v.is_nan() { f64::NAN } else { acc.max(v) })
}

/// Computes every per-segment residual of `s` and compares with `profile`.
pub fn verify(s: &GeneralizedSpline, p: &ProblemP, profile: &ToleranceProfile, tol: Tolerance) -> Result<VerificationReport> {
    let l = LinearDiffOperator::first_order(&p.a)?;
    let ll = l.adjoint().compose(&l)?;
    let at = p.a.transpose();
    let segments = s
        .segments
        .par_iter()
        .enumerate()
        .map(|(i, seg)| verify_segment(i, seg, p, &ll, &at, tol).map_err(|e| e.in_segment(i)))
        .collect::<Result<Vec<_>>>()?;
    let passed = segments.iter().all(|r| r.passes(profile));
    Ok(VerificationReport {
        profile: *profile,
        segments,
        passed,
    })
}

fn verify_segment(
    index: usize,
    seg: &SegmentSolution,
    p: &ProblemP,
    ll: &LinearDiffOperator,
    at: &MatrixFunction,
    tol: Tolerance,
) -> Result<SegmentResiduals> {
    let (t0, t1) = (seg.t_start(), seg.t_end());
    let (x0, x1) = (&p.waypoints[index], &p.waypoints[index + 1]);
    let interpolation = ((seg.state(t0) - x0).norm()).max((seg.state(t1) - x1).norm()) / (1.0 + x1.norm());

    let grid: Vec<f64> = interior_samples(t0, t1, VERIFY_SAMPLES + 1, 0.0).collect();
    let maximality = max_norm(grid.iter().map(|&t| {
        let u = seg.control(t).map(|u| p.b.values(t) * u);
        u.map_or(f64::NAN, |bu| (seg.costate(t) - bu).norm())
    }));
    // ψ' and x'' by central differences of dense values, away from the ends
    let h = 1e-2 * (t1 - t0);
    let interior: Vec<f64> = interior_samples(t0, t1, VERIFY_SAMPLES, 0.04).collect();
    let costate = max_norm(interior.iter().map(|&t| {
        let dpsi = stencil(|s| seg.costate(s), t, h);
        (dpsi + at.values(t) * seg.costate(t)).norm()
    }));
    let euler_lagrange = max_norm(interior.iter().map(|&t| {
        let ddx = stencil(|s| seg.state_derivative(s), t, h);
        ll.apply(t, &[seg.state(t), seg.state_derivative(t), ddx])
            .map_or(f64::NAN, |r| r.norm())
    }));

    let quadrature = lqsegment::segment_cost_quadrature(seg, tol)?;
    let cost_gap = (seg.cost() - quadrature).abs() / (1.0 + seg.cost().abs());
    Ok(SegmentResiduals {
        index,
        t_start: t0,
        t_end: t1,
        interpolation,
        maximality,
        costate,
        euler_lagrange,
        cost_gap,
        cost: seg.cost(),
    })
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const NAMES: [&str; 5] = ["interpolation", "maximality", "costate", "euler-lagrange", "cost gap"];
        writeln!(f, "profile: {}", self.profile.name)?;
        write!(f, "{:>3} {:>23}", "seg", "interval")?;
        for name in NAMES {
            write!(f, " {name:>14}")?;
        }
        writeln!(f)?;
        let limits = thresholds(&self.profile);
        write!(f, "{:>3} {:>23}", "", "threshold")?;
        for limit in limits {
            write!(f, " {limit:>14.1e}")?;
        }
        writeln!(f)?;
        for r in &self.segments {
            let flag = if r.passes(&self.profile) { ' ' } else { '!' };
            let interval = format!("[{:.6}, {:.6}]", r.t_start, r.t_end);
            write!(f, "{flag}{:>2} {interval:>23}", r.index)?;
            for (v, limit) in r.values().iter().zip(limits) {
                let cell = format!("{v:.3e}{}", if *v <= limit { " " } else { "*" });
                write!(f, " {cell:>14}")?;
            }
            writeln!(f)?;
        }
        write!(f, "result: {}", if self.passed { "PASS" } else { "FAIL" })
    }
}

/// `‖x(t_i) - x_i‖` at every knot, evaluated from both sides.
pub fn knot_continuity(s: &GeneralizedSpline, waypoints: &[Vector]) -> f64 {
    let mut worst: f64 = 0.0;
    for (seg, pair) in s.segments.iter().zip(waypoints.windows(2)) {
        worst = worst.max((seg.state(seg.t_start()) - &pair[0]).norm());
        worst = worst.max((seg.state(seg.t_end()) - &pair[1]).norm());
    }
    worst
}

/// Pointwise jump `u(t_i^+) - u(t_i^-)` at interior knot `i`.
pub fn control_jump(s: &GeneralizedSpline, knot: usize) -> Result<Vector> {
    let t = s.knots[knot];
    let left = s.segments[knot - 1].control(t)?;
    let right = s.segments[knot].control(t)?;
    Ok(right - left)
}
