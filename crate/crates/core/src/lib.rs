//! Generalized time-dependent splines in `R^n`.
//!
//! Splines are computed as minimizers of the linear-quadratic problem
//!
//! ```text
//! min ∫ ⟨B(t)u, B(t)u⟩ dt   s.t.  x' = A(t)x + B(t)u,  x(t_i) = x_i
//! ```
//!
//! along two independent routes: closed-form transition-matrix / Gramian
//! formulas per segment ([`lqsegment`], [`spline`]) and collocation of the
//! Euler–Lagrange equation `L*Lx = 0` over fundamental solutions
//! ([`operator`], [`bvpspline`]).

pub mod bvpspline;
pub mod error;
pub mod expr;
pub mod linalg;
pub mod lqsegment;
pub mod matrix_function;
pub mod ode;
pub mod operator;
pub mod problem;
pub mod profile;
pub mod spline;
pub mod transition;

pub use bvpspline::{solve_spline, PiecewiseSpline, SplineSpec};
pub use error::{Error, Hypothesis, Result};
pub use expr::{parse, ExprError, TimeExpr};
pub use linalg::{Matrix, Vector};
pub use lqsegment::{solve_segment, SegmentProblem, SegmentSolution};
pub use matrix_function::MatrixFunction;
pub use ode::{DenseTrajectory, Tolerance};
pub use operator::{Convention, LinearDiffOperator};
pub use problem::{Mode, Problem, ProblemFile};
pub use profile::ToleranceProfile;
pub use spline::{solve_problem_p, verify, GeneralizedSpline, ProblemP, SolveOptions, VerificationReport};
