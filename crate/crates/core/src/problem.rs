//! JSON problem files.
//!
//! ```json
//! {"mode": "lq", "dimension": 2,
//!  "A": [["0", "t^2"], ["-t^2", "0"]], "B": [["0", "1"], ["1", "0"]],
//!  "knots": [0, 1, 2], "waypoints": [[0, 0], [1, 0.5], [-0.25, 1]],
//!  "profile": "strict", "samples": 200}
//! ```
//!
//! Spline modes replace `A`/`B`/`waypoints` with `operator`, `values` and
//! `boundary`. Matrix entries may be expression strings or plain numbers.
//! Every shape and ordering constraint is checked here, before any solver runs.

use std::path::Path;

use serde::Deserialize;

use crate::bvpspline::SplineSpec;
use crate::error::{Error, Result};
use crate::expr::{self, TimeExpr};
use crate::linalg::Vector;
use crate::matrix_function::MatrixFunction;
use crate::operator::{Convention, LinearDiffOperator};
use crate::profile::ToleranceProfile;
use crate::spline::{validate_knots, ProblemP};

pub const DEFAULT_SAMPLES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Lq,
    ScalarSpline,
    VectorSpline,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Lq => "lq",
            Mode::ScalarSpline => "scalar-spline",
            Mode::VectorSpline => "vector-spline",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Entry {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ValueSpec {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum CoefficientSpec {
    Scalar(Entry),
    Matrix(Vec<Vec<Entry>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ConventionSpec {
    Scalar,
    Matrix,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct OperatorSpec {
    order: usize,
    convention: Option<ConventionSpec>,
    coefficients: Vec<CoefficientSpec>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundarySpec {
    #[serde(default)]
    left: Vec<ValueSpec>,
    #[serde(default)]
    right: Vec<ValueSpec>,
}

/// Deliberate corruption of one segment, for exercising verification.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fault {
    pub segment: usize,
    pub costate_scale: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    mode: Mode,
    dimension: usize,
    #[serde(rename = "A")]
    a: Option<Vec<Vec<Entry>>>,
    #[serde(rename = "B")]
    b: Option<Vec<Vec<Entry>>>,
    knots: Vec<f64>,
    waypoints: Option<Vec<Vec<f64>>>,
    operator: Option<OperatorSpec>,
    values: Option<Vec<ValueSpec>>,
    boundary: Option<BoundarySpec>,
    profile: Option<String>,
    samples: Option<usize>,
    fault: Option<Fault>,
}

#[derive(Debug, Clone)]
pub enum Problem {
    Lq(ProblemP),
    Spline(SplineSpec),
}

#[derive(Debug, Clone)]
pub struct ProblemFile {
    pub mode: Mode,
    pub profile: ToleranceProfile,
    pub samples: usize,
    pub fault: Option<Fault>,
    pub problem: Problem,
}

impl ProblemFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawProblem = serde_json::from_str(text).map_err(|e| {
            Error::InvalidInput(format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        raw.build()
    }

    pub fn lq(&self) -> Option<&ProblemP> {
        match &self.problem {
            Problem::Lq(p) => Some(p),
            Problem::Spline(_) => None,
        }
    }

    pub fn spline(&self) -> Option<&SplineSpec> {
        match &self.problem {
            Problem::Spline(s) => Some(s),
            Problem::Lq(_) => None,
        }
    }
}

fn field_error(field: &str, message: impl std::fmt::Display) -> Error {
    Error::InvalidInput(format!("{field}: {message}"))
}

fn entry_expr(entry: &Entry, field: &str) -> Result<TimeExpr> {
    match entry {
        Entry::Number(x) if x.is_finite() => Ok(TimeExpr::constant(*x)),
        Entry::Number(x) => Err(field_error(field, format!("non-finite number {x}"))),
        Entry::Text(s) => expr::parse(s).map_err(|e| field_error(field, format!("{e} in {s:?}"))),
    }
}

fn matrix(rows: &[Vec<Entry>], n: usize, field: &str) -> Result<MatrixFunction> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        let shape: Vec<usize> = rows.iter().map(Vec::len).collect();
        return Err(field_error(field, format!("expected a {n}x{n} matrix, got row lengths {shape:?}")));
    }
    let mut entries = Vec::with_capacity(n * n);
    for (i, row) in rows.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            entries.push(entry_expr(e, &format!("{field}[{i}][{j}]"))?);
        }
    }
    Ok(MatrixFunction::new(n, n, entries))
}

fn vector(v: &ValueSpec, n: usize, field: &str) -> Result<Vector> {
    let values = match v {
        ValueSpec::Scalar(x) => vec![*x],
        ValueSpec::Vector(xs) => xs.clone(),
    };
    if values.len() != n {
        return Err(field_error(field, format!("expected {n} components, got {}", values.len())));
    }
    if values.iter().any(|x| !x.is_finite()) {
        return Err(field_error(field, "non-finite component"));
    }
    Ok(Vector::from_vec(values))
}

fn require<T>(value: Option<T>, field: &str, mode: Mode) -> Result<T> {
    value.ok_or_else(|| field_error(field, format!("required in {} mode", mode.name())))
}

fn forbid<T>(value: &Option<T>, field: &str, mode: Mode) -> Result<()> {
    match value {
        Some(_) => Err(field_error(field, format!("not allowed in {} mode", mode.name()))),
        None => Ok(()),
    }
}

impl RawProblem {
    fn build(self) -> Result<ProblemFile> {
        let n = self.dimension;
        if n == 0 {
            return Err(field_error("dimension", "must be at least 1"));
        }
        validate_knots(&self.knots).map_err(|e| match e {
            Error::InvalidInput(m) if m.starts_with("knots") => Error::InvalidInput(m),
            Error::InvalidInput(m) => field_error("knots", m),
            other => other,
        })?;
        let profile = ToleranceProfile::from_name(self.profile.as_deref().unwrap_or("default"))
            .map_err(|e| field_error("profile", e))?;
        let samples = self.samples.unwrap_or(DEFAULT_SAMPLES);
        if samples == 0 {
            return Err(field_error("samples", "must be at least 1"));
        }
        let segments = self.knots.len() - 1;
        if let Some(f) = &self.fault {
            if f.segment >= segments {
                return Err(field_error("fault.segment", format!("{} out of range (0..{segments})", f.segment)));
            }
            if !f.costate_scale.is_finite() {
                return Err(field_error("fault.costate_scale", "must be finite"));
            }
        }
        let mode = self.mode;
        let problem = match mode {
            Mode::Lq => {
                forbid(&self.operator, "operator", mode)?;
                forbid(&self.values, "values", mode)?;
                forbid(&self.boundary, "boundary", mode)?;
                let a = matrix(&require(self.a, "A", mode)?, n, "A")?;
                let b = matrix(&require(self.b, "B", mode)?, n, "B")?;
                let waypoints = require(self.waypoints, "waypoints", mode)?;
                if waypoints.len() != self.knots.len() {
                    return Err(field_error(
                        "waypoints",
                        format!("{} knots but {} waypoints", self.knots.len(), waypoints.len()),
                    ));
                }
                let waypoints = waypoints
                    .into_iter()
                    .enumerate()
                    .map(|(i, w)| vector(&ValueSpec::Vector(w), n, &format!("waypoints[{i}]")))
                    .collect::<Result<Vec<_>>>()?;
                Problem::Lq(ProblemP::new(a, b, self.knots, waypoints)?)
            }
            Mode::ScalarSpline | Mode::VectorSpline => {
                forbid(&self.a, "A", mode)?;
                forbid(&self.b, "B", mode)?;
                forbid(&self.waypoints, "waypoints", mode)?;
                if self.fault.is_some() {
                    return Err(field_error("fault", format!("not allowed in {} mode", mode.name())));
                }
                if mode == Mode::ScalarSpline && n != 1 {
                    return Err(field_error("dimension", "scalar-spline mode requires dimension 1"));
                }
                let op = require(self.operator, "operator", mode)?;
                let operator = build_operator(&op, n, mode)?;
                let values = require(self.values, "values", mode)?;
                if values.len() != self.knots.len() {
                    return Err(field_error(
                        "values",
                        format!("{} knots but {} values", self.knots.len(), values.len()),
                    ));
                }
                let values = values
                    .iter()
                    .enumerate()
                    .map(|(i, v)| vector(v, n, &format!("values[{i}]")))
                    .collect::<Result<Vec<_>>>()?;
                let boundary = self.boundary.unwrap_or_default();
                let mut sides = Vec::new();
                for (side, list) in [("left", &boundary.left), ("right", &boundary.right)] {
                    if list.len() != op.order - 1 {
                        return Err(field_error(
                            &format!("boundary.{side}"),
                            format!("order {} needs {} derivative values, got {}", op.order, op.order - 1, list.len()),
                        ));
                    }
                    sides.push(
                        list.iter()
                            .enumerate()
                            .map(|(k, v)| vector(v, n, &format!("boundary.{side}[{k}]")))
                            .collect::<Result<Vec<_>>>()?,
                    );
                }
                let right = sides.pop().unwrap();
                let left = sides.pop().unwrap();
                Problem::Spline(SplineSpec::new(operator, self.knots, values, left, right)?)
            }
        };
        Ok(ProblemFile {
            mode,
            profile,
            samples,
            fault: self.fault,
            problem,
        })
    }
}

fn build_operator(op: &OperatorSpec, n: usize, mode: Mode) -> Result<LinearDiffOperator> {
    if op.order == 0 {
        return Err(field_error("operator.order", "must be at least 1"));
    }
    if op.coefficients.len() != op.order {
        return Err(field_error(
            "operator.coefficients",
            format!("order {} needs {} coefficients, got {}", op.order, op.order, op.coefficients.len()),
        ));
    }
    let default = if mode == Mode::ScalarSpline {
        ConventionSpec::Scalar
    } else {
        ConventionSpec::Matrix
    };
    let convention = op.convention.unwrap_or(default);
    let coefficients = op
        .coefficients
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let field = format!("operator.coefficients[{k}]");
            match c {
                CoefficientSpec::Scalar(e) if n == 1 => Ok(MatrixFunction::new(1, 1, vec![entry_expr(e, &field)?])),
                CoefficientSpec::Scalar(_) => Err(field_error(&field, format!("expected a {n}x{n} matrix"))),
                CoefficientSpec::Matrix(rows) => matrix(rows, n, &field),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    match convention {
        ConventionSpec::Scalar => LinearDiffOperator::new(1.0, coefficients, n, Convention::Scalar),
        ConventionSpec::Matrix => LinearDiffOperator::from_matrix(coefficients),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE1: &str = r#"{"mode": "lq", "dimension": 2,
        "A": [["0","t^2"],["-t^2","0"]], "B": [["0","1"],["1","0"]],
        "knots": [0,1,2], "waypoints": [[0,0],[1,0.5],[-0.25,1]],
        "profile": "strict", "samples": 200}"#;

    #[test]
    fn parses_lq_file() {
        let f = ProblemFile::from_json(EXAMPLE1).unwrap();
        assert_eq!(f.mode, Mode::Lq);
        assert_eq!(f.profile, ToleranceProfile::STRICT);
        let p = f.lq().unwrap();
        assert_eq!(p.segment_count(), 2);
        assert_eq!(p.a().values(2.0)[(0, 1)], 4.0);
    }

    #[test]
    fn parses_scalar_spline() {
        let f = ProblemFile::from_json(
            r#"{"mode": "scalar-spline", "dimension": 1,
                "operator": {"order": 2, "convention": "scalar", "coefficients": [144, "0"]},
                "knots": [0, 0.25, 1], "values": [3, 1, 0],
                "boundary": {"left": [-1], "right": [1]}}"#,
        )
        .unwrap();
        let s = f.spline().unwrap();
        assert_eq!(s.order(), 2);
        assert_eq!(s.operator.coefficient(0).values(0.0)[(0, 0)], 144.0);
        assert_eq!(f.samples, DEFAULT_SAMPLES);
        assert_eq!(f.profile, ToleranceProfile::DEFAULT);
    }

    #[test]
    fn matrix_convention_negates() {
        let f = ProblemFile::from_json(
            r#"{"mode": "vector-spline", "dimension": 2,
                "operator": {"order": 1, "convention": "matrix", "coefficients": [[["0","t^2"],["-t^2","0"]]]},
                "knots": [0, 1], "values": [[0,0],[1,0.5]]}"#,
        )
        .unwrap();
        let op = &f.spline().unwrap().operator;
        assert_eq!(op.coefficient(0).values(1.0)[(0, 1)], -1.0);
    }

    fn error_of(json: &str) -> String {
        ProblemFile::from_json(json).unwrap_err().to_string()
    }

    #[test]
    fn diagnostics_name_the_field() {
        let bad_knots = EXAMPLE1.replace("[0,1,2]", "[0,0,1]");
        assert!(error_of(&bad_knots).contains("knots must be strictly increasing"));
        let bad_entry = EXAMPLE1.replace("\"t^2\"", "\"t^\"");
        assert!(error_of(&bad_entry).contains("A[0][1]"));
        let bad_shape = EXAMPLE1.replace("[1,0.5]", "[1]");
        assert!(error_of(&bad_shape).contains("waypoints[1]"));
        let missing = EXAMPLE1.replace("\"B\"", "\"C\"");
        assert!(error_of(&missing).contains("line"));
        let profile = EXAMPLE1.replace("strict", "fast");
        assert!(error_of(&profile).starts_with("invalid input: profile"));
        let fault = EXAMPLE1.replace("\"samples\": 200", "\"fault\": {\"segment\": 5, \"costate_scale\": 1.01}");
        assert!(error_of(&fault).contains("fault.segment"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn non_increasing_knots_are_rejected(a in -5.0f64..5.0, drop in 0.0f64..3.0) {
                let json = format!(
                    r#"{{"mode": "lq", "dimension": 1, "A": [["0"]], "B": [["1"]],
                        "knots": [{a}, {}], "waypoints": [[0], [1]]}}"#,
                    a - drop
                );
                let e = ProblemFile::from_json(&json).unwrap_err();
                prop_assert!(e.to_string().contains("strictly increasing"), "{e}");
            }
        }
    }
}
