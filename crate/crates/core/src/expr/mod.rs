//! Scalar expressions in the time variable `t`.
//!
//! A [`TimeExpr`] is an immutable expression tree over numeric literals, `t`,
//! the four arithmetic operators, integer powers and the functions `sin`,
//! `cos`, `exp` and `sqrt`. Trees share subexpressions through [`Arc`], so
//! cloning is cheap and values can be handed to worker threads freely.
//!
//! The smart constructors ([`TimeExpr::add`], [`TimeExpr::mul`], ...) fold
//! constant operands and drop neutral elements (`x + 0`, `1 * x`, `0 * x`).
//! Nothing beyond that is simplified.

mod parser;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use parser::parse;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("domain error at t = {t}: {message}")]
    Domain { t: f64, message: &'static str },
}

/// Elementary functions admitted by the grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Time,
    Neg(TimeExpr),
    Add(TimeExpr, TimeExpr),
    Sub(TimeExpr, TimeExpr),
    Mul(TimeExpr, TimeExpr),
    Div(TimeExpr, TimeExpr),
    Pow(TimeExpr, i32),
    Call(Func, TimeExpr),
}

/// Immutable expression tree in the time variable.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeExpr(Arc<Node>);

impl TimeExpr {
    fn from_node(node: Node) -> Self {
        TimeExpr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn constant(value: f64) -> Self {
        Self::from_node(Node::Const(value))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    pub fn time() -> Self {
        Self::from_node(Node::Time)
    }

    pub fn as_constant(&self) -> Option<f64> {
        match *self.0 {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_constant() == Some(0.0)
    }

    pub fn is_one(&self) -> bool {
        self.as_constant() == Some(1.0)
    }

    /// True when the tree does not mention `t`.
    pub fn is_constant(&self) -> bool {
        match self.node() {
            Node::Const(_) => true,
            Node::Time => false,
            Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => a.is_constant(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.is_constant() && b.is_constant()
            }
        }
    }

    // Folding is skipped when the folded value would not be finite, so that
    // domain errors surface at evaluation time instead of being baked in.
    fn fold(value: f64) -> Option<Self> {
        value.is_finite().then(|| Self::constant(value))
    }

    pub fn neg(&self) -> Self {
        match self.node() {
            Node::Const(c) => Self::constant(-c),
            Node::Neg(inner) => inner.clone(),
            _ => Self::from_node(Node::Neg(self.clone())),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        if let (Some(a), Some(b)) = (self.as_constant(), other.as_constant()) {
            if let Some(folded) = Self::fold(a + b) {
                return folded;
            }
        }
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        Self::from_node(Node::Add(self.clone(), other.clone()))
    }

    pub fn sub(&self, other: &Self) -> Self {
        if let (Some(a), Some(b)) = (self.as_constant(), other.as_constant()) {
            if let Some(folded) = Self::fold(a - b) {
                return folded;
            }
        }
        if other.is_zero() {
            return self.clone();
        }
        if self.is_zero() {
            return other.neg();
        }
        Self::from_node(Node::Sub(self.clone(), other.clone()))
    }

    pub fn mul(&self, other: &Self) -> Self {
        if let (Some(a), Some(b)) = (self.as_constant(), other.as_constant()) {
            if let Some(folded) = Self::fold(a * b) {
                return folded;
            }
        }
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        if self.is_one() {
            return other.clone();
        }
        if other.is_one() {
            return self.clone();
        }
        if self.as_constant() == Some(-1.0) {
            return other.neg();
        }
        if other.as_constant() == Some(-1.0) {
            return self.neg();
        }
        Self::from_node(Node::Mul(self.clone(), other.clone()))
    }

    pub fn div(&self, other: &Self) -> Self {
        if let (Some(a), Some(b)) = (self.as_constant(), other.as_constant()) {
            if b != 0.0 {
                if let Some(folded) = Self::fold(a / b) {
                    return folded;
                }
            }
        }
        if self.is_zero() && !other.is_zero() {
            return Self::zero();
        }
        if other.is_one() {
            return self.clone();
        }
        Self::from_node(Node::Div(self.clone(), other.clone()))
    }

    pub fn powi(&self, exponent: i32) -> Self {
        match exponent {
            0 => return Self::one(),
            1 => return self.clone(),
            _ => {}
        }
        if let Some(c) = self.as_constant() {
            if let Some(folded) = Self::fold(c.powi(exponent)) {
                return folded;
            }
        }
        Self::from_node(Node::Pow(self.clone(), exponent))
    }

    pub fn call(func: Func, arg: &Self) -> Self {
        if let Some(c) = arg.as_constant() {
            if let Ok(v) = apply_func(func, c, 0.0) {
                if let Some(folded) = Self::fold(v) {
                    return folded;
                }
            }
        }
        Self::from_node(Node::Call(func, arg.clone()))
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self::constant(factor).mul(self)
    }

    /// Evaluates the tree at `t`.
    ///
    /// Division by an exact zero, `sqrt` of a negative number and any
    /// non-finite intermediate value are reported as domain errors.
    pub fn eval(&self, t: f64) -> Result<f64, ExprError> {
        let value = match self.node() {
            Node::Const(c) => *c,
            Node::Time => t,
            Node::Neg(a) => -a.eval(t)?,
            Node::Add(a, b) => a.eval(t)? + b.eval(t)?,
            Node::Sub(a, b) => a.eval(t)? - b.eval(t)?,
            Node::Mul(a, b) => a.eval(t)? * b.eval(t)?,
            Node::Div(a, b) => {
                let num = a.eval(t)?;
                let den = b.eval(t)?;
                if den == 0.0 {
                    return Err(ExprError::Domain {
                        t,
                        message: "division by zero",
                    });
                }
                num / den
            }
            Node::Pow(a, n) => {
                let base = a.eval(t)?;
                if base == 0.0 && *n < 0 {
                    return Err(ExprError::Domain {
                        t,
                        message: "division by zero",
                    });
                }
                base.powi(*n)
            }
            Node::Call(f, a) => apply_func(*f, a.eval(t)?, t)?,
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(ExprError::Domain {
                t,
                message: "non-finite value",
            })
        }
    }

    /// Like [`TimeExpr::eval`] but maps domain errors to NaN, for use inside
    /// integrator right-hand sides that check finiteness themselves.
    pub fn value(&self, t: f64) -> f64 {
        self.eval(t).unwrap_or(f64::NAN)
    }

    /// Symbolic derivative with respect to `t`.
    pub fn differentiate(&self) -> TimeExpr {
        match self.node() {
            Node::Const(_) => Self::zero(),
            Node::Time => Self::one(),
            Node::Neg(a) => a.differentiate().neg(),
            Node::Add(a, b) => a.differentiate().add(&b.differentiate()),
            Node::Sub(a, b) => a.differentiate().sub(&b.differentiate()),
            Node::Mul(a, b) => a
                .differentiate()
                .mul(b)
                .add(&a.mul(&b.differentiate())),
            Node::Div(a, b) => {
                let numerator = a.differentiate().mul(b).sub(&a.mul(&b.differentiate()));
                numerator.div(&b.powi(2))
            }
            Node::Pow(a, n) => Self::constant(f64::from(*n))
                .mul(&a.powi(n - 1))
                .mul(&a.differentiate()),
            Node::Call(f, a) => {
                let inner = a.differentiate();
                let outer = match f {
                    Func::Sin => Self::call(Func::Cos, a),
                    Func::Cos => Self::call(Func::Sin, a).neg(),
                    Func::Exp => self.clone(),
                    Func::Sqrt => Self::one().div(&Self::constant(2.0).mul(self)),
                };
                outer.mul(&inner)
            }
        }
    }

    /// The `k`-th derivative.
    pub fn derivative(&self, k: usize) -> TimeExpr {
        (0..k).fold(self.clone(), |e, _| e.differentiate())
    }

    /// Replaces every occurrence of `t` by `replacement`.
    pub fn substitute(&self, replacement: &TimeExpr) -> TimeExpr {
        match self.node() {
            Node::Const(_) => self.clone(),
            Node::Time => replacement.clone(),
            Node::Neg(a) => a.substitute(replacement).neg(),
            Node::Add(a, b) => a.substitute(replacement).add(&b.substitute(replacement)),
            Node::Sub(a, b) => a.substitute(replacement).sub(&b.substitute(replacement)),
            Node::Mul(a, b) => a.substitute(replacement).mul(&b.substitute(replacement)),
            Node::Div(a, b) => a.substitute(replacement).div(&b.substitute(replacement)),
            Node::Pow(a, n) => a.substitute(replacement).powi(*n),
            Node::Call(f, a) => Self::call(*f, &a.substitute(replacement)),
        }
    }

    /// `e(t + delta)`.
    pub fn shifted(&self, delta: f64) -> TimeExpr {
        self.substitute(&Self::time().add(&Self::constant(delta)))
    }

    /// Number of nodes in the tree, counting shared subtrees once per use.
    pub fn size(&self) -> usize {
        1 + match self.node() {
            Node::Const(_) | Node::Time => 0,
            Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => a.size(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.size() + b.size()
            }
        }
    }
}

fn apply_func(func: Func, x: f64, t: f64) -> Result<f64, ExprError> {
    Ok(match func {
        Func::Sin => x.sin(),
        Func::Cos => x.cos(),
        Func::Exp => x.exp(),
        Func::Sqrt => {
            if x < 0.0 {
                return Err(ExprError::Domain {
                    t,
                    message: "square root of a negative value",
                });
            }
            x.sqrt()
        }
    })
}

impl From<f64> for TimeExpr {
    fn from(value: f64) -> Self {
        TimeExpr::constant(value)
    }
}

impl std::str::FromStr for TimeExpr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

// Canonical rendering: every compound node is parenthesized, so the output
// reparses to the same tree regardless of precedence.
impl fmt::Display for TimeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => {
                write!(f, "(-{:?})", -c)
            }
            Node::Const(c) => write!(f, "{c:?}"),
            Node::Time => f.write_str("t"),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Add(a, b) => write!(f, "({a} + {b})"),
            Node::Sub(a, b) => write!(f, "({a} - {b})"),
            Node::Mul(a, b) => write!(f, "({a} * {b})"),
            Node::Div(a, b) => write!(f, "({a} / {b})"),
            Node::Pow(a, n) => write!(f, "({a}^{n})"),
            Node::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(src: &str, t: f64) -> f64 {
        parse(src).unwrap().eval(t).unwrap()
    }

    #[test]
    fn evaluates_basic_forms() {
        assert_eq!(at("t^2", 3.0), 9.0);
        assert_eq!(at("cos(12*t)", 0.0), 1.0);
        assert_eq!(at("-t^2", 2.0), -4.0);
        assert!((at("t^3/3", 1.0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(at("sin(1.4142135623730951*t)", 0.0), 0.0);
    }

    #[test]
    fn division_by_zero_is_a_domain_error() {
        let e = parse("1/t").unwrap();
        assert!(matches!(e.eval(0.0), Err(ExprError::Domain { .. })));
        let e = parse("sqrt(t)").unwrap();
        assert!(matches!(e.eval(-1.0), Err(ExprError::Domain { .. })));
        assert!(e.value(-1.0).is_nan());
    }

    #[test]
    fn derivative_examples() {
        let d = parse("t^2").unwrap().differentiate();
        assert_eq!(d.eval(5.0).unwrap(), 10.0);
        let d = parse("cos(12*t)").unwrap().differentiate();
        assert_eq!(d.eval(0.0).unwrap(), 0.0);
        assert!((d.eval(0.1).unwrap() + 12.0 * (1.2f64).sin()).abs() < 1e-12);
        let d = parse("t^3/3").unwrap().differentiate();
        assert!((d.eval(2.0).unwrap() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn higher_derivatives_of_trig() {
        let e = parse("sin(2*t)").unwrap();
        let d4 = e.derivative(4);
        assert!((d4.eval(0.3).unwrap() - 16.0 * (0.6f64).sin()).abs() < 1e-12);
    }

    #[test]
    fn constant_folding() {
        let e = parse("2*3 + t*0").unwrap();
        assert_eq!(e.as_constant(), Some(6.0));
        let e = parse("1*t + 0").unwrap();
        assert_eq!(e.node(), &Node::Time);
        assert!(parse("cos(0)").unwrap().is_one());
        assert!(parse("sin(t)").unwrap().differentiate().differentiate().size() < 8);
    }

    #[test]
    fn rendering_reparses() {
        for src in ["-t^2", "t^3/3 - 2*sin(t)", "exp(-t)*(1-t)^-2", "sqrt(t+4)/-3"] {
            let e = parse(src).unwrap();
            let back = parse(&e.to_string()).unwrap();
            for t in [0.1, 0.7, 1.3] {
                assert_eq!(e.eval(t).unwrap(), back.eval(t).unwrap(), "{src}");
            }
        }
    }

    #[test]
    fn shift_substitutes_time() {
        let e = parse("t^2 + sin(t)").unwrap().shifted(0.5);
        let expected = 1.5f64.powi(2) + 1.5f64.sin();
        assert!((e.eval(1.0).unwrap() - expected).abs() < 1e-14);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn sample(c: &[f64]) -> TimeExpr {
            let t = TimeExpr::time();
            let inner = t.scale(c[1]).add(&TimeExpr::constant(c[2]));
            TimeExpr::call(Func::Sin, &inner)
                .scale(c[0])
                .mul(&TimeExpr::call(Func::Exp, &t.scale(c[3])))
                .add(&t.powi(3).scale(c[4]))
                .add(&TimeExpr::call(Func::Sqrt, &t.mul(&t).add(&TimeExpr::one())).scale(c[5]))
        }

        proptest! {
            #[test]
            fn derivative_matches_finite_difference(
                c in proptest::collection::vec(-2.0f64..2.0, 6),
                t in -1.5f64..1.5,
            ) {
                let e = sample(&c);
                let central = |h: f64| (e.value(t + h) - e.value(t - h)) / (2.0 * h);
                let fd = (4.0 * central(5e-4) - central(1e-3)) / 3.0;
                let exact = e.differentiate().value(t);
                prop_assert!(exact.is_finite());
                prop_assert!((exact - fd).abs() <= 1e-6 * exact.abs().max(1.0), "{exact} vs {fd}");
            }

            #[test]
            fn evaluation_is_finite(c in proptest::collection::vec(-2.0f64..2.0, 6), t in -3.0f64..3.0) {
                prop_assert!(sample(&c).eval(t).unwrap().is_finite());
            }
        }
    }
}
