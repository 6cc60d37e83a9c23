//! Named tolerance presets used by the verification reports.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ode::Tolerance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ToleranceProfile {
    pub name: &'static str,
    /// Endpoint interpolation, relative to `1 + ‖x_{i+1}‖`.
    pub interpolation: f64,
    /// `‖ψ - B u‖`.
    pub maximality: f64,
    /// `‖ψ' + Aᵀψ‖`.
    pub costate: f64,
    /// `‖L*L x‖` for the first-order system.
    pub euler_lagrange: f64,
    /// `|closed-form cost - quadrature cost| / (1 + cost)`.
    pub cost: f64,
    /// Spline boundary-derivative conditions.
    pub boundary: f64,
    /// Relative jump of `s^{(k)}`, `k ≤ 2p-2`, at interior knots.
    pub continuity: f64,
    /// Relative `‖L*L s‖` on each interval.
    pub ode_residual: f64,
    /// Integrator tolerances used when solving under this profile.
    pub rtol: f64,
    pub atol: f64,
}

impl ToleranceProfile {
    pub const STRICT: Self = Self {
        name: "strict",
        interpolation: 1e-7,
        maximality: 1e-8,
        costate: 1e-7,
        euler_lagrange: 1e-5,
        cost: 1e-7,
        boundary: 1e-7,
        continuity: 1e-6,
        ode_residual: 1e-5,
        rtol: 1e-12,
        atol: 1e-14,
    };

    pub const DEFAULT: Self = Self {
        name: "default",
        interpolation: 1e-6,
        maximality: 1e-7,
        costate: 1e-6,
        euler_lagrange: 1e-4,
        cost: 1e-6,
        boundary: 1e-6,
        continuity: 1e-5,
        ode_residual: 1e-4,
        rtol: 1e-10,
        atol: 1e-12,
    };

    pub const LOOSE: Self = Self {
        name: "loose",
        interpolation: 1e-4,
        maximality: 1e-5,
        costate: 1e-4,
        euler_lagrange: 1e-3,
        cost: 1e-4,
        boundary: 1e-4,
        continuity: 1e-3,
        ode_residual: 1e-3,
        rtol: 1e-8,
        atol: 1e-10,
    };

    pub fn integrator(&self) -> Tolerance {
        Tolerance::new(self.rtol, self.atol)
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "strict" => Ok(Self::STRICT),
            "default" => Ok(Self::DEFAULT),
            "loose" => Ok(Self::LOOSE),
            other => Err(Error::InvalidInput(format!(
                "unknown tolerance profile {other:?} (expected strict, default or loose)"
            ))),
        }
    }
}

impl Default for ToleranceProfile {
    fn default() -> Self {
        Self::DEFAULT
    }
}
