//! Parameterized terminal models: equilibrium solving, numerical
//! linearization to a dq admittance, and impedance-parameter sensitivity.
//!
//! Convention: the terminal relation is oriented as `dv = Z di` with the
//! current flowing *into* the apparatus. Model state equations are written in
//! the global synchronous dq frame; internal frames (PLL, droop) appear as
//! angle states.

mod catalog;
mod equilibrium;
mod linearize;

pub use catalog::{catalog_kinds, parameter_bounds, ParameterBound};
pub use equilibrium::find_equilibrium;
pub use linearize::linearize_admittance;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::ApparatusError;
use crate::lti::{ComplexFrequency, StateSpaceForm};

/// Terminal operating point: active/reactive power injected into the grid and
/// the terminal voltage phasor (magnitude, angle).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setpoint {
    pub p: f64,
    pub q: f64,
    pub v: f64,
    pub angle: f64,
}

impl Default for Setpoint {
    fn default() -> Self {
        Self {
            p: 0.0,
            q: 0.0,
            v: 1.0,
            angle: 0.0,
        }
    }
}

impl Setpoint {
    /// Terminal voltage in global dq coordinates.
    pub fn voltage_dq(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.v * self.angle.cos(), self.v * self.angle.sin()])
    }
}

/// Nonlinear terminal dynamics `x' = f(x, v)`, `i = g(x, v)` with `i` flowing
/// into the apparatus, both in global dq coordinates.
pub trait ApparatusDynamics: Send + Sync {
    fn kind(&self) -> &'static str;
    fn state_count(&self) -> usize;
    fn state_names(&self) -> Vec<String>;
    fn parameter_names(&self) -> Vec<&'static str>;
    fn parameter(&self, name: &str) -> Option<f64>;
    fn derivatives(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;
    fn output_current(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;
    /// Starting point for the Newton solve at terminal voltage `v`.
    fn initial_guess(&self, v: &DVector<f64>) -> Result<DVector<f64>, ApparatusError>;
    /// Same kind and setpoint with one parameter replaced; bounds are not
    /// re-checked (perturbation steps may leave the catalog range).
    fn with_parameter(
        &self,
        name: &str,
        value: f64,
    ) -> Result<Box<dyn ApparatusDynamics>, ApparatusError>;
}

/// Linearization of an apparatus at its equilibrium: the admittance-oriented
/// realization (input dv, output di into the apparatus) plus the operating
/// point it was taken at.
#[derive(Debug, Clone)]
pub struct TerminalModel {
    pub x0: DVector<f64>,
    pub v0: DVector<f64>,
    pub admittance: StateSpaceForm,
}

impl TerminalModel {
    pub fn admittance_at(&self, s: ComplexFrequency) -> Result<DMatrix<Complex64>, ApparatusError> {
        Ok(self.admittance.eval(s)?)
    }

    /// Terminal impedance `Z(s) = Y(s)^{-1}`, evaluated pointwise. Exact for
    /// improper impedances (series inductance) that no proper state space can
    /// carry.
    pub fn impedance_at(&self, s: ComplexFrequency) -> Result<DMatrix<Complex64>, ApparatusError> {
        invert_small(&self.admittance.eval(s)?).ok_or_else(|| {
            ApparatusError::Orientation {
                kind: format!("admittance singular at s = {}", s.value()),
            }
        })
    }

    /// Impedance-oriented realization. Exists only when the admittance
    /// feedthrough is invertible.
    pub fn impedance_realization(&self) -> Result<StateSpaceForm, ApparatusError> {
        let d = self.admittance.d();
        let d_inv = d.clone().try_inverse().ok_or(ApparatusError::Orientation {
            kind: "admittance feedthrough is singular".into(),
        })?;
        let a = self.admittance.a() - self.admittance.b() * &d_inv * self.admittance.c();
        let b = self.admittance.b() * &d_inv;
        let c = -&d_inv * self.admittance.c();
        Ok(StateSpaceForm::new(a, b, c, d_inv)?)
    }
}

/// Matrix inverse that rejects non-finite results.
pub fn invert_small(m: &DMatrix<Complex64>) -> Option<DMatrix<Complex64>> {
    m.clone().try_inverse().filter(|inv| {
        inv.iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    })
}

/// Sensitivity of the terminal impedance to one named parameter, evaluated at
/// a single complex frequency.
#[derive(Debug, Clone)]
pub struct ImpedanceSensitivity {
    pub parameter: String,
    pub lambda: Complex64,
    pub matrix: DMatrix<Complex64>,
}

/// A fully built apparatus: dynamics, solved equilibrium and linearization.
pub struct ApparatusInstance {
    dynamics: Box<dyn ApparatusDynamics>,
    setpoint: Setpoint,
    terminal: TerminalModel,
}

impl std::fmt::Debug for ApparatusInstance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ApparatusInstance")
            .field("kind", &self.dynamics.kind())
            .field("states", &self.dynamics.state_count())
            .finish()
    }
}

impl ApparatusInstance {
    /// Build from a catalog kind: validate parameters, solve the equilibrium
    /// at the setpoint voltage, linearize. `omega0` is the synchronous base
    /// frequency in rad/s.
    pub fn build(
        kind: &str,
        params: &BTreeMap<String, f64>,
        setpoint: Setpoint,
        omega0: f64,
    ) -> Result<Self, ApparatusError> {
        let dynamics = catalog::build(kind, params, setpoint, omega0, true)?;
        Self::from_dynamics(dynamics, setpoint)
    }

    fn from_dynamics(
        dynamics: Box<dyn ApparatusDynamics>,
        setpoint: Setpoint,
    ) -> Result<Self, ApparatusError> {
        let v0 = setpoint.voltage_dq();
        let x0 = find_equilibrium(dynamics.as_ref(), &v0)?;
        let admittance = linearize_admittance(dynamics.as_ref(), &x0, &v0)?;
        Ok(Self {
            dynamics,
            setpoint,
            terminal: TerminalModel {
                x0,
                v0,
                admittance,
            },
        })
    }

    pub fn kind(&self) -> &'static str {
        self.dynamics.kind()
    }

    pub fn setpoint(&self) -> Setpoint {
        self.setpoint
    }

    pub fn terminal(&self) -> &TerminalModel {
        &self.terminal
    }

    pub fn dynamics(&self) -> &dyn ApparatusDynamics {
        self.dynamics.as_ref()
    }

    pub fn state_count(&self) -> usize {
        self.dynamics.state_count()
    }

    pub fn state_names(&self) -> Vec<String> {
        self.dynamics.state_names()
    }

    pub fn parameter_names(&self) -> Vec<&'static str> {
        self.dynamics.parameter_names()
    }

    pub fn parameter(&self, name: &str) -> Option<f64> {
        self.dynamics.parameter(name)
    }

    /// Rebuild with one parameter changed: re-solve the equilibrium and
    /// re-linearize, so the operating-point movement is part of the result.
    pub fn with_parameter(&self, name: &str, value: f64) -> Result<Self, ApparatusError> {
        let dynamics = self.dynamics.with_parameter(name, value)?;
        Self::from_dynamics(dynamics, self.setpoint)
    }

    /// Forward-difference impedance-parameter sensitivity with the step
    /// `1e-5 * (1 + |rho|)`, re-solving the perturbed equilibrium.
    pub fn parameter_sensitivity(
        &self,
        name: &str,
        lambda: ComplexFrequency,
    ) -> Result<ImpedanceSensitivity, ApparatusError> {
        let rho = self
            .parameter(name)
            .ok_or_else(|| ApparatusError::UnknownParameter {
                kind: self.kind().into(),
                name: name.into(),
            })?;
        let step = 1e-5 * (1.0 + rho.abs());
        let perturbed =
            self.with_parameter(name, rho + step)
                .map_err(|e| ApparatusError::PerturbedEquilibrium {
                    kind: self.kind().into(),
                    name: name.into(),
                    source: Box::new(e),
                })?;
        let z0 = self.terminal.impedance_at(lambda)?;
        let z1 = perturbed.terminal.impedance_at(lambda)?;
        Ok(ImpedanceSensitivity {
            parameter: name.into(),
            lambda: lambda.value(),
            matrix: (z1 - z0).map(|z| z / step),
        })
    }
}
