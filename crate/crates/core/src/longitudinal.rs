//! Longitudinal truck dynamics: resistances, state equation, engine speed
//! and engine power. Inputs are per unit mass (N/kg), speeds in m/s.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const G: f64 = 9.81;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("gear {0} is outside 1..={1}")]
    InvalidGear(usize, usize),
    #[error("invalid vehicle parameter: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LongitudinalParams {
    /// Vehicle (tractor + body) mass, kg.
    /// Set from the scenario's vehicle section when loaded from a config file.
    #[serde(skip)]
    pub m1: f64,
    #[serde(skip)]
    pub payload: f64,
    pub c_d: f64,
    /// Air density, kg/m³.
    pub sigma: f64,
    /// Frontal area, m².
    pub a_f: f64,
    pub wheel_radius: f64,
    pub i_slip: f64,
    /// Engine speed limits, RPM.
    pub omega_idle: f64,
    pub omega_red: f64,
    pub eta_d: f64,
    pub gear_ratios: Vec<f64>,
    pub g: f64,
}

impl Default for LongitudinalParams {
    fn default() -> Self {
        Self {
            m1: 16030.0,
            payload: 12550.0,
            c_d: 0.8,
            sigma: 1.225,
            a_f: 10.0,
            wheel_radius: 0.5,
            i_slip: 0.05,
            omega_idle: 500.0,
            omega_red: 2100.0,
            eta_d: 0.85,
            gear_ratios: vec![
                11.32, 9.164, 7.194, 5.823, 4.632, 3.750, 3.019, 2.444, 1.918, 1.553, 1.235, 1.000,
            ],
            g: G,
        }
    }
}

impl LongitudinalParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let pos = [
            ("m1", self.m1),
            ("sigma", self.sigma),
            ("a_f", self.a_f),
            ("wheel_radius", self.wheel_radius),
            ("omega_idle", self.omega_idle),
            ("omega_red", self.omega_red),
            ("g", self.g),
        ];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModelError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("payload", self.payload), ("c_d", self.c_d)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ModelError::InvalidParams(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.eta_d > 0.0 && self.eta_d <= 1.0) {
            return Err(ModelError::InvalidParams(format!("eta_d must be in (0, 1], got {}", self.eta_d)));
        }
        if !(0.0..1.0).contains(&self.i_slip) {
            return Err(ModelError::InvalidParams(format!("i_slip must be in [0, 1), got {}", self.i_slip)));
        }
        if self.omega_red <= self.omega_idle {
            return Err(ModelError::InvalidParams("omega_red must exceed omega_idle".into()));
        }
        if self.gear_ratios.is_empty()
            || self.gear_ratios.iter().any(|r| !(*r > 0.0))
            || self.gear_ratios.windows(2).any(|w| w[1] >= w[0])
        {
            return Err(ModelError::InvalidParams("gear_ratios must be positive and strictly decreasing".into()));
        }
        Ok(())
    }

    /// m1 + payload; the mass all force terms are normalised by.
    pub fn effective_mass(&self) -> f64 {
        self.m1 + self.payload
    }

    /// Aerodynamic coefficient k_d such that drag per unit mass is k_d·v².
    pub fn drag_per_mass(&self) -> f64 {
        0.5 * self.c_d * self.sigma * self.a_f / self.effective_mass()
    }

    pub fn gear_ratio(&self, gear: usize) -> Result<f64, ModelError> {
        if gear == 0 || gear > self.gear_ratios.len() {
            return Err(ModelError::InvalidGear(gear, self.gear_ratios.len()));
        }
        Ok(self.gear_ratios[gear - 1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LongitudinalState {
    pub s: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResistanceForces {
    pub roll: f64,
    pub grav: f64,
    pub drag: f64,
    pub total: f64,
}

pub fn rolling_coeff(v: f64) -> f64 {
    0.01 * (1.0 + v.abs() / 576.0)
}

pub fn resistance_forces(p: &LongitudinalParams, mass: f64, v: f64, beta: f64) -> ResistanceForces {
    let roll = rolling_coeff(v) * mass * p.g * beta.cos();
    let grav = mass * p.g * beta.sin();
    let drag = 0.5 * p.c_d * p.sigma * p.a_f * v * v;
    ResistanceForces { roll, grav, drag, total: roll + grav + drag }
}

/// Resistance per unit mass at the effective mass: k_d·v² + g·sinβ + Crr(v)·g·cosβ.
pub fn resistance_per_mass(p: &LongitudinalParams, v: f64, beta: f64) -> f64 {
    p.drag_per_mass() * v * v + p.g * beta.sin() + rolling_coeff(v) * p.g * beta.cos()
}

/// (ṡ, v̇) for traction input `u` (N/kg) on slope `beta`.
pub fn long_derivative(p: &LongitudinalParams, x: LongitudinalState, u: f64, beta: f64) -> (f64, f64) {
    (x.v, u - resistance_per_mass(p, x.v, beta))
}

/// Engine speed in RPM, clamped to [ω_idle, ω_red].
pub fn engine_speed(p: &LongitudinalParams, v: f64, gear: usize) -> Result<f64, ModelError> {
    let xi = p.gear_ratio(gear)?;
    let core = 1000.0 * v * xi / (120.0 * std::f64::consts::PI * p.wheel_radius * (1.0 - p.i_slip));
    Ok(core.max(p.omega_idle).min(p.omega_red))
}

/// Rotating-mass factor 1.04 + 0.0025·ξ².
pub fn inertia_factor(xi: f64) -> f64 {
    1.04 + 0.0025 * xi * xi
}

/// Engine power in kW: (F_res + m·a·(1.04 + 0.0025ξ²))·v / (3600·η_d), m = effective mass.
pub fn engine_power(p: &LongitudinalParams, v: f64, a: f64, gear: usize, f_res: f64) -> Result<f64, ModelError> {
    let xi = p.gear_ratio(gear)?;
    Ok((f_res + p.effective_mass() * a * inertia_factor(xi)) / (3600.0 * p.eta_d) * v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bare() -> LongitudinalParams {
        LongitudinalParams { payload: 0.0, ..Default::default() }
    }

    #[test]
    fn rolling_coeff_values() {
        assert_eq!(rolling_coeff(0.0), 0.01);
        assert!((rolling_coeff(576.0) - 0.02).abs() < 1e-15);
        assert!((rolling_coeff(11.11) - 0.010_192_881_944).abs() < 1e-10);
    }

    #[test]
    fn resistance_examples() {
        let p = bare();
        let r = resistance_forces(&p, 16030.0, 0.0, 0.0);
        assert!((r.roll - 1572.543).abs() < 1e-9);
        assert_eq!(r.grav, 0.0);
        assert_eq!(r.drag, 0.0);
        assert!(resistance_forces(&p, 16030.0, 3.0, -0.05).grav < 0.0);
        assert!((resistance_forces(&p, 16030.0, 10.0, 0.0).drag - 490.0).abs() < 1e-9);
    }

    #[test]
    fn derivative_examples() {
        let p = bare();
        let x0 = LongitudinalState { s: 0.0, v: 0.0 };
        assert!((long_derivative(&p, x0, 0.0, 0.0).1 + 0.0981).abs() < 1e-15);
        assert!((long_derivative(&p, x0, 1.0, 0.0).1 - 0.9019).abs() < 1e-15);
        let x = LongitudinalState { s: 3.0, v: 7.0 };
        let u = resistance_per_mass(&p, 7.0, 0.04);
        let (sd, vd) = long_derivative(&p, x, u, 0.04);
        assert_eq!(sd, 7.0);
        assert!(vd.abs() < 1e-15);
    }

    #[test]
    fn force_balance_matches_state_equation() {
        let p = LongitudinalParams::default();
        let m = p.effective_mass();
        for &(v, beta, u) in &[(0.0, 0.0, 0.3), (5.0, 0.06, 1.0), (12.0, -0.05, -0.4), (20.0, 0.01, 2.0)] {
            let r = resistance_forces(&p, m, v, beta);
            let expect = (m * u - r.total) / m;
            let got = long_derivative(&p, LongitudinalState { s: 0.0, v }, u, beta).1;
            assert!((got - expect).abs() < 1e-14, "{got} vs {expect}");
        }
    }

    #[test]
    fn engine_speed_examples() {
        let p = LongitudinalParams::default();
        assert_eq!(engine_speed(&p, 0.0, 2).unwrap(), 500.0);
        assert_eq!(engine_speed(&p, 1e4, 1).unwrap(), 2100.0);
        let core = 1000.0 * 20.0 / (120.0 * std::f64::consts::PI * 0.5 * 0.95);
        assert!((core - 111.68).abs() < 0.01);
        assert_eq!(engine_speed(&p, 20.0, 12).unwrap(), 500.0);
        assert_eq!(engine_speed(&p, 1.0, 0), Err(ModelError::InvalidGear(0, 12)));
        assert_eq!(engine_speed(&p, 1.0, 13), Err(ModelError::InvalidGear(13, 12)));
    }

    #[test]
    fn engine_power_examples() {
        let p = bare();
        assert_eq!(engine_power(&p, 0.0, 0.3, 2, 5000.0).unwrap(), 0.0);
        assert!((engine_power(&p, 1.0, 0.0, 2, 3600.0 * 0.85).unwrap() - 1.0).abs() < 1e-15);
        let got = engine_power(&p, 10.0, 0.2, 6, 5000.0).unwrap();
        let oracle = (5000.0 + 16030.0 * 0.2 * (1.04 + 0.0025 * 3.75 * 3.75)) / (3600.0 * 0.85) * 10.0;
        assert!((got - oracle).abs() < 1e-12);
    }

    #[test]
    fn default_params_valid() {
        LongitudinalParams::default().validate().unwrap();
        let bad = LongitudinalParams { gear_ratios: vec![1.0, 2.0], ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
