//! Single-track lateral model with path-following error states
//! x = [ẏ, ψ̇, ρ, θ] and steering input α.

use nalgebra::{Matrix4, SMatrix, Vector4};
use serde::{Deserialize, Serialize};

use crate::longitudinal::G;

/// Which form of the (1,2)/(2,2) stiffness entries to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModelVariant {
    /// Entries exactly as published, including the c1-only mixed terms.
    #[default]
    AsPrinted,
    /// Conventional single-track entries (c2 in the rear-axle terms).
    StandardBicycle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LateralParams {
    pub a1: f64,
    pub b1: f64,
    pub l1: f64,
    /// Set from the scenario's vehicle section when loaded from a config file.
    #[serde(skip)]
    pub m1: f64,
    #[serde(skip)]
    pub payload: f64,
    /// Yaw inertia, kg·m².
    pub j1: f64,
    /// Normalised cornering stiffness, 1/rad.
    pub f1: f64,
    pub f2: f64,
    pub v_floor: f64,
}

impl Default for LateralParams {
    fn default() -> Self {
        Self {
            a1: 3.19,
            b1: 1.62,
            l1: 4.81,
            m1: 16030.0,
            payload: 12550.0,
            j1: 215717.0,
            f1: 5.73,
            f2: 5.73,
            v_floor: 1.38,
        }
    }
}

impl LateralParams {
    pub fn total_mass(&self) -> f64 {
        self.m1 + self.payload
    }

    pub fn validate(&self) -> Result<(), String> {
        for (n, v) in [
            ("a1", self.a1),
            ("b1", self.b1),
            ("l1", self.l1),
            ("m1", self.m1),
            ("j1", self.j1),
            ("f1", self.f1),
            ("f2", self.f2),
            ("v_floor", self.v_floor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{n} must be positive, got {v}"));
            }
        }
        if !(self.payload >= 0.0) {
            return Err(format!("payload must be >= 0, got {}", self.payload));
        }
        if (self.a1 + self.b1 - self.l1).abs() > 1e-6 {
            return Err(format!("l1 = {} differs from a1 + b1 = {}", self.l1, self.a1 + self.b1));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxleLoads {
    pub fz1: f64,
    pub fz2: f64,
    pub c1: f64,
    pub c2: f64,
}

pub fn axle_loads_and_stiffness(p: &LateralParams, total_mass: f64) -> AxleLoads {
    let fz1 = total_mass * G * p.b1 / p.l1;
    let fz2 = total_mass * G * p.a1 / p.l1;
    AxleLoads { fz1, fz2, c1: p.f1 * fz1, c2: p.f2 * fz2 }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LateralState {
    pub y_dot: f64,
    pub psi_dot: f64,
    pub rho: f64,
    pub theta: f64,
}

impl LateralState {
    pub fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.y_dot, self.psi_dot, self.rho, self.theta)
    }
}

/// Continuous (F, G) and, once discretised, (F_d, G_d) at period `ts`.
/// Before `discretize` runs, `fd` is the identity, `gd` zero and `ts` 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LateralSystem {
    pub f: Matrix4<f64>,
    pub g: Vector4<f64>,
    pub fd: Matrix4<f64>,
    pub gd: Vector4<f64>,
    pub ts: f64,
    pub v_used: f64,
}

/// Mass matrix diag(m, J1, 1, 1) with m = m1 + payload.
pub fn mass_matrix(p: &LateralParams) -> Matrix4<f64> {
    Matrix4::from_diagonal(&Vector4::new(p.total_mass(), p.j1, 1.0, 1.0))
}

/// State matrix A(v) of M·ẋ = A·x + B·α. `v` is used as given (no floor).
pub fn state_matrix(p: &LateralParams, v: f64, variant: ModelVariant) -> Matrix4<f64> {
    let m = p.total_mass();
    let AxleLoads { c1, c2, .. } = axle_loads_and_stiffness(p, m);
    let (a1, b1) = (p.a1, p.b1);
    let (a12, a22) = match variant {
        ModelVariant::AsPrinted => (b1 * c1 - a1 * c1 - m * v * v, -a1 * a1 * c1 - b1 * b1 * c1),
        ModelVariant::StandardBicycle => (b1 * c2 - a1 * c1 - m * v * v, -a1 * a1 * c1 - b1 * b1 * c2),
    };
    Matrix4::new(
        (-c1 - c2) / v, a12 / v, 0.0, 0.0,
        (b1 * c2 - a1 * c1) / v, a22 / v, 0.0, 0.0,
        1.0, 0.0, 0.0, v,
        0.0, 1.0, 0.0, 0.0,
    )
}

pub fn input_vector(p: &LateralParams) -> Vector4<f64> {
    let c1 = axle_loads_and_stiffness(p, p.total_mass()).c1;
    Vector4::new(c1, p.a1 * c1, 0.0, 0.0)
}

/// F = M⁻¹A, G = M⁻¹B at max(v, v_floor).
pub fn continuous_matrices(p: &LateralParams, v: f64, variant: ModelVariant) -> LateralSystem {
    let v_used = v.max(p.v_floor);
    let minv = Vector4::new(1.0 / p.total_mass(), 1.0 / p.j1, 1.0, 1.0);
    let a = state_matrix(p, v_used, variant);
    let b = input_vector(p);
    let mut f = a;
    for r in 0..4 {
        for c in 0..4 {
            f[(r, c)] *= minv[r];
        }
    }
    let g = b.component_mul(&minv);
    LateralSystem { f, g, fd: Matrix4::identity(), gd: Vector4::zeros(), ts: 0.0, v_used }
}

/// exp(M) by scaling and squaring with a Taylor series truncated once the
/// next term falls below 1e-17 of the running sum.
pub fn expm<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    let norm = m.abs().row_sum().max();
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let a = m * scale;
    let mut sum = SMatrix::<f64, N, N>::identity();
    let mut term = SMatrix::<f64, N, N>::identity();
    for k in 1..40 {
        term = term * a / k as f64;
        sum += term;
        if term.abs().max() <= 1e-17 * sum.abs().max() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

/// Zero-order-hold discretisation with v frozen over the step.
pub fn discretize(sys: &LateralSystem, ts: f64) -> LateralSystem {
    let mut aug = SMatrix::<f64, 5, 5>::zeros();
    aug.fixed_view_mut::<4, 4>(0, 0).copy_from(&(sys.f * ts));
    aug.fixed_view_mut::<4, 1>(0, 4).copy_from(&(sys.g * ts));
    let e = expm(&aug);
    LateralSystem {
        fd: e.fixed_view::<4, 4>(0, 0).into_owned(),
        gd: e.fixed_view::<4, 1>(0, 4).into_owned(),
        ts,
        ..*sys
    }
}

/// Convenience: continuous model at `v` discretised at `ts`.
pub fn discrete_model(p: &LateralParams, v: f64, variant: ModelVariant, ts: f64) -> LateralSystem {
    discretize(&continuous_matrices(p, v, variant), ts)
}
