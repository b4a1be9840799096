//! Longitudinal speed planner: nonlinear MPC over (s, v) solved by the
//! continuation/GMRES method.
//!
//! Per stage the unknowns are (u, u_slk, μ): traction per unit mass, a slack
//! input that turns |u| ≤ u_max into u² + u_slk² = u_max², and the multiplier
//! of that equality. The optimality system F(U, x) = 0 stacks
//! [H_u, H_uslk, C] over the N stages; the planner tracks its root with
//! U̇ = F_U⁻¹(−ζF − F_x·ẋ), all Jacobian products by forward differences.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gmres::gmres;
use crate::longitudinal::{inertia_factor, rolling_coeff, LongitudinalParams, LongitudinalState, ModelError, G};
use crate::path::PathMap;

const EXP_CLAMP: f64 = 50.0;

#[derive(Debug, Error, PartialEq)]
pub enum NmpcError {
    #[error("optimality residual is not finite")]
    NonFiniteResidual,
    #[error("invalid planner configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NmpcConfig {
    /// Prediction horizon T, s.
    pub horizon: f64,
    /// Horizon stages N.
    pub steps: usize,
    pub kmax: usize,
    pub zeta: f64,
    pub h_fd: f64,
    /// Traction bound, N/kg. Used directly unless `m_ta` > 0.
    pub u_max: f64,
    pub a_lat_max: f64,
    pub v_ref: f64,
    pub v_lim: f64,
    /// Road adhesion γ.
    pub gamma: f64,
    /// Mass on the driven axle, kg. 0 means unknown: use `u_max`.
    pub m_ta: f64,
    /// Half window of the slope estimate, m.
    pub delta_s: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    pub w5: f64,
    pub w_slk: f64,
    /// Deceleration used to taper the speed target to zero at the path end,
    /// m/s². 0 disables the taper.
    pub goal_decel: f64,
    /// Planner period, s.
    pub period: f64,
    pub warm_start_iters: usize,
}

impl Default for NmpcConfig {
    fn default() -> Self {
        Self {
            horizon: 10.0,
            steps: 20,
            kmax: 10,
            zeta: 10.0,
            h_fd: 1e-6,
            u_max: 4.5,
            a_lat_max: 0.5,
            v_ref: 20.0 / 3.6,
            v_lim: 25.0 / 3.6,
            gamma: 0.3,
            m_ta: 0.0,
            delta_s: 20.0,
            w1: 30.0,
            w2: 2.5,
            w3: 1.0,
            w4: 1.0,
            w5: 0.02,
            w_slk: 0.25,
            goal_decel: 0.3,
            period: 0.1,
            warm_start_iters: 50,
        }
    }
}

impl NmpcConfig {
    pub fn validate(&self) -> Result<(), NmpcError> {
        let bad = |m: &str| Err(NmpcError::InvalidConfig(m.to_string()));
        if !(self.horizon > 0.0) || self.steps == 0 || self.kmax == 0 {
            return bad("horizon, steps and kmax must be positive");
        }
        if !(self.zeta > 0.0 && self.h_fd > 0.0 && self.u_max > 0.0 && self.w_slk > 0.0) {
            return bad("zeta, h_fd, u_max and w_slk must be positive");
        }
        if !(self.a_lat_max > 0.0 && self.delta_s > 0.0 && self.period > 0.0) {
            return bad("a_lat_max, delta_s and period must be positive");
        }
        if !(self.v_ref >= 0.0 && self.v_lim > 0.0 && self.goal_decel >= 0.0) {
            return bad("v_ref >= 0, v_lim > 0 and goal_decel >= 0 required");
        }
        if [self.w1, self.w2, self.w3, self.w4, self.w5].iter().any(|w| !(*w >= 0.0)) {
            return bad("weights must be non-negative");
        }
        if self.m_ta < 0.0 || self.gamma < 0.0 {
            return bad("m_ta and gamma must be non-negative");
        }
        Ok(())
    }

    /// Horizon step T/N.
    pub fn dtau(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Effective traction bound for a vehicle of mass `m_total`.
    pub fn effective_u_max(&self, m_total: f64) -> f64 {
        if self.m_ta > 0.0 {
            traction_limit(self.gamma, self.m_ta, m_total)
        } else {
            self.u_max
        }
    }
}

/// Largest traction per unit mass the driven axle can transmit.
pub fn traction_limit(gamma: f64, m_ta: f64, m_total: f64) -> f64 {
    gamma * m_ta * G / m_total
}

/// (u² + u_slk² − u_max²) / 2
pub fn constraint_residual(u: f64, u_slk: f64, u_max: f64) -> f64 {
    0.5 * (u * u + u_slk * u_slk - u_max * u_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
    pub j4: f64,
    pub j5: f64,
    pub j_slk: f64,
}

impl CostBreakdown {
    /// J1 + … + J5 − J_slk
    pub fn total(&self) -> f64 {
        self.j1 + self.j2 + self.j3 + self.j4 + self.j5 - self.j_slk
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianGradients {
    /// (∂H/∂u, ∂H/∂u_slk)
    pub h_u: [f64; 2],
    /// (∂H/∂s, ∂H/∂v)
    pub h_x: [f64; 2],
    /// True if any exponent hit the clamp (its gradient is then zero).
    pub clamped: bool,
}

fn clamped_exp(z: f64) -> (f64, f64, bool) {
    if z > EXP_CLAMP {
        (EXP_CLAMP.exp(), 0.0, true)
    } else {
        let e = z.exp();
        (e, e, false)
    }
}

/// Path-dependent quantities at s and their s-derivatives.
#[derive(Debug, Clone, Copy)]
struct PathTerms {
    beta: f64,
    dbeta: f64,
    kappa: f64,
    dkappa: f64,
    vt: f64,
    dvt: f64,
}

/// Everything the stage functions need, bundled for one planner call.
#[derive(Debug, Clone, Copy)]
struct Ocp<'a> {
    cfg: &'a NmpcConfig,
    model: &'a LongitudinalParams,
    path: &'a PathMap,
    mass: f64,
    kd: f64,
    k_xi: f64,
    u_max: f64,
}

#[derive(Debug, Clone, Copy)]
struct StageEval {
    sdot: f64,
    vdot: f64,
    h_u: f64,
    h_us: f64,
    h_s: f64,
    h_v: f64,
    hamiltonian: f64,
    costs: CostBreakdown,
    clamped: bool,
}

impl<'a> Ocp<'a> {
    fn new(cfg: &'a NmpcConfig, model: &'a LongitudinalParams, path: &'a PathMap, gear: usize) -> Result<Self, ModelError> {
        let xi = model.gear_ratio(gear)?;
        Ok(Self {
            cfg,
            model,
            path,
            mass: model.effective_mass(),
            kd: model.drag_per_mass(),
            k_xi: inertia_factor(xi),
            u_max: cfg.effective_u_max(model.effective_mass()),
        })
    }

    fn v_target(&self, s: f64) -> (f64, f64) {
        let c = self.cfg;
        if c.goal_decel <= 0.0 {
            return (c.v_ref, 0.0);
        }
        let rem = self.path.total_length() - s;
        if rem <= 0.0 {
            return (0.0, 0.0);
        }
        let taper = (2.0 * c.goal_decel * rem).sqrt();
        if taper < c.v_ref {
            (taper, -c.goal_decel / taper.max(0.1))
        } else {
            (c.v_ref, 0.0)
        }
    }

    fn path_terms(&self, s: f64) -> PathTerms {
        let ds = self.cfg.delta_s;
        let h = 0.5 * ds;
        let p = self.path;
        let beta = p.slope_at(s, ds);
        let dbeta = (p.slope_at(s + h, ds) - p.slope_at(s - h, ds)) / (2.0 * h);
        let kappa = p.curvature_at(s);
        let dkappa = (p.curvature_at(s + h) - p.curvature_at(s - h)) / (2.0 * h);
        let (vt, dvt) = self.v_target(s);
        PathTerms { beta, dbeta, kappa, dkappa, vt, dvt }
    }

    /// Stage dynamics, Hamiltonian and its gradients at (s, v, u, u_slk, μ, λ).
    #[allow(clippy::too_many_arguments)]
    fn stage(&self, pt: &PathTerms, v: f64, u: f64, us: f64, mu: f64, lam_s: f64, lam_v: f64) -> StageEval {
        let c = self.cfg;
        let g = self.model.g;
        let (sb, cb) = pt.beta.sin_cos();
        let crr = rolling_coeff(v);
        let dcrr = 0.01 / 576.0 * v.signum();
        let res = self.kd * v * v + g * sb + crr * g * cb;
        let res_v = 2.0 * self.kd * v + dcrr * g * cb;
        let res_s = (g * cb - crr * g * sb) * pt.dbeta;
        let a = u - res;

        // J1 on the traction-side acceleration a + g·sinβ
        let e1 = a + g * sb;
        let e1_v = -2.0 * self.kd * v - dcrr * g * cb;
        let e1_s = crr * g * sb * pt.dbeta;
        let j1 = 0.5 * c.w1 * e1 * e1;

        let dv = v - pt.vt;
        let j2 = 0.5 * c.w2 * dv * dv;

        let z3 = c.w3 * (v * v * pt.kappa - c.a_lat_max);
        let (j3, g3, cl3) = clamped_exp(z3);
        let z4 = c.w4 * (v - c.v_lim);
        let (j4, g4, cl4) = clamped_exp(z4);

        // engine power, kW: m·v·(kξ·u + (1 − kξ)·R) / (3600 η)
        let scale = self.mass / (3600.0 * self.model.eta_d);
        let inner = self.k_xi * u + (1.0 - self.k_xi) * res;
        let power = scale * v * inner;
        let (j5, g5, cl5) = clamped_exp(c.w5 * power);
        let p_u = scale * v * self.k_xi;
        let p_v = scale * (inner + v * (1.0 - self.k_xi) * res_v);
        let p_s = scale * v * (1.0 - self.k_xi) * res_s;

        let j_slk = c.w_slk * us;
        let cons = constraint_residual(u, us, self.u_max);
        let costs = CostBreakdown { j1, j2, j3, j4, j5, j_slk };

        let h_u = c.w1 * e1 + g5 * c.w5 * p_u + lam_v + mu * u;
        let h_us = -c.w_slk + mu * us;
        let h_v = c.w1 * e1 * e1_v
            + c.w2 * dv
            + g3 * c.w3 * 2.0 * v * pt.kappa
            + g4 * c.w4
            + g5 * c.w5 * p_v
            + lam_s
            - lam_v * res_v;
        let h_s = c.w1 * e1 * e1_s - c.w2 * dv * pt.dvt + g3 * c.w3 * v * v * pt.dkappa + g5 * c.w5 * p_s
            - lam_v * res_s;
        StageEval {
            sdot: v,
            vdot: a,
            h_u,
            h_us,
            h_s,
            h_v,
            hamiltonian: costs.total() + lam_s * v + lam_v * a + mu * cons,
            costs,
            clamped: cl3 || cl4 || cl5,
        }
    }

    /// F(U, x): forward Euler roll-out, backward costates, stacked conditions.
    fn residual(&self, u: &[f64], x: LongitudinalState, out: &mut [f64]) {
        let n = self.cfg.steps;
        let dt = self.cfg.dtau();
        let mut xs = Vec::with_capacity(n);
        let mut terms = Vec::with_capacity(n);
        let (mut s, mut v) = (x.s, x.v);
        for i in 0..n {
            let pt = self.path_terms(s);
            xs.push((s, v));
            terms.push(pt);
            let (sb, cb) = pt.beta.sin_cos();
            let a = u[3 * i] - (self.kd * v * v + self.model.g * sb + rolling_coeff(v) * self.model.g * cb);
            s += v * dt;
            v += a * dt;
        }
        let (mut ls, mut lv) = (0.0, 0.0);
        for i in (0..n).rev() {
            let (_, vi) = xs[i];
            let e = self.stage(&terms[i], vi, u[3 * i], u[3 * i + 1], u[3 * i + 2], ls, lv);
            out[3 * i] = e.h_u;
            out[3 * i + 1] = e.h_us;
            out[3 * i + 2] = constraint_residual(u[3 * i], u[3 * i + 1], self.u_max);
            ls += e.h_s * dt;
            lv += e.h_v * dt;
        }
    }

    /// Predicted states x_0 .. x_N under U.
    fn rollout(&self, u: &[f64], x: LongitudinalState) -> Vec<LongitudinalState> {
        let dt = self.cfg.dtau();
        let mut out = Vec::with_capacity(self.cfg.steps + 1);
        let mut cur = x;
        out.push(cur);
        for i in 0..self.cfg.steps {
            let pt = self.path_terms(cur.s);
            let e = self.stage(&pt, cur.v, u[3 * i], u[3 * i + 1], u[3 * i + 2], 0.0, 0.0);
            cur = LongitudinalState { s: cur.s + e.sdot * dt, v: cur.v + e.vdot * dt };
            out.push(cur);
        }
        out
    }
}

/// Cost terms at one point for a given acceleration `a`.
pub fn stage_cost(
    cfg: &NmpcConfig,
    model: &LongitudinalParams,
    x: LongitudinalState,
    a: f64,
    u_slk: f64,
    path: &PathMap,
    gear: usize,
) -> Result<CostBreakdown, ModelError> {
    let ocp = Ocp::new(cfg, model, path, gear)?;
    let pt = ocp.path_terms(x.s);
    // a = u − R  ⇒  u = a + R
    let res = ocp.kd * x.v * x.v + model.g * pt.beta.sin() + rolling_coeff(x.v) * model.g * pt.beta.cos();
    Ok(ocp.stage(&pt, x.v, a + res, u_slk, 0.0, 0.0, 0.0).costs)
}

/// H = J + λᵀf + μ·C at one point.
#[allow(clippy::too_many_arguments)]
pub fn hamiltonian(
    cfg: &NmpcConfig,
    model: &LongitudinalParams,
    x: LongitudinalState,
    lambda: [f64; 2],
    u: f64,
    u_slk: f64,
    mu: f64,
    path: &PathMap,
    gear: usize,
) -> Result<f64, ModelError> {
    let ocp = Ocp::new(cfg, model, path, gear)?;
    let pt = ocp.path_terms(x.s);
    Ok(ocp.stage(&pt, x.v, u, u_slk, mu, lambda[0], lambda[1]).hamiltonian)
}

/// Analytic partial derivatives of H with respect to the inputs and the state.
#[allow(clippy::too_many_arguments)]
pub fn hamiltonian_gradients(
    cfg: &NmpcConfig,
    model: &LongitudinalParams,
    x: LongitudinalState,
    lambda: [f64; 2],
    u: f64,
    u_slk: f64,
    mu: f64,
    path: &PathMap,
    gear: usize,
) -> Result<HamiltonianGradients, ModelError> {
    let ocp = Ocp::new(cfg, model, path, gear)?;
    let pt = ocp.path_terms(x.s);
    let e = ocp.stage(&pt, x.v, u, u_slk, mu, lambda[0], lambda[1]);
    Ok(HamiltonianGradients { h_u: [e.h_u, e.h_us], h_x: [e.h_s, e.h_v], clamped: e.clamped })
}

/// Stacked optimality conditions [H_u, H_uslk, C] for every stage.
pub fn optimality_residual(
    cfg: &NmpcConfig,
    model: &LongitudinalParams,
    u: &[f64],
    x: LongitudinalState,
    path: &PathMap,
    gear: usize,
) -> Result<Vec<f64>, ModelError> {
    let ocp = Ocp::new(cfg, model, path, gear)?;
    let mut out = vec![0.0; 3 * cfg.steps];
    ocp.residual(u, x, &mut out);
    Ok(out)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmpcSolverState {
    /// [u₀, u_slk,₀, μ₀, …, u_{N−1}, u_slk,N−1, μ_{N−1}]
    pub u: Vec<f64>,
    pub last_solve_time: f64,
    /// ‖F(U, x + ẋ·dt)‖ after the last update, i.e. at the state U was advanced to.
    pub residual_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanOutput {
    pub u_cmd: f64,
    pub v_next_ref: f64,
    pub residual_norm: f64,
    pub costs: CostBreakdown,
    pub u_slk: f64,
    pub mu: f64,
    /// max over stages of |u² + u_slk² − u_max²|
    pub constraint_violation: f64,
}

/// Planner instance: configuration, controller-side vehicle model and solver state.
#[derive(Debug, Clone)]
pub struct NmpcPlanner {
    pub cfg: NmpcConfig,
    pub model: LongitudinalParams,
    pub gear: usize,
    pub state: NmpcSolverState,
    initialized: bool,
    clock: f64,
}

impl NmpcPlanner {
    pub fn new(cfg: NmpcConfig, model: LongitudinalParams, gear: usize) -> Result<Self, NmpcError> {
        cfg.validate()?;
        model.validate()?;
        model.gear_ratio(gear)?;
        let m = 3 * cfg.steps;
        let u_max = cfg.effective_u_max(model.effective_mass());
        let mut u = vec![0.0; m];
        for i in 0..cfg.steps {
            u[3 * i + 1] = u_max;
            u[3 * i + 2] = cfg.w_slk / u_max;
        }
        Ok(Self {
            cfg,
            model,
            gear,
            state: NmpcSolverState { u, last_solve_time: 0.0, residual_norm: f64::NAN },
            initialized: false,
            clock: 0.0,
        })
    }

    pub fn u_max(&self) -> f64 {
        self.cfg.effective_u_max(self.model.effective_mass())
    }

    fn ocp<'a>(&'a self, path: &'a PathMap) -> Ocp<'a> {
        Ocp::new(&self.cfg, &self.model, path, self.gear).expect("gear validated at construction")
    }

    /// Replaces U (e.g. with an externally computed solution).
    pub fn set_solution(&mut self, u: Vec<f64>) {
        assert_eq!(u.len(), 3 * self.cfg.steps);
        self.state.u = u;
        self.initialized = true;
    }

    pub fn residual(&self, x: LongitudinalState, path: &PathMap) -> Vec<f64> {
        let mut out = vec![0.0; 3 * self.cfg.steps];
        self.ocp(path).residual(&self.state.u, x, &mut out);
        out
    }

    /// Damped Newton-GMRES on F(U, x) = 0 with x frozen.
    pub fn warm_start(&mut self, x: LongitudinalState, path: &PathMap) -> Result<(), NmpcError> {
        let ocp = self.ocp(path);
        let m = 3 * self.cfg.steps;
        let h = self.cfg.h_fd;
        let mut u = self.state.u.clone();
        let mut f = vec![0.0; m];
        ocp.residual(&u, x, &mut f);
        let mut fnorm = norm(&f);
        let mut trial = vec![0.0; m];
        let mut ft = vec![0.0; m];
        for _ in 0..self.cfg.warm_start_iters {
            if fnorm < 1e-10 {
                break;
            }
            let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
            let step = gmres(
                |w, out| {
                    for k in 0..m {
                        trial[k] = u[k] + h * w[k];
                    }
                    ocp.residual(&trial, x, out);
                    for k in 0..m {
                        out[k] = (out[k] - f[k]) / h;
                    }
                },
                &rhs,
                m,
            );
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..12 {
                for k in 0..m {
                    trial[k] = u[k] + alpha * step.x[k];
                }
                ocp.residual(&trial, x, &mut ft);
                let tn = norm(&ft);
                if tn.is_finite() && tn < (1.0 - 1e-4 * alpha) * fnorm {
                    u.copy_from_slice(&trial);
                    f.copy_from_slice(&ft);
                    fnorm = tn;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if !fnorm.is_finite() || u.iter().any(|v| !v.is_finite()) {
            return Err(NmpcError::NonFiniteResidual);
        }
        self.state.u = u;
        self.state.residual_norm = fnorm;
        self.initialized = true;
        Ok(())
    }

    /// One continuation update U ← U + U̇·dt for measured x and state rate ẋ.
    /// With ẋ = 0 the recorded residual is ‖F(U_new, x)‖.
    pub fn cgmres_step(
        &mut self,
        x: LongitudinalState,
        x_dot: (f64, f64),
        path: &PathMap,
        dt: f64,
    ) -> Result<(), NmpcError> {
        let ocp = self.ocp(path);
        let m = 3 * self.cfg.steps;
        let h = self.cfg.h_fd;
        let u = &self.state.u;
        let mut f0 = vec![0.0; m];
        ocp.residual(u, x, &mut f0);
        let xh = LongitudinalState { s: x.s + h * x_dot.0, v: x.v + h * x_dot.1 };
        let mut fxh = vec![0.0; m];
        ocp.residual(u, xh, &mut fxh);
        let b: Vec<f64> = (0..m).map(|k| -self.cfg.zeta * f0[k] - (fxh[k] - f0[k]) / h).collect();
        let mut trial = vec![0.0; m];
        let sol = gmres(
            |w, out| {
                for k in 0..m {
                    trial[k] = u[k] + h * w[k];
                }
                ocp.residual(&trial, xh, out);
                for k in 0..m {
                    out[k] = (out[k] - fxh[k]) / h;
                }
            },
            &b,
            self.cfg.kmax,
        );
        let next: Vec<f64> = (0..m).map(|k| u[k] + sol.x[k] * dt).collect();
        let mut f1 = vec![0.0; m];
        let xp = LongitudinalState { s: x.s + dt * x_dot.0, v: x.v + dt * x_dot.1 };
        ocp.residual(&next, xp, &mut f1);
        let r = norm(&f1);
        if !r.is_finite() || next.iter().any(|v| !v.is_finite()) {
            return Err(NmpcError::NonFiniteResidual);
        }
        self.state.u = next;
        self.state.residual_norm = r;
        self.clock += dt;
        self.state.last_solve_time = self.clock;
        Ok(())
    }

    /// Predicted horizon states under the current U.
    pub fn prediction(&self, x: LongitudinalState, path: &PathMap) -> Vec<LongitudinalState> {
        self.ocp(path).rollout(&self.state.u, x)
    }

    /// One planner tick: warm start on first use, then a continuation step.
    /// Returns the clamped first input and the first predicted velocity.
    pub fn plan_velocity(&mut self, s: f64, v: f64, path: &PathMap) -> Result<PlanOutput, NmpcError> {
        let x = LongitudinalState { s, v };
        if !self.initialized {
            self.warm_start(x, path)?;
        }
        let xdot = {
            let ocp = self.ocp(path);
            let pt = ocp.path_terms(s);
            let u0 = &self.state.u;
            let e = ocp.stage(&pt, v, u0[0], u0[1], u0[2], 0.0, 0.0);
            (e.sdot, e.vdot)
        };
        self.cgmres_step(x, xdot, path, self.cfg.period)?;

        let ocp = self.ocp(path);
        let u = &self.state.u;
        let u_max = ocp.u_max;
        let pt = ocp.path_terms(s);
        let first = ocp.stage(&pt, v, u[0], u[1], u[2], 0.0, 0.0);
        let violation = (0..self.cfg.steps)
            .map(|i| (u[3 * i].powi(2) + u[3 * i + 1].powi(2) - u_max * u_max).abs())
            .fold(0.0, f64::max);
        Ok(PlanOutput {
            u_cmd: u[0].clamp(-u_max, u_max),
            v_next_ref: (v + first.vdot * self.cfg.dtau()).max(0.0),
            residual_norm: self.state.residual_norm,
            costs: first.costs,
            u_slk: u[1],
            mu: u[2],
            constraint_violation: violation,
        })
    }
}
