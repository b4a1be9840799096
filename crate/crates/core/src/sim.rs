//! Closed-loop simulation: nonlinear truck plant under the speed planner,
//! a PI throttle/brake loop and the robust steering controller.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::config::{PiGains, ScenarioConfig};
use crate::lateral::{continuous_matrices, LateralParams, LateralState, ModelVariant};
use crate::longitudinal::{long_derivative, LongitudinalParams, LongitudinalState};
use crate::nmpc::{NmpcError, NmpcPlanner};
use crate::path::{build_path, read_waypoints, wrap_angle, PathError, PathMap};
use crate::pathgen::{generate, InvalidSpec};
use crate::rlqr::{RlqrController, RlqrError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Spec(#[from] InvalidSpec),
    #[error("planner: {0}")]
    Nmpc(#[from] NmpcError),
    #[error("steering controller: {0}")]
    Rlqr(#[from] RlqrError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
    pub y_dot: f64,
    pub psi_dot: f64,
    pub s_est: f64,
    pub gear: usize,
}

impl PlantState {
    fn to_array(self) -> [f64; 7] {
        [self.x, self.y, self.heading, self.v, self.y_dot, self.psi_dot, self.s_est]
    }

    fn from_array(a: [f64; 7], gear: usize) -> Self {
        Self { x: a[0], y: a[1], heading: a[2], v: a[3], y_dot: a[4], psi_dot: a[5], s_est: a[6], gear }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Simulated vehicle: true mass and lateral model form.
#[derive(Debug, Clone)]
pub struct Plant {
    pub lon: LongitudinalParams,
    pub lat: LateralParams,
    pub variant: ModelVariant,
}

/// Offset and heading error of a pose relative to the path point at `s`.
fn path_errors(path: &PathMap, s: f64, x: f64, y: f64, heading: f64) -> (f64, f64) {
    let (px, py) = path.point_at(s);
    let psi = path.heading_at(s);
    let rho = -(x - px) * psi.sin() + (y - py) * psi.cos();
    (rho, wrap_angle(heading - psi))
}

/// Local road slope at `s` (central difference over two sample spacings).
pub fn road_slope(path: &PathMap, s: f64) -> f64 {
    path.slope_at(s, path.sample_spacing())
}

/// Time derivative of the plant state for held inputs. Forces are per unit
/// plant mass.
pub fn plant_derivative(
    plant: &Plant,
    st: &PlantState,
    throttle_force: f64,
    brake_force: f64,
    alpha: f64,
    path: &PathMap,
) -> [f64; 7] {
    let beta = road_slope(path, st.s_est);
    let u = throttle_force - brake_force;
    let (_, mut v_dot) = long_derivative(&plant.lon, LongitudinalState { s: st.s_est, v: st.v }, u, beta);
    if st.v <= 0.0 && v_dot < 0.0 {
        v_dot = 0.0;
    }
    let sys = continuous_matrices(&plant.lat, st.v, plant.variant);
    let ydd = sys.f[(0, 0)] * st.y_dot + sys.f[(0, 1)] * st.psi_dot + sys.g[0] * alpha;
    let psidd = sys.f[(1, 0)] * st.y_dot + sys.f[(1, 1)] * st.psi_dot + sys.g[1] * alpha;
    let (sn, cs) = st.heading.sin_cos();
    let x_dot = st.v * cs - st.y_dot * sn;
    let y_dot_g = st.v * sn + st.y_dot * cs;
    let (rho, theta) = path_errors(path, st.s_est, st.x, st.y, st.heading);
    let kappa = path.signed_curvature_at(st.s_est);
    let denom = (1.0 - kappa * rho).max(0.1);
    let s_dot = (st.v * theta.cos() - st.y_dot * theta.sin()) / denom;
    [x_dot, y_dot_g, st.psi_dot, v_dot, ydd, psidd, s_dot]
}

/// One classical Runge-Kutta step with inputs held; v is clamped at zero.
pub fn rk4_step(
    plant: &Plant,
    st: &PlantState,
    throttle_force: f64,
    brake_force: f64,
    alpha: f64,
    path: &PathMap,
    h: f64,
) -> PlantState {
    let x0 = st.to_array();
    let eval = |x: [f64; 7]| {
        plant_derivative(plant, &PlantState::from_array(x, st.gear), throttle_force, brake_force, alpha, path)
    };
    let add = |a: [f64; 7], k: [f64; 7], c: f64| -> [f64; 7] { std::array::from_fn(|i| a[i] + c * k[i]) };
    let k1 = eval(x0);
    let k2 = eval(add(x0, k1, h / 2.0));
    let k3 = eval(add(x0, k2, h / 2.0));
    let k4 = eval(add(x0, k3, h));
    let mut out: [f64; 7] = std::array::from_fn(|i| x0[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    out[3] = out[3].max(0.0);
    PlantState::from_array(out, st.gear)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiOutput {
    /// Throttle pedal, 0..100 %.
    pub throttle: f64,
    /// Brake command, 0..1.
    pub brake: f64,
    pub throttle_force: f64,
    pub brake_force: f64,
}

/// Velocity PI loop with a throttle/brake split and conditional integration.
#[derive(Debug, Clone)]
pub struct PiController {
    pub gains: PiGains,
    pub u_max: f64,
    pub integral: f64,
}

impl PiController {
    pub fn new(gains: PiGains, u_max: f64) -> Self {
        Self { gains, u_max, integral: 0.0 }
    }

    pub fn update(&mut self, v_ref: f64, v: f64, dt: f64) -> PiOutput {
        let g = &self.gains;
        let e = v_ref - v;
        let pi = |i: f64| 100.0 * (g.kp * e + g.ki * i);
        let candidate = self.integral + e * dt;
        let out = split(pi(candidate), e, g.k_b);
        let saturated = (e > 0.0 && pi(candidate) > 100.0) || (e < 0.0 && -pi(candidate) * g.k_b > 1.0);
        let out = if saturated {
            split(pi(self.integral), e, g.k_b)
        } else {
            self.integral = candidate;
            out
        };
        PiOutput {
            throttle: out.0,
            brake: out.1,
            throttle_force: out.0 / 100.0 * self.u_max,
            brake_force: out.1 * self.u_max,
        }
    }
}

fn split(pi: f64, e: f64, k_b: f64) -> (f64, f64) {
    if e >= 0.0 {
        (pi.clamp(0.0, 100.0), 0.0)
    } else {
        (0.0, (-pi * k_b).clamp(0.0, 1.0))
    }
}

/// Stateless form of one PI evaluation.
pub fn pi_throttle_brake(v_ref: f64, v: f64, gains: &PiGains, u_max: f64, integral: f64) -> PiOutput {
    let mut c = PiController { gains: gains.clone(), u_max, integral };
    c.update(v_ref, v, 0.0)
}

pub const LOG_COLUMNS: [&str; 39] = [
    "t", "x", "y", "heading", "v", "y_dot", "psi_dot", "s", "gear", "u_cmd", "v_ref_cmd", "throttle", "brake",
    "alpha", "alpha_cmd", "rho", "theta", "beta", "f_curv", "altitude", "residual_norm", "u_slk", "mu",
    "constraint_violation", "j1", "j2", "j3", "j4", "j5", "j_slk", "k1", "k2", "k3", "k4", "robust_residual",
    "nmpc_tick", "v_lim", "a_lat_max", "u_max",
];

/// One log row. Controller quantities hold their most recent tick's values;
/// `nmpc_tick` is 1 on rows where the planner ran during the preceding plant step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LogRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
    pub y_dot: f64,
    pub psi_dot: f64,
    pub s: f64,
    pub gear: usize,
    pub u_cmd: f64,
    pub v_ref_cmd: f64,
    pub throttle: f64,
    pub brake: f64,
    pub alpha: f64,
    pub alpha_cmd: f64,
    pub rho: f64,
    pub theta: f64,
    pub beta: f64,
    pub f_curv: f64,
    pub altitude: f64,
    pub residual_norm: f64,
    pub u_slk: f64,
    pub mu: f64,
    pub constraint_violation: f64,
    pub j: [f64; 6],
    pub k: [f64; 4],
    pub robust_residual: f64,
    pub nmpc_tick: bool,
    pub v_lim: f64,
    pub a_lat_max: f64,
    pub u_max: f64,
}

impl LogRow {
    fn values(&self) -> Vec<f64> {
        let mut v = vec![
            self.t, self.x, self.y, self.heading, self.v, self.y_dot, self.psi_dot, self.s, self.gear as f64,
            self.u_cmd, self.v_ref_cmd, self.throttle, self.brake, self.alpha, self.alpha_cmd, self.rho,
            self.theta, self.beta, self.f_curv, self.altitude, self.residual_norm, self.u_slk, self.mu,
            self.constraint_violation,
        ];
        v.extend_from_slice(&self.j);
        v.extend_from_slice(&self.k);
        v.extend([self.robust_residual, if self.nmpc_tick { 1.0 } else { 0.0 }, self.v_lim, self.a_lat_max, self.u_max]);
        v
    }

    fn from_values(v: &[f64]) -> Self {
        Self {
            t: v[0],
            x: v[1],
            y: v[2],
            heading: v[3],
            v: v[4],
            y_dot: v[5],
            psi_dot: v[6],
            s: v[7],
            gear: v[8] as usize,
            u_cmd: v[9],
            v_ref_cmd: v[10],
            throttle: v[11],
            brake: v[12],
            alpha: v[13],
            alpha_cmd: v[14],
            rho: v[15],
            theta: v[16],
            beta: v[17],
            f_curv: v[18],
            altitude: v[19],
            residual_norm: v[20],
            u_slk: v[21],
            mu: v[22],
            constraint_violation: v[23],
            j: std::array::from_fn(|i| v[24 + i]),
            k: std::array::from_fn(|i| v[30 + i]),
            robust_residual: v[34],
            nmpc_tick: v[35] != 0.0,
            v_lim: v[36],
            a_lat_max: v[37],
            u_max: v[38],
        }
    }
}

pub fn format_log(rows: &[LogRow]) -> String {
    let mut out = LOG_COLUMNS.join(",");
    out.push('\n');
    for r in rows {
        let vals = r.values();
        for (i, x) in vals.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{x}").unwrap();
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Error, PartialEq)]
pub enum LogParseError {
    #[error("log header does not match the expected columns")]
    Header,
    #[error("line {line}: {msg}")]
    Row { line: usize, msg: String },
}

pub fn parse_log(text: &str) -> Result<Vec<LogRow>, LogParseError> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(LOG_COLUMNS.join(",").as_str()) {
        return Err(LogParseError::Header);
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| LogParseError::Row { line: i + 2, msg: e.to_string() })?;
        if vals.len() != LOG_COLUMNS.len() {
            return Err(LogParseError::Row {
                line: i + 2,
                msg: format!("expected {} fields, got {}", LOG_COLUMNS.len(), vals.len()),
            });
        }
        rows.push(LogRow::from_values(&vals));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimStatus {
    Completed,
    DurationCap,
    Aborted(String),
}

#[derive(Debug, Clone)]
pub struct SimRun {
    pub rows: Vec<LogRow>,
    pub status: SimStatus,
    pub path_length: f64,
    /// Planner ticks: (t, residual_norm, per-stage constraint violations).
    pub nmpc_ticks: Vec<NmpcTick>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmpcTick {
    pub t: f64,
    pub residual_norm: f64,
    pub stage_violation: Vec<f64>,
    pub u_max: f64,
}

/// Path for a scenario: the waypoint file if given, otherwise the generated route.
pub fn scenario_path(cfg: &ScenarioConfig, base_dir: Option<&Path>) -> Result<PathMap, SimError> {
    let wps = if cfg.path.file.is_empty() {
        generate(&cfg.path.route)?
    } else {
        let p = Path::new(&cfg.path.file);
        let p = match base_dir {
            Some(d) if p.is_relative() => d.join(p),
            _ => p.to_path_buf(),
        };
        read_waypoints(&p)?
    };
    Ok(build_path(&wps, cfg.path.spacing)?.with_slope_window(cfg.nmpc.delta_s))
}

/// Runs the closed loop until the goal, the duration cap, or a non-finite state.
pub fn run_scenario(cfg: &ScenarioConfig, path: &PathMap) -> Result<SimRun, SimError> {
    let sc = &cfg.sim;
    let veh = &cfg.vehicle;
    let plant = Plant {
        lon: cfg.longitudinal_with(veh.plant_payload),
        lat: cfg.lateral_with(veh.plant_payload),
        variant: veh.plant_variant,
    };
    let mut planner = NmpcPlanner::new(cfg.nmpc.clone(), cfg.longitudinal_with(veh.controller_payload), sc.gear)?;
    let mut steer = RlqrController::new(cfg.rlqr.clone(), cfg.lateral_with(veh.controller_payload))?;
    let u_max = planner.u_max();
    let mut pi = PiController::new(cfg.pi.clone(), u_max);

    let h = sc.plant_step;
    let nmpc_every = (cfg.nmpc.period / h).round() as usize;
    let rlqr_every = (cfg.rlqr.period / h).round() as usize;
    let cap_steps = (sc.duration_cap / h).round() as usize;
    let goal = path.total_length() - sc.goal_tolerance;

    let mut offset = sc.initial_offset;
    if sc.offset_jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
        offset += Normal::new(0.0, sc.offset_jitter).expect("finite std").sample(&mut rng);
    }
    let (px, py) = path.point_at(0.0);
    let psi0 = path.heading_at(0.0);
    let mut st = PlantState {
        x: px - offset * psi0.sin(),
        y: py + offset * psi0.cos(),
        heading: psi0 + sc.initial_heading_error,
        v: sc.initial_speed,
        y_dot: 0.0,
        psi_dot: 0.0,
        s_est: 0.0,
        gear: sc.gear,
    };

    let mut row = LogRow { gear: sc.gear, v_lim: cfg.nmpc.v_lim, a_lat_max: cfg.nmpc.a_lat_max, u_max, ..Default::default() };
    let mut alpha = 0.0;
    let mut alpha_cmd = 0.0;
    let mut v_ref = st.v;
    let mut rows = Vec::new();
    let mut ticks = Vec::new();
    let mut nmpc_ran = false;
    let mut step = 0usize;

    let status = loop {
        let t = step as f64 * h;
        let proj = path.project_near(st.x, st.y, st.heading, st.s_est, 10.0);
        st.s_est = proj.s;
        let lat_state = LateralState { y_dot: st.y_dot, psi_dot: st.psi_dot, rho: proj.rho, theta: proj.theta };

        if step % nmpc_every == 0 {
            match planner.plan_velocity(st.s_est, st.v, path) {
                Ok(out) => {
                    v_ref = out.v_next_ref;
                    row.u_cmd = out.u_cmd;
                    row.residual_norm = out.residual_norm;
                    row.u_slk = out.u_slk;
                    row.mu = out.mu;
                    row.constraint_violation = out.constraint_violation;
                    let c = out.costs;
                    row.j = [c.j1, c.j2, c.j3, c.j4, c.j5, c.j_slk];
                    let u = &planner.state.u;
                    ticks.push(NmpcTick {
                        t,
                        residual_norm: out.residual_norm,
                        stage_violation: (0..cfg.nmpc.steps)
                            .map(|i| (u[3 * i].powi(2) + u[3 * i + 1].powi(2) - u_max * u_max).abs())
                            .collect(),
                        u_max,
                    });
                    nmpc_ran = true;
                }
                Err(e) => break SimStatus::Aborted(format!("planner failed at t = {t}: {e}")),
            }
        }
        if step % rlqr_every == 0 {
            match steer.tick(st.v, &lat_state) {
                Ok(a) => alpha_cmd = a,
                Err(e) => break SimStatus::Aborted(format!("steering controller failed at t = {t}: {e}")),
            }
            let k = steer.gain();
            row.k = [k[0], k[1], k[2], k[3]];
            row.robust_residual = steer.robust_residual();
        }
        let pi_out = pi.update(v_ref, st.v, h);

        let finite = st.is_finite() && proj.rho.is_finite() && proj.theta.is_finite();
        if step % sc.log_decimation == 0 || !finite {
            row.t = t;
            row.x = st.x;
            row.y = st.y;
            row.heading = st.heading;
            row.v = st.v;
            row.y_dot = st.y_dot;
            row.psi_dot = st.psi_dot;
            row.s = st.s_est;
            row.v_ref_cmd = v_ref;
            row.throttle = pi_out.throttle;
            row.brake = pi_out.brake;
            row.alpha = alpha;
            row.alpha_cmd = alpha_cmd;
            row.rho = proj.rho;
            row.theta = proj.theta;
            row.beta = road_slope(path, st.s_est);
            row.f_curv = proj.curvature.abs();
            row.altitude = path.altitude_at(st.s_est);
            row.nmpc_tick = nmpc_ran;
            nmpc_ran = false;
            rows.push(row);
            if !finite {
                break SimStatus::Aborted(format!("non-finite state at t = {t}"));
            }
            if st.s_est >= goal {
                break SimStatus::Completed;
            }
            if step >= cap_steps {
                break SimStatus::DurationCap;
            }
        }

        let max_da = sc.steer_rate_limit * h;
        let lim = cfg.rlqr.steering_limit;
        alpha = (alpha + (alpha_cmd - alpha).clamp(-max_da, max_da)).clamp(-lim, lim);
        st = rk4_step(&plant, &st, pi_out.throttle_force, pi_out.brake_force, alpha, path, h);
        st.heading = wrap_angle(st.heading);
        step += 1;
    };
    Ok(SimRun { rows, status, path_length: path.total_length(), nmpc_ticks: ticks })
}
