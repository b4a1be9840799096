use haultrack::longitudinal::{LongitudinalParams, LongitudinalState};
use haultrack::nmpc::{hamiltonian, hamiltonian_gradients, NmpcConfig, NmpcPlanner};
use haultrack::path::{build_path, PathMap, Waypoint};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LEN: usize = 2000;

/// Uniform path with altitude a·s² and curvature k0 + k1·s. With the slope
/// window an integer number of samples, the interpolated slope is exactly
/// atan(2·a·s), so H is smooth in s.
fn smooth_path() -> PathMap {
    let a = 2e-5;
    let wps: Vec<Waypoint> = (0..=LEN).map(|i| Waypoint::new(i as f64, 0.0, 0.0, a * (i * i) as f64)).collect();
    let kappa: Vec<f64> = (0..=LEN).map(|i| 0.002 + 4e-6 * i as f64).collect();
    PathMap::from_uniform(1.0, &wps, &kappa).unwrap()
}

fn flat_straight(len: usize) -> PathMap {
    let w: Vec<Waypoint> = (0..=len).map(|i| Waypoint::new(i as f64, 0.0, 0.0, 0.0)).collect();
    build_path(&w, 1.0).unwrap()
}

/// Five-point central difference.
fn d5(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * a.abs().max(b.abs()) + 1e-9
}

struct Point {
    x: LongitudinalState,
    lam: [f64; 2],
    u: f64,
    us: f64,
    mu: f64,
}

fn check_point(cfg: &NmpcConfig, model: &LongitudinalParams, path: &PathMap, p: &Point) -> Option<Vec<String>> {
    let g = hamiltonian_gradients(cfg, model, p.x, p.lam, p.u, p.us, p.mu, path, 2).unwrap();
    if g.clamped {
        return None;
    }
    let h = |s: f64, v: f64, u: f64, us: f64| {
        hamiltonian(cfg, model, LongitudinalState { s, v }, p.lam, u, us, p.mu, path, 2).unwrap()
    };
    let (s, v) = (p.x.s, p.x.v);
    let fd = [
        d5(|t| h(s, v, t, p.us), p.u, 1e-3),
        d5(|t| h(s, v, p.u, t), p.us, 1e-3),
        d5(|t| h(t, v, p.u, p.us), s, 1e-2),
        d5(|t| h(s, t, p.u, p.us), v, 1e-3),
    ];
    let an = [g.h_u[0], g.h_u[1], g.h_x[0], g.h_x[1]];
    let names = ["H_u", "H_uslk", "H_s", "H_v"];
    Some(
        (0..4)
            .filter(|&k| !close(an[k], fd[k]))
            .map(|k| format!("{} analytic {} fd {} at s={} v={}", names[k], an[k], fd[k], s, v))
            .collect(),
    )
}

#[test]
fn hamiltonian_gradients_match_finite_differences() {
    let path = smooth_path();
    let model = LongitudinalParams::default();
    let cfg = NmpcConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut checked = 0;
    let mut failures = Vec::new();
    while checked < 1000 {
        let p = Point {
            x: LongitudinalState { s: rng.gen_range(100.0..1800.0), v: rng.gen_range(0.5..10.0) },
            lam: [rng.gen_range(-5.0..5.0), rng.gen_range(-50.0..50.0)],
            u: rng.gen_range(-4.0..4.0),
            us: rng.gen_range(0.0..4.5),
            mu: rng.gen_range(-2.0..2.0),
        };
        if let Some(f) = check_point(&cfg, &model, &path, &p) {
            failures.extend(f);
            checked += 1;
        }
    }
    assert!(failures.is_empty(), "{} mismatches, first: {}", failures.len(), failures[0]);
}

#[test]
fn gradients_in_goal_taper() {
    let path = smooth_path();
    let model = LongitudinalParams::default();
    let cfg = NmpcConfig::default();
    let l = LEN as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let p = Point {
            // taper starts v_ref²/(2·a_goal) ≈ 51 m before the end
            x: LongitudinalState { s: rng.gen_range(l - 45.0..l - 31.0), v: rng.gen_range(0.5..8.0) },
            lam: [rng.gen_range(-5.0..5.0), rng.gen_range(-50.0..50.0)],
            u: rng.gen_range(-4.0..4.0),
            us: rng.gen_range(0.0..4.5),
            mu: rng.gen_range(-2.0..2.0),
        };
        let f = check_point(&cfg, &model, &path, &p).expect("not clamped");
        assert!(f.is_empty(), "{f:?}");
    }
}

#[test]
fn clamped_region_is_flagged() {
    let path = smooth_path();
    let model = LongitudinalParams::default();
    let cfg = NmpcConfig { w4: 100.0, ..Default::default() };
    let x = LongitudinalState { s: 500.0, v: 8.0 };
    let g = hamiltonian_gradients(&cfg, &model, x, [0.0, 0.0], 0.0, 4.5, 0.0, &path, 2).unwrap();
    assert!(g.clamped);
}

fn lq_setup() -> (NmpcConfig, LongitudinalParams) {
    let cfg = NmpcConfig {
        w3: 0.0,
        w4: 0.0,
        w5: 0.0,
        w_slk: 1e-8,
        goal_decel: 0.0,
        ..Default::default()
    };
    let model = LongitudinalParams { c_d: 0.0, ..Default::default() };
    (cfg, model)
}

/// Batch least squares over the input sequence for
/// Σ w1/2·(u_i − R(v_i))² + w2/2·(v_i − v_ref)², v_{i+1} = v_i + dτ·(u_i − R(v_i)),
/// R(v) = 0.01·g·(1 + v/576).
fn lq_oracle(cfg: &NmpcConfig, v0: f64) -> DVector<f64> {
    let n = cfg.steps;
    let dt = cfg.horizon / n as f64;
    let c0 = 0.01 * 9.81;
    let c1 = 0.01 * 9.81 / 576.0;
    // v = vbar + M·u for v_0 .. v_{N-1}
    let mut vbar = DVector::zeros(n);
    let mut m = DMatrix::zeros(n, n);
    vbar[0] = v0;
    for i in 1..n {
        vbar[i] = (1.0 - dt * c1) * vbar[i - 1] - dt * c0;
        for j in 0..n {
            m[(i, j)] = (1.0 - dt * c1) * m[(i - 1, j)] + if j == i - 1 { dt } else { 0.0 };
        }
    }
    // a = u − c0 − c1·v = (I − c1·M)u − c0 − c1·vbar
    let ia = DMatrix::identity(n, n) - &m * c1;
    let ba = DVector::from_element(n, c0) + &vbar * c1;
    let bv = DVector::from_element(n, cfg.v_ref) - &vbar;
    let (w1, w2) = (cfg.w1, cfg.w2);
    let lhs = ia.transpose() * &ia * w1 + m.transpose() * &m * w2;
    let rhs = ia.transpose() * ba * w1 + m.transpose() * bv * w2;
    lhs.lu().solve(&rhs).unwrap()
}

#[test]
fn lq_toy_matches_batch_oracle() {
    let (cfg, model) = lq_setup();
    let path = flat_straight(3000);
    for v0 in [1.0, 3.0, 5.0, 7.0] {
        let oracle = lq_oracle(&cfg, v0);
        assert!(oracle.amax() < cfg.u_max);
        let mut p = NmpcPlanner::new(cfg.clone(), model.clone(), 2).unwrap();
        let x = LongitudinalState { s: 100.0, v: v0 };
        p.warm_start(x, &path).unwrap();
        for _ in 0..100 {
            p.cgmres_step(x, (0.0, 0.0), &path, 0.1).unwrap();
        }
        assert!(p.state.residual_norm <= 1e-5, "residual {}", p.state.residual_norm);
        let u0 = p.state.u[0];
        assert!((u0 - oracle[0]).abs() <= 1e-3, "v0 {v0}: planner {u0} oracle {}", oracle[0]);
        for i in 0..cfg.steps {
            assert!((p.state.u[3 * i] - oracle[i]).abs() <= 1e-3);
        }
    }
}

/// Decay rate of ‖F‖ over one second of frozen-state continuation from a
/// perturbed solution.
fn frozen_decay_rate(cfg: NmpcConfig, path: &PathMap, x: LongitudinalState, seed: u64) -> f64 {
    let mut p = NmpcPlanner::new(cfg, LongitudinalParams::default(), 2).unwrap();
    p.warm_start(x, path).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = p.state.u.clone();
    for i in 0..p.cfg.steps {
        u[3 * i] += rng.gen_range(-0.05..0.05);
    }
    p.set_solution(u);
    let f0: f64 = p.residual(x, path).iter().map(|v| v * v).sum::<f64>().sqrt();
    for _ in 0..10 {
        p.cgmres_step(x, (0.0, 0.0), path, 0.1).unwrap();
    }
    -(p.state.residual_norm / f0).ln() / 1.0
}

#[test]
fn frozen_continuation_decays_at_half_zeta() {
    let cfg = NmpcConfig::default();
    let path = haultrack::sim::scenario_path(&haultrack::config::ScenarioConfig::default(), None).unwrap();
    for (k, s) in [50.0, 300.0, 700.0, 1200.0].into_iter().enumerate() {
        let rate = frozen_decay_rate(cfg.clone(), &path, LongitudinalState { s, v: 5.0 }, k as u64);
        assert!(rate >= 0.5 * cfg.zeta, "s {s}: rate {rate}");
    }
}

#[test]
fn frozen_residual_is_non_increasing() {
    let path = flat_straight(1000);
    let mut p = NmpcPlanner::new(NmpcConfig::default(), LongitudinalParams::default(), 2).unwrap();
    let x = LongitudinalState { s: 10.0, v: 2.0 };
    p.warm_start(x, &path).unwrap();
    let mut u = p.state.u.clone();
    u[0] += 0.1;
    p.set_solution(u);
    let mut last = f64::INFINITY;
    for _ in 0..20 {
        p.cgmres_step(x, (0.0, 0.0), &path, 0.1).unwrap();
        // below 1e-10 the finite-difference noise floor dominates
        assert!(p.state.residual_norm <= last || p.state.residual_norm < 1e-10, "{} after {last}", p.state.residual_norm);
        last = p.state.residual_norm;
    }
}

#[test]
fn near_goal_plan_decelerates_to_stop() {
    let path = flat_straight(400);
    let mut p = NmpcPlanner::new(NmpcConfig::default(), LongitudinalParams::default(), 2).unwrap();
    let out = p.plan_velocity(395.0, 3.0, &path).unwrap();
    assert!(out.u_cmd < 0.0, "u_cmd {}", out.u_cmd);
    assert!(out.v_next_ref < 3.0);
    let mut p = NmpcPlanner::new(NmpcConfig::default(), LongitudinalParams::default(), 2).unwrap();
    let out = p.plan_velocity(100.0, 3.0, &path).unwrap();
    assert!(out.u_cmd > 0.0 && out.v_next_ref > 3.0);
}
