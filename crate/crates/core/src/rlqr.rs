//! Robust LQR for systems x⁺ = (F + δF)x + (G + δG)u with
//! [δF δG] = HΔ[E_F E_G], ‖Δ‖ ≤ 1.
//!
//! One step of the regulator solves a structured saddle-point system for
//! (L, K, P_next). Two forms are available: the penalised one, where the
//! model-fit residual is weighted by Σ(μ, λ̂), and the limit form (Σ = 0),
//! which forces x⁺ = Fx + Gu and E_F + E_G K = 0 exactly.

use nalgebra::{DMatrix, Matrix4, RowVector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lateral::{discrete_model, LateralParams, LateralState, ModelVariant};

/// E_A from the field experiment (scalar steering input).
pub const PRINTED_E_F: [f64; 4] = [-0.000405618009134, 0.004949413574869, 0.000000034165611, 0.000024747067874];
pub const PRINTED_E_G: f64 = -0.00114326083475285;

#[derive(Debug, Error, PartialEq)]
pub enum RlqrError {
    #[error("singular RLQR framework: {0}")]
    SingularFramework(String),
    #[error("invalid payload range: min {0} > max {1}")]
    InvalidRange(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RlqrForm {
    /// Σ(μ, λ̂) weighted residual; μ controls robustness.
    #[default]
    Penalized,
    /// μ → ∞ (Σ = 0). Falls back to the penalised form if singular.
    Limit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyModel {
    /// n × l
    pub h: DMatrix<f64>,
    /// l × n
    pub e_f: DMatrix<f64>,
    /// l × m
    pub e_g: DMatrix<f64>,
    /// Set when the payload range collapsed to a point (E all zero).
    pub degenerate: bool,
}

impl UncertaintyModel {
    pub fn none(n: usize, m: usize) -> Self {
        Self {
            h: DMatrix::zeros(n, 1),
            e_f: DMatrix::zeros(1, n),
            e_g: DMatrix::zeros(1, m),
            degenerate: true,
        }
    }

    /// The truck model's printed uncertainty: H = 1, E_F = E_A, E_G = E_B.
    pub fn printed() -> Self {
        Self {
            h: DMatrix::from_element(4, 1, 1.0),
            e_f: DMatrix::from_row_slice(1, 4, &PRINTED_E_F),
            e_g: DMatrix::from_element(1, 1, PRINTED_E_G),
            degenerate: false,
        }
    }

    pub fn is_active(&self) -> bool {
        self.h.iter().any(|v| *v != 0.0) && (self.e_f.iter().any(|v| *v != 0.0) || self.e_g.iter().any(|v| *v != 0.0))
    }

    /// rank([E_F E_G]) == rank(E_G), the condition under which the limit
    /// gain can cancel the uncertainty. Reported, not enforced.
    pub fn rank_condition_holds(&self) -> bool {
        let mut both = DMatrix::zeros(self.e_f.nrows(), self.e_f.ncols() + self.e_g.ncols());
        both.view_mut((0, 0), self.e_f.shape()).copy_from(&self.e_f);
        both.view_mut((0, self.e_f.ncols()), self.e_g.shape()).copy_from(&self.e_g);
        both.rank(1e-12) == self.e_g.rank(1e-12)
    }

    /// ‖E_F + E_G K‖ (Frobenius).
    pub fn residual(&self, k: &DMatrix<f64>) -> f64 {
        (&self.e_f + &self.e_g * k).norm()
    }
}

/// Builds E_F, E_G from the change in the discrete lateral model between
/// the lightest and heaviest payload.
pub fn uncertainty_matrices(
    p: &LateralParams,
    mp_min: f64,
    mp_max: f64,
    v: f64,
    ts: f64,
    variant: ModelVariant,
) -> Result<UncertaintyModel, RlqrError> {
    if mp_min > mp_max {
        return Err(RlqrError::InvalidRange(mp_min, mp_max));
    }
    let light = discrete_model(&LateralParams { payload: mp_min, ..p.clone() }, v, variant, ts);
    let heavy = discrete_model(&LateralParams { payload: mp_max, ..p.clone() }, v, variant, ts);
    let gamma_f = light.fd - heavy.fd;
    let gamma_g = light.gd - heavy.gd;
    let weights = [1.0, 1.0, 1.0, 0.1];
    let e_f = DMatrix::from_fn(1, 4, |_, c| weights[c] * gamma_f[(c, 1)]);
    let jmax = gamma_g.iamax();
    let e_g = DMatrix::from_element(1, 1, 0.1 * gamma_g[jmax]);
    Ok(UncertaintyModel {
        h: DMatrix::from_element(4, 1, 1.0),
        e_f,
        e_g,
        degenerate: mp_min == mp_max,
    })
}

/// Weights of one regulator step.
#[derive(Debug, Clone, PartialEq)]
pub struct RlqrWeights {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub mu: f64,
    pub form: RlqrForm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlqrGain {
    pub l: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub p_next: DMatrix<f64>,
    /// Form actually solved (Limit may fall back to Penalized).
    pub form: RlqrForm,
}

fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>, RlqrError> {
    let sym = (m + m.transpose()) * 0.5;
    sym.cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| RlqrError::SingularFramework(format!("{what} is not positive definite")))
}

/// Σ(μ, λ̂) for the penalised form. Without active uncertainty rows only the
/// μ⁻¹I block remains; at μ = ∞ the whole matrix is zero.
fn sigma(unc: &UncertaintyModel, n: usize, mu: f64, active: bool) -> DMatrix<f64> {
    let l = if active { unc.h.ncols() } else { 0 };
    let mut s = DMatrix::zeros(n + l, n + l);
    if mu.is_infinite() {
        return s;
    }
    let mut top = DMatrix::identity(n, n) / mu;
    if active {
        let hth = unc.h.transpose() * &unc.h;
        let lam = (1.0 + 1e-3) * (hth * mu).norm();
        top -= &unc.h * unc.h.transpose() / lam;
        for i in 0..l {
            s[(n + i, n + i)] = 1.0 / lam;
        }
    }
    s.view_mut((0, 0), (n, n)).copy_from(&top);
    s
}

fn solve_framework(
    f: &DMatrix<f64>,
    g: &DMatrix<f64>,
    unc: &UncertaintyModel,
    w: &RlqrWeights,
    p: &DMatrix<f64>,
    penalized: bool,
) -> Result<RlqrGain, RlqrError> {
    let n = f.nrows();
    let m = g.ncols();
    let active = unc.is_active();
    let l = if active { unc.h.ncols() } else { 0 };
    let nl = n + l;
    let pinv = spd_inverse(p, "P")?;
    let rinv = spd_inverse(&w.r, "R")?;
    let qinv = spd_inverse(&w.q, "Q")?;
    let mu = if penalized { w.mu } else { f64::INFINITY };
    let sig = sigma(unc, n, mu, active);

    // script-A = [F; E_F], script-B = [G; E_G], script-I = [I; 0]
    let mut ca = DMatrix::zeros(nl, n);
    let mut cb = DMatrix::zeros(nl, m);
    let mut ci = DMatrix::zeros(nl, n);
    ca.view_mut((0, 0), (n, n)).copy_from(f);
    cb.view_mut((0, 0), (n, m)).copy_from(g);
    ci.view_mut((0, 0), (n, n)).fill_with_identity();
    if active {
        ca.view_mut((n, 0), (l, n)).copy_from(&unc.e_f);
        cb.view_mut((n, 0), (l, m)).copy_from(&unc.e_g);
    }

    // block offsets: [n, m, n, n+l, n, m]
    let o = [0, n, n + m, 2 * n + m, 2 * n + m + nl, 3 * n + m + nl];
    let dim = 3 * n + 2 * m + nl;
    let mut xi = DMatrix::zeros(dim, dim);
    let eye_n = DMatrix::<f64>::identity(n, n);
    let eye_m = DMatrix::<f64>::identity(m, m);
    let mut put = |r: usize, c: usize, b: &DMatrix<f64>| xi.view_mut((r, c), b.shape()).copy_from(b);
    put(o[0], o[0], &pinv);
    put(o[0], o[4], &eye_n);
    put(o[1], o[1], &rinv);
    put(o[1], o[5], &eye_m);
    put(o[2], o[2], &qinv);
    put(o[3], o[3], &sig);
    put(o[3], o[4], &ci);
    put(o[3], o[5], &(-&cb));
    put(o[4], o[0], &eye_n);
    put(o[4], o[3], &ci.transpose());
    put(o[5], o[1], &eye_m);
    put(o[5], o[3], &(-cb.transpose()));

    let mut rhs = DMatrix::zeros(dim, n);
    rhs.view_mut((o[2], 0), (n, n)).copy_from(&(-&eye_n));
    rhs.view_mut((o[3], 0), (nl, n)).copy_from(&ca);

    let lu = xi.lu();
    let u = lu.u();
    let diag = u.diagonal().abs();
    let (dmin, dmax) = (diag.min(), diag.max());
    if !(dmin > 1e-14 * dmax) {
        return Err(RlqrError::SingularFramework(format!("pivot ratio {:.3e}", dmin / dmax)));
    }
    let z = lu
        .solve(&rhs)
        .ok_or_else(|| RlqrError::SingularFramework("LU solve failed".into()))?;
    if z.iter().any(|v| !v.is_finite()) {
        return Err(RlqrError::SingularFramework("non-finite solution".into()));
    }
    let z3 = z.rows(o[2], n);
    let z4 = z.rows(o[3], nl);
    let lmat = z.rows(o[4], n).into_owned();
    let k = z.rows(o[5], m).into_owned();
    let pn = -z3 + ca.transpose() * z4;
    let p_next = (&pn + pn.transpose()) * 0.5;
    Ok(RlqrGain {
        l: lmat,
        k,
        p_next,
        form: if penalized { RlqrForm::Penalized } else { RlqrForm::Limit },
    })
}

/// One regulator step from the current Riccati value `p`.
pub fn rlqr_gain(
    f: &DMatrix<f64>,
    g: &DMatrix<f64>,
    unc: &UncertaintyModel,
    w: &RlqrWeights,
    p: &DMatrix<f64>,
) -> Result<RlqrGain, RlqrError> {
    match w.form {
        RlqrForm::Penalized => solve_framework(f, g, unc, w, p, !w.mu.is_infinite()),
        RlqrForm::Limit => match solve_framework(f, g, unc, w, p, false) {
            Ok(gain) => Ok(gain),
            Err(_) if w.mu.is_finite() => solve_framework(f, g, unc, w, p, true),
            Err(e) => Err(e),
        },
    }
}

/// Riccati recursion from `p0`; returns the gain of the last step and the final P.
pub fn lqr_oracle(
    f: &DMatrix<f64>,
    g: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p0: &DMatrix<f64>,
    iterations: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut p = p0.clone();
    let mut k = DMatrix::zeros(g.ncols(), f.nrows());
    for _ in 0..iterations {
        let s = r + g.transpose() * &p * g;
        let gpf = g.transpose() * &p * f;
        k = -s.clone().lu().solve(&gpf).expect("R + GᵀPG is invertible");
        let pn = q + f.transpose() * &p * f + f.transpose() * &p * g * &k;
        p = (&pn + pn.transpose()) * 0.5;
    }
    (k, p)
}

pub struct FiniteHorizon {
    pub gains: Vec<DMatrix<f64>>,
    pub closed_loop: Vec<DMatrix<f64>>,
    pub p: Vec<DMatrix<f64>>,
    /// x*_0 .. x*_N
    pub states: Vec<DMatrix<f64>>,
    pub inputs: Vec<DMatrix<f64>>,
    pub cost: f64,
}

/// Backward pass from P_N = `p_terminal`, then forward roll-out from `x0`.
pub fn rlqr_finite_horizon(
    models: &[(DMatrix<f64>, DMatrix<f64>)],
    unc: &UncertaintyModel,
    w: &RlqrWeights,
    p_terminal: &DMatrix<f64>,
    x0: &DMatrix<f64>,
) -> Result<FiniteHorizon, RlqrError> {
    let n = models.len();
    let mut p = vec![DMatrix::zeros(0, 0); n + 1];
    p[n] = p_terminal.clone();
    let mut gains = vec![DMatrix::zeros(0, 0); n];
    let mut closed = vec![DMatrix::zeros(0, 0); n];
    for k in (0..n).rev() {
        let (f, g) = &models[k];
        let step = rlqr_gain(f, g, unc, w, &p[k + 1])?;
        gains[k] = step.k;
        closed[k] = step.l;
        p[k] = step.p_next;
    }
    let mut states = vec![x0.clone()];
    let mut inputs = Vec::with_capacity(n);
    for k in 0..n {
        inputs.push(&gains[k] * &states[k]);
        states.push(&closed[k] * &states[k]);
    }
    let cost = (x0.transpose() * &p[0] * x0)[(0, 0)];
    Ok(FiniteHorizon { gains, closed_loop: closed, p, states, inputs, cost })
}

/// Saturated state feedback α = clamp(K·x, ±limit).
pub fn rlqr_forward_control(x: &LateralState, k: &RowVector4<f64>, steering_limit: f64) -> f64 {
    (k * x.to_vector())[0].clamp(-steering_limit, steering_limit)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum UncertaintySource {
    /// E_A, E_B values from the field experiment.
    #[default]
    Printed,
    /// Built from the payload range at `uncertainty_speed`.
    PayloadRange,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RlqrConfig {
    pub q: [[f64; 4]; 4],
    pub r: f64,
    pub mu: f64,
    pub p0: [[f64; 4]; 4],
    pub steering_limit: f64,
    pub form: RlqrForm,
    pub variant: ModelVariant,
    pub uncertainty: UncertaintySource,
    pub payload_min: f64,
    pub payload_max: f64,
    pub uncertainty_speed: f64,
    /// Controller period, s.
    pub period: f64,
    /// Feed zero for ẏ and ψ̇ (treated as unmeasured).
    pub zero_unmeasured: bool,
}

impl Default for RlqrConfig {
    fn default() -> Self {
        Self {
            q: diag4([0.1, 0.1, 100.0, 15.0]),
            r: 10000.0,
            mu: 1e9,
            p0: diag4([1.0; 4]),
            steering_limit: 0.3491,
            form: RlqrForm::Penalized,
            variant: ModelVariant::AsPrinted,
            uncertainty: UncertaintySource::Printed,
            payload_min: 0.0,
            payload_max: 35000.0,
            uncertainty_speed: 20.0 / 3.6,
            period: 0.1,
            zero_unmeasured: true,
        }
    }
}

fn diag4(d: [f64; 4]) -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    for i in 0..4 {
        m[i][i] = d[i];
    }
    m
}

fn mat4(a: &[[f64; 4]; 4]) -> DMatrix<f64> {
    DMatrix::from_fn(4, 4, |r, c| a[r][c])
}

impl RlqrConfig {
    pub fn weights(&self) -> RlqrWeights {
        RlqrWeights {
            q: mat4(&self.q),
            r: DMatrix::from_element(1, 1, self.r),
            mu: self.mu,
            form: self.form,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let spd = |m: &[[f64; 4]; 4], name: &str| -> Result<(), String> {
            let d = mat4(m);
            if (&d - d.transpose()).amax() > 1e-12 || d.cholesky().is_none() {
                return Err(format!("rlqr.{name} must be symmetric positive definite"));
            }
            Ok(())
        };
        spd(&self.q, "q")?;
        spd(&self.p0, "p0")?;
        if !(self.r > 0.0) {
            return Err("rlqr.r must be positive".into());
        }
        if !(self.mu > 0.0) {
            return Err("rlqr.mu must be positive".into());
        }
        if !(self.steering_limit > 0.0) || !(self.period > 0.0) {
            return Err("rlqr.steering_limit and rlqr.period must be positive".into());
        }
        if self.payload_min > self.payload_max {
            return Err("rlqr.payload_min exceeds rlqr.payload_max".into());
        }
        Ok(())
    }

    pub fn uncertainty_model(&self, lat: &LateralParams) -> Result<UncertaintyModel, RlqrError> {
        match self.uncertainty {
            UncertaintySource::Printed => Ok(UncertaintyModel::printed()),
            UncertaintySource::None => Ok(UncertaintyModel::none(4, 1)),
            UncertaintySource::PayloadRange => uncertainty_matrices(
                lat,
                self.payload_min,
                self.payload_max,
                self.uncertainty_speed,
                self.period,
                self.variant,
            ),
        }
    }
}

/// Forward-only regulator: one gain update per tick, P carried over.
#[derive(Debug, Clone)]
pub struct RlqrController {
    pub cfg: RlqrConfig,
    pub lat: LateralParams,
    pub unc: UncertaintyModel,
    weights: RlqrWeights,
    p: DMatrix<f64>,
    k: RowVector4<f64>,
}

impl RlqrController {
    pub fn new(cfg: RlqrConfig, lat: LateralParams) -> Result<Self, RlqrError> {
        let unc = cfg.uncertainty_model(&lat)?;
        let weights = cfg.weights();
        let p = mat4(&cfg.p0);
        Ok(Self { cfg, lat, unc, weights, p, k: RowVector4::zeros() })
    }

    /// Updates the gain for speed `v` and returns the saturated steering command.
    pub fn tick(&mut self, v: f64, x: &LateralState) -> Result<f64, RlqrError> {
        let sys = discrete_model(&self.lat, v, self.cfg.variant, self.cfg.period);
        let f = DMatrix::from_fn(4, 4, |r, c| sys.fd[(r, c)]);
        let g = DMatrix::from_fn(4, 1, |r, _| sys.gd[r]);
        let gain = rlqr_gain(&f, &g, &self.unc, &self.weights, &self.p)?;
        self.p = gain.p_next;
        self.k = RowVector4::from_fn(|_, c| gain.k[(0, c)]);
        let mut xs = *x;
        if self.cfg.zero_unmeasured {
            xs.y_dot = 0.0;
            xs.psi_dot = 0.0;
        }
        Ok(rlqr_forward_control(&xs, &self.k, self.cfg.steering_limit))
    }

    pub fn gain(&self) -> RowVector4<f64> {
        self.k
    }

    pub fn riccati(&self) -> Matrix4<f64> {
        Matrix4::from_fn(|r, c| self.p[(r, c)])
    }

    /// ‖E_F + E_G K‖ for the current gain.
    pub fn robust_residual(&self) -> f64 {
        let k = DMatrix::from_fn(1, 4, |_, c| self.k[c]);
        self.unc.residual(&k)
    }
}
