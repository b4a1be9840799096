//! Arc-length indexed reference path and the geometric queries the
//! controllers need (slope, curvature, projection of a pose).

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PathError {
    #[error("need at least 3 waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("waypoints {0} and {} coincide", .0 + 1)]
    DegenerateSegment(usize),
    #[error("sample spacing must be positive and finite, got {0}")]
    InvalidSpacing(f64),
    #[error("waypoint {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("ambiguous projection: samples at s = {s_a:.3} and s = {s_b:.3} are equally close")]
    AmbiguousProjection { s_a: f64, s_b: f64 },
    #[error("waypoint file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("waypoint file: {0}")]
    Io(#[from] std::io::Error),
}

/// A planar waypoint with altitude. Heading is in (−π, π].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub altitude: f64,
}

impl Waypoint {
    pub fn new(x: f64, y: f64, heading: f64, altitude: f64) -> Self {
        Self { x, y, heading: wrap_angle(heading), altitude }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub s: f64,
    pub wp: Waypoint,
    /// Signed curvature, positive for left turns.
    pub curvature: f64,
}

/// Result of projecting a vehicle pose onto the path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathProjection {
    pub s: f64,
    /// Signed lateral offset, positive when the pose is left of the tangent.
    pub rho: f64,
    /// Heading error ψ − ψ_des, wrapped to (−π, π].
    pub theta: f64,
    pub curvature: f64,
    pub slope: f64,
}

/// Uniformly resampled path. Immutable once built.
#[derive(Debug, Clone)]
pub struct PathMap {
    samples: Vec<PathSample>,
    spacing: f64,
    total_length: f64,
    slope_window: f64,
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

// 5-point Gauss-Legendre on [-1, 1]
const GL_X: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_W: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

/// One cubic Hermite piece in chord parameter t ∈ [0, h].
#[derive(Debug, Clone, Copy)]
struct Piece {
    p0: [f64; 2],
    p1: [f64; 2],
    d0: [f64; 2],
    d1: [f64; 2],
    h: f64,
    z0: f64,
    z1: f64,
}

impl Piece {
    fn point(&self, t: f64) -> [f64; 2] {
        let u = t / self.h;
        let (u2, u3) = (u * u, u * u * u);
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        let f = |k: usize| {
            h00 * self.p0[k] + h10 * self.h * self.d0[k] + h01 * self.p1[k] + h11 * self.h * self.d1[k]
        };
        [f(0), f(1)]
    }

    fn tangent(&self, t: f64) -> [f64; 2] {
        let u = t / self.h;
        let u2 = u * u;
        let g00 = (6.0 * u2 - 6.0 * u) / self.h;
        let g10 = 3.0 * u2 - 4.0 * u + 1.0;
        let g01 = (-6.0 * u2 + 6.0 * u) / self.h;
        let g11 = 3.0 * u2 - 2.0 * u;
        let f = |k: usize| g00 * self.p0[k] + g10 * self.d0[k] + g01 * self.p1[k] + g11 * self.d1[k];
        [f(0), f(1)]
    }

    fn speed(&self, t: f64) -> f64 {
        let d = self.tangent(t);
        d[0].hypot(d[1])
    }

    /// Arc length from 0 to t, composite Gauss-Legendre over 4 panels.
    fn arc(&self, t: f64) -> f64 {
        const PANELS: usize = 4;
        let w = t / PANELS as f64;
        let mut acc = 0.0;
        for k in 0..PANELS {
            let mid = (k as f64 + 0.5) * w;
            for (x, wt) in GL_X.iter().zip(GL_W.iter()) {
                acc += wt * self.speed(mid + 0.5 * w * x);
            }
        }
        acc * 0.5 * w
    }

    /// Chord parameter whose arc length equals `target` (Newton, bisection fallback).
    fn invert(&self, target: f64, length: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, self.h);
        let mut t = self.h * (target / length).clamp(0.0, 1.0);
        for _ in 0..50 {
            let g = self.arc(t) - target;
            if g.abs() < 1e-12 {
                break;
            }
            if g > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let sp = self.speed(t);
            let mut next = if sp > 1e-12 { t - g / sp } else { 0.5 * (lo + hi) };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            t = next;
        }
        t
    }
}

fn circumscribed_curvature(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let bc = [c[0] - b[0], c[1] - b[1]];
    let ac = [c[0] - a[0], c[1] - a[1]];
    let cross = ab[0] * bc[1] - ab[1] * bc[0];
    let denom = ab[0].hypot(ab[1]) * bc[0].hypot(bc[1]) * ac[0].hypot(ac[1]);
    if denom < 1e-15 {
        0.0
    } else {
        2.0 * cross / denom
    }
}

/// Resamples waypoints at uniform arc length. Positions follow a chord-
/// parameterised cubic Hermite curve through the input points; headings come
/// from its tangent, curvature from the circumscribed circle through each
/// resampled point and its neighbours.
pub fn build_path(waypoints: &[Waypoint], spacing: f64) -> Result<PathMap, PathError> {
    if waypoints.len() < 3 {
        return Err(PathError::TooFewWaypoints(waypoints.len()));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(PathError::InvalidSpacing(spacing));
    }
    for (i, w) in waypoints.iter().enumerate() {
        if !(w.x.is_finite() && w.y.is_finite() && w.altitude.is_finite()) {
            return Err(PathError::NonFinite(i));
        }
    }
    let n = waypoints.len();
    let pts: Vec<[f64; 2]> = waypoints.iter().map(|w| [w.x, w.y]).collect();
    let mut h = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        let d = (pts[i + 1][0] - pts[i][0]).hypot(pts[i + 1][1] - pts[i][1]);
        if d < 1e-9 {
            return Err(PathError::DegenerateSegment(i));
        }
        h.push(d);
    }
    let delta: Vec<[f64; 2]> = (0..n - 1)
        .map(|i| [(pts[i + 1][0] - pts[i][0]) / h[i], (pts[i + 1][1] - pts[i][1]) / h[i]])
        .collect();

    // Bessel tangents (derivative of the local interpolating parabola)
    let mut d = vec![[0.0; 2]; n];
    for i in 1..n - 1 {
        let (ha, hb) = (h[i - 1], h[i]);
        for k in 0..2 {
            d[i][k] = (hb * delta[i - 1][k] + ha * delta[i][k]) / (ha + hb);
        }
    }
    for k in 0..2 {
        d[0][k] = 2.0 * delta[0][k] - d[1][k];
        d[n - 1][k] = 2.0 * delta[n - 2][k] - d[n - 2][k];
    }

    let pieces: Vec<Piece> = (0..n - 1)
        .map(|i| Piece {
            p0: pts[i],
            p1: pts[i + 1],
            d0: d[i],
            d1: d[i + 1],
            h: h[i],
            z0: waypoints[i].altitude,
            z1: waypoints[i + 1].altitude,
        })
        .collect();
    let lengths: Vec<f64> = pieces.iter().map(|p| p.arc(p.h)).collect();
    let mut cum = vec![0.0; n];
    for i in 0..n - 1 {
        cum[i + 1] = cum[i] + lengths[i];
    }
    let total = cum[n - 1];
    let segs = ((total / spacing).round() as usize).max(2);
    let ds = total / segs as f64;

    let mut xy = Vec::with_capacity(segs + 1);
    let mut heading = Vec::with_capacity(segs + 1);
    let mut alt = Vec::with_capacity(segs + 1);
    let mut k = 0;
    for j in 0..=segs {
        let s = if j == segs { total } else { j as f64 * ds };
        while k + 1 < n - 1 && s > cum[k + 1] {
            k += 1;
        }
        let piece = &pieces[k];
        let t = piece.invert(s - cum[k], lengths[k]);
        let p = piece.point(t);
        let tan = piece.tangent(t);
        let u = (t / piece.h).clamp(0.0, 1.0);
        xy.push(p);
        heading.push(wrap_angle(tan[1].atan2(tan[0])));
        alt.push(piece.z0 + u * (piece.z1 - piece.z0));
    }

    let mut curv = vec![0.0; segs + 1];
    for j in 1..segs {
        curv[j] = circumscribed_curvature(xy[j - 1], xy[j], xy[j + 1]);
    }
    curv[0] = curv[1];
    curv[segs] = curv[segs - 1];

    let samples = (0..=segs)
        .map(|j| PathSample {
            s: j as f64 * ds,
            wp: Waypoint { x: xy[j][0], y: xy[j][1], heading: heading[j], altitude: alt[j] },
            curvature: curv[j],
        })
        .collect();
    Ok(PathMap { samples, spacing: ds, total_length: segs as f64 * ds, slope_window: 20.0 })
}

impl PathMap {
    /// Builds a map directly from already uniformly spaced samples
    /// (sample j sits at s = j·spacing). Used for analytic test paths.
    pub fn from_uniform(
        spacing: f64,
        waypoints: &[Waypoint],
        curvature: &[f64],
    ) -> Result<Self, PathError> {
        if waypoints.len() < 3 {
            return Err(PathError::TooFewWaypoints(waypoints.len()));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(PathError::InvalidSpacing(spacing));
        }
        assert_eq!(waypoints.len(), curvature.len(), "one curvature per waypoint");
        let samples: Vec<PathSample> = waypoints
            .iter()
            .zip(curvature)
            .enumerate()
            .map(|(j, (w, &c))| PathSample { s: j as f64 * spacing, wp: *w, curvature: c })
            .collect();
        for (i, p) in samples.iter().enumerate() {
            if !(p.wp.x.is_finite() && p.wp.y.is_finite() && p.wp.altitude.is_finite() && p.curvature.is_finite()) {
                return Err(PathError::NonFinite(i));
            }
        }
        let total_length = (samples.len() - 1) as f64 * spacing;
        Ok(Self { samples, spacing, total_length, slope_window: 20.0 })
    }

    /// Default window used for `PathProjection::slope`.
    pub fn with_slope_window(mut self, delta_s: f64) -> Self {
        self.slope_window = delta_s;
        self
    }

    pub fn samples(&self) -> &[PathSample] {
        &self.samples
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn sample_spacing(&self) -> f64 {
        self.spacing
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let s = s.clamp(0.0, self.total_length);
        let last = self.samples.len() - 2;
        let i = ((s / self.spacing).floor() as usize).min(last);
        let frac = ((s - i as f64 * self.spacing) / self.spacing).clamp(0.0, 1.0);
        (i, frac)
    }

    fn lerp(&self, s: f64, f: impl Fn(&PathSample) -> f64) -> f64 {
        let (i, u) = self.locate(s);
        let a = f(&self.samples[i]);
        let b = f(&self.samples[i + 1]);
        a + u * (b - a)
    }

    pub fn altitude_at(&self, s: f64) -> f64 {
        self.lerp(s, |p| p.wp.altitude)
    }

    /// Road slope from a central altitude difference over ±delta_s.
    /// Lookups beyond the ends are clamped.
    pub fn slope_at(&self, s: f64, delta_s: f64) -> f64 {
        let rise = self.altitude_at(s + delta_s) - self.altitude_at(s - delta_s);
        (rise / (2.0 * delta_s)).atan()
    }

    /// Absolute curvature f_curv(s).
    pub fn curvature_at(&self, s: f64) -> f64 {
        self.signed_curvature_at(s).abs()
    }

    pub fn signed_curvature_at(&self, s: f64) -> f64 {
        self.lerp(s, |p| p.curvature)
    }

    pub fn point_at(&self, s: f64) -> (f64, f64) {
        (self.lerp(s, |p| p.wp.x), self.lerp(s, |p| p.wp.y))
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        let (i, u) = self.locate(s);
        let a = self.samples[i].wp.heading;
        let b = self.samples[i + 1].wp.heading;
        wrap_angle(a + u * wrap_angle(b - a))
    }

    /// Projection of (x, y, heading) on the path using the globally nearest sample.
    pub fn project(&self, x: f64, y: f64, heading: f64) -> Result<PathProjection, PathError> {
        let d2: Vec<f64> = self.samples.iter().map(|p| sq_dist(p, x, y)).collect();
        let (best, &dmin2) = d2
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("path has samples");
        let dmin = dmin2.sqrt();
        for (j, &dj2) in d2.iter().enumerate() {
            if j.abs_diff(best) > 1 && (dj2.sqrt() - dmin).abs() <= 1e-6 {
                return Err(PathError::AmbiguousProjection {
                    s_a: self.samples[best].s,
                    s_b: self.samples[j].s,
                });
            }
        }
        Ok(self.refine(best, x, y, heading))
    }

    /// Projection restricted to samples within `window` metres of `s_hint`.
    /// No ambiguity check; intended for tracking a pose that moves continuously.
    pub fn project_near(&self, x: f64, y: f64, heading: f64, s_hint: f64, window: f64) -> PathProjection {
        let lo = ((s_hint - window) / self.spacing).floor().max(0.0) as usize;
        let hi = (((s_hint + window) / self.spacing).ceil() as usize).min(self.samples.len() - 1);
        let lo = lo.min(hi);
        let mut best = lo;
        let mut bd = f64::INFINITY;
        for j in lo..=hi {
            let d = sq_dist(&self.samples[j], x, y);
            if d < bd {
                bd = d;
                best = j;
            }
        }
        self.refine(best, x, y, heading)
    }

    fn refine(&self, i: usize, x: f64, y: f64, heading: f64) -> PathProjection {
        let n = self.samples.len();
        let s = if i == 0 || i == n - 1 {
            // end sample: foot point on the single adjacent segment
            let (a, b) = if i == 0 { (0, 1) } else { (n - 2, n - 1) };
            let pa = &self.samples[a].wp;
            let pb = &self.samples[b].wp;
            let (tx, ty) = (pb.x - pa.x, pb.y - pa.y);
            let u = ((x - pa.x) * tx + (y - pa.y) * ty) / (tx * tx + ty * ty);
            self.samples[a].s + u.clamp(0.0, 1.0) * self.spacing
        } else {
            let fa = sq_dist(&self.samples[i - 1], x, y);
            let fb = sq_dist(&self.samples[i], x, y);
            let fc = sq_dist(&self.samples[i + 1], x, y);
            let den = fa - 2.0 * fb + fc;
            let off = if den > 1e-300 { (0.5 * (fa - fc) / den).clamp(-1.0, 1.0) } else { 0.0 };
            self.samples[i].s + off * self.spacing
        };
        let s = s.clamp(0.0, self.total_length);
        let (px, py) = self.point_at(s);
        let psi = self.heading_at(s);
        let rho = -(x - px) * psi.sin() + (y - py) * psi.cos();
        PathProjection {
            s,
            rho,
            theta: wrap_angle(heading - psi),
            curvature: self.signed_curvature_at(s),
            slope: self.slope_at(s, self.slope_window),
        }
    }
}

fn sq_dist(p: &PathSample, x: f64, y: f64) -> f64 {
    let dx = p.wp.x - x;
    let dy = p.wp.y - y;
    dx * dx + dy * dy
}

pub const WAYPOINT_HEADER: &str = "x_m,y_m,heading_rad,altitude_m";

/// Parses the comma-separated waypoint format (header line required).
pub fn parse_waypoints(text: &str) -> Result<Vec<Waypoint>, PathError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, l)) if l.trim().replace(' ', "") == WAYPOINT_HEADER => {}
        Some((i, _)) => {
            return Err(PathError::Parse { line: i + 1, msg: format!("expected header `{WAYPOINT_HEADER}`") })
        }
        None => return Err(PathError::Parse { line: 1, msg: "empty file".into() }),
    }
    let mut out = Vec::new();
    for (i, l) in lines {
        let cols: Vec<&str> = l.split(',').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(PathError::Parse { line: i + 1, msg: format!("expected 4 columns, got {}", cols.len()) });
        }
        let mut v = [0.0; 4];
        for (k, c) in cols.iter().enumerate() {
            v[k] = c
                .parse()
                .map_err(|_| PathError::Parse { line: i + 1, msg: format!("bad number `{c}`") })?;
        }
        out.push(Waypoint::new(v[0], v[1], v[2], v[3]));
    }
    Ok(out)
}

pub fn read_waypoints(path: &Path) -> Result<Vec<Waypoint>, PathError> {
    parse_waypoints(&std::fs::read_to_string(path)?)
}

pub fn format_waypoints(wps: &[Waypoint]) -> String {
    let mut s = String::with_capacity(48 * (wps.len() + 1));
    s.push_str(WAYPOINT_HEADER);
    s.push('\n');
    for w in wps {
        let _ = writeln!(s, "{},{},{},{}", w.x, w.y, w.heading, w.altitude);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, step: f64) -> Vec<Waypoint> {
        (0..n).map(|i| Waypoint::new(i as f64 * step, 0.0, 0.0, 0.0)).collect()
    }

    fn circle(r: f64, n: usize, sweep: f64) -> Vec<Waypoint> {
        (0..n)
            .map(|i| {
                let a = sweep * i as f64 / (n - 1) as f64;
                Waypoint::new(r * a.sin(), r * (1.0 - a.cos()), a, 0.0)
            })
            .collect()
    }

    #[test]
    fn collinear_points_give_21_flat_samples() {
        let p = build_path(&line(3, 10.0), 1.0).unwrap();
        assert_eq!(p.samples().len(), 21);
        assert!(p.samples().iter().all(|s| s.curvature.abs() < 1e-12));
        assert!((p.total_length() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn circle_curvature_and_length() {
        let p = build_path(&circle(50.0, 40, PI), 1.0).unwrap();
        let n = p.samples().len();
        for s in &p.samples()[1..n - 1] {
            assert!((s.curvature - 0.02).abs() < 1e-3, "{}", s.curvature);
        }
        assert!((p.total_length() - 50.0 * PI).abs() / (50.0 * PI) < 1e-3);
        // uniform spacing
        for w in p.samples().windows(2) {
            assert!((w[1].s - w[0].s - p.sample_spacing()).abs() < 1e-9);
        }
    }

    #[test]
    fn reversed_circle_flips_curvature_sign() {
        let mut wps = circle(50.0, 40, PI);
        wps.reverse();
        let p = build_path(&wps, 1.0).unwrap();
        assert!((p.signed_curvature_at(50.0) + 0.02).abs() < 1e-3);
        assert!((p.curvature_at(50.0) - 0.02).abs() < 1e-3);
    }

    #[test]
    fn build_errors() {
        assert!(matches!(build_path(&line(2, 1.0), 1.0), Err(PathError::TooFewWaypoints(2))));
        let mut w = line(4, 1.0);
        w[2] = w[1];
        assert!(matches!(build_path(&w, 1.0), Err(PathError::DegenerateSegment(1))));
        assert!(matches!(build_path(&line(4, 1.0), 0.0), Err(PathError::InvalidSpacing(_))));
    }

    fn ramp(rise_per_m: f64) -> PathMap {
        let wps: Vec<Waypoint> =
            (0..101).map(|i| Waypoint::new(i as f64, 0.0, 0.0, rise_per_m * i as f64)).collect();
        build_path(&wps, 1.0).unwrap()
    }

    #[test]
    fn slope_examples() {
        assert_eq!(ramp(0.0).slope_at(50.0, 20.0), 0.0);
        let up = ramp(0.1).slope_at(50.0, 20.0);
        assert!((up - 0.1f64.atan()).abs() < 1e-12);
        assert!((up - 0.099_668_652_491_162).abs() < 1e-9);
        assert_eq!(ramp(-0.1).slope_at(50.0, 20.0), -up);
    }

    #[test]
    fn curvature_clamps_past_end() {
        let p = build_path(&circle(50.0, 40, PI / 2.0), 1.0).unwrap();
        let last = p.samples().last().unwrap().curvature;
        assert_eq!(p.signed_curvature_at(p.total_length() + 30.0), last);
        assert_eq!(build_path(&line(5, 5.0), 1.0).unwrap().curvature_at(7.3), 0.0);
    }

    #[test]
    fn projection_examples() {
        let p = build_path(&line(21, 1.0), 1.0).unwrap();
        let a = p.project(5.0, 0.0, 0.0).unwrap();
        assert!(a.rho.abs() < 1e-12 && a.theta == 0.0 && (a.s - 5.0).abs() < 1e-12);
        let b = p.project(10.0, 1.0, 0.0).unwrap();
        assert!((b.s - 10.0).abs() < 1e-9 && (b.rho - 1.0).abs() < 1e-12 && b.theta == 0.0);
        let c = p.project(10.0, 0.0, 0.1).unwrap();
        assert!((c.theta - 0.1).abs() < 1e-15);
        let d = p.project(10.0, -2.0, 0.0).unwrap();
        assert!((d.rho + 2.0).abs() < 1e-12);
    }

    #[test]
    fn projection_ambiguous_at_circle_centre() {
        let p = build_path(&circle(30.0, 60, 2.0 * PI * 0.999), 1.0).unwrap();
        assert!(matches!(p.project(0.0, 30.0, 0.0), Err(PathError::AmbiguousProjection { .. })));
    }

    #[test]
    fn points_on_path_project_to_zero_offset() {
        let p = build_path(&circle(40.0, 30, 2.0), 1.0).unwrap();
        for smp in p.samples() {
            let pr = p.project(smp.wp.x, smp.wp.y, smp.wp.heading).unwrap();
            assert!(pr.rho.abs() < 1e-6, "s={} rho={}", smp.s, pr.rho);
            assert!(pr.theta.abs() < 1e-6, "s={} theta={} s_proj={}", smp.s, pr.theta, pr.s);
            assert!((pr.s - smp.s).abs() < 1e-6);
        }
    }

    #[test]
    fn waypoint_file_round_trip() {
        let w = circle(20.0, 7, 1.0);
        let text = format_waypoints(&w);
        let back = parse_waypoints(&text).unwrap();
        assert_eq!(w, back);
        assert!(matches!(parse_waypoints("1,2,3,4\n"), Err(PathError::Parse { line: 1, .. })));
        assert!(parse_waypoints(&format!("{WAYPOINT_HEADER}\n1,2,x,4\n")).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(-PI), PI);
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }
}
