//! Run artifacts: summary statistics, SVG plots and run metadata.

use std::fmt::Write as _;

use haultrack::config::ScenarioConfig;
use haultrack::sim::{LogRow, SimStatus};

/// How a run ended. Not recoverable from the log alone, so it travels in the
/// run metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub completed: bool,
    pub reason: Option<String>,
    pub wall_time: f64,
}

impl RunOutcome {
    pub fn from_status(status: &SimStatus, wall_time: f64) -> Self {
        let reason = match status {
            SimStatus::Completed => None,
            SimStatus::DurationCap => Some("duration cap reached before the goal".to_string()),
            SimStatus::Aborted(r) => Some(r.clone()),
        };
        Self { completed: reason.is_none(), reason, wall_time }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub rows: usize,
    pub duration: f64,
    pub max_abs_rho: f64,
    pub rms_rho: f64,
    pub max_abs_theta: f64,
    pub max_abs_alpha_rate: f64,
    pub max_abs_u: f64,
    pub max_v: f64,
    pub max_lat_accel: f64,
    pub outcome: Option<RunOutcome>,
}

impl RunSummary {
    /// One pass over the log rows.
    pub fn from_rows(rows: &[LogRow], outcome: Option<RunOutcome>) -> Self {
        let mut s = RunSummary {
            rows: rows.len(),
            duration: rows.last().map_or(0.0, |r| r.t),
            max_abs_rho: 0.0,
            rms_rho: 0.0,
            max_abs_theta: 0.0,
            max_abs_alpha_rate: 0.0,
            max_abs_u: 0.0,
            max_v: 0.0,
            max_lat_accel: 0.0,
            outcome,
        };
        let mut sum_sq = 0.0;
        let mut prev: Option<&LogRow> = None;
        for r in rows {
            s.max_abs_rho = s.max_abs_rho.max(r.rho.abs());
            sum_sq += r.rho * r.rho;
            s.max_abs_theta = s.max_abs_theta.max(r.theta.abs());
            s.max_abs_u = s.max_abs_u.max(r.u_cmd.abs());
            s.max_v = s.max_v.max(r.v);
            s.max_lat_accel = s.max_lat_accel.max(r.v * r.v * r.f_curv);
            if let Some(p) = prev {
                if r.t > p.t {
                    s.max_abs_alpha_rate = s.max_abs_alpha_rate.max(((r.alpha - p.alpha) / (r.t - p.t)).abs());
                }
            }
            prev = Some(r);
        }
        if !rows.is_empty() {
            s.rms_rho = (sum_sq / rows.len() as f64).sqrt();
        }
        s
    }

    /// Flat `key = value` text.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
        kv("rows", self.rows.to_string());
        kv("duration_s", self.duration.to_string());
        kv("max_abs_rho_m", self.max_abs_rho.to_string());
        kv("rms_rho_m", self.rms_rho.to_string());
        kv("max_abs_theta_rad", self.max_abs_theta.to_string());
        kv("max_abs_alpha_rate_rad_s", self.max_abs_alpha_rate.to_string());
        kv("max_abs_u_n_kg", self.max_abs_u.to_string());
        kv("max_v_m_s", self.max_v.to_string());
        kv("max_v2_fcurv_m_s2", self.max_lat_accel.to_string());
        if let Some(o) = &self.outcome {
            kv("completed", o.completed.to_string());
            if let Some(r) = &o.reason {
                kv("abort_reason", quote(r));
            }
            kv("wall_time_s", o.wall_time.to_string());
        }
        out
    }
}

fn quote(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

/// Resolved configuration plus outcome as flat `section.key = value` lines.
pub fn run_metadata(cfg: &ScenarioConfig, config_file: &str, outcome: &RunOutcome) -> String {
    let tree = toml::Value::try_from(cfg).expect("config serialises");
    let mut out = String::new();
    writeln!(out, "run.config_file = {}", quote(config_file)).unwrap();
    writeln!(out, "run.crate_version = {}", quote(env!("CARGO_PKG_VERSION"))).unwrap();
    flatten("", &tree, &mut out);
    writeln!(out, "outcome.completed = {}", outcome.completed).unwrap();
    if let Some(r) = &outcome.reason {
        writeln!(out, "outcome.reason = {}", quote(r)).unwrap();
    }
    writeln!(out, "outcome.wall_time = {}", outcome.wall_time).unwrap();
    out
}

fn flatten(prefix: &str, v: &toml::Value, out: &mut String) {
    let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        toml::Value::Table(t) => {
            for (k, v) in t {
                flatten(&join(k), v, out);
            }
        }
        toml::Value::Array(a) if a.iter().any(|x| x.is_table()) => {
            for (i, v) in a.iter().enumerate() {
                flatten(&join(&i.to_string()), v, out);
            }
        }
        other => writeln!(out, "{prefix} = {other}").unwrap(),
    }
}

/// Reads the outcome lines back from a metadata file.
pub fn outcome_from_metadata(text: &str) -> Option<RunOutcome> {
    let mut completed = None;
    let mut reason = None;
    let mut wall = None;
    for line in text.lines() {
        let Some((k, v)) = line.split_once(" = ") else { continue };
        match k {
            "outcome.completed" => completed = v.parse::<bool>().ok(),
            "outcome.reason" => {
                reason = format!("v = {v}").parse::<toml::Table>().ok().and_then(|t| t["v"].as_str().map(String::from))
            }
            "outcome.wall_time" => wall = v.parse::<f64>().ok(),
            _ => {}
        }
    }
    Some(RunOutcome { completed: completed?, reason, wall_time: wall? })
}

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
}

/// 1, 2 or 5 times a power of ten, giving about `target` intervals.
fn nice_step(span: f64, target: f64) -> f64 {
    let raw = span / target;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let m = if f < 1.5 {
        1.0
    } else if f < 3.5 {
        2.0
    } else if f < 7.5 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn fmt_tick(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    format!("{v:.decimals$}")
}

/// Standalone SVG line plot with axes, ticks, labels and a legend.
pub fn svg_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let (w, h) = (800.0, 360.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 36.0, 48.0);
    let pw = w - ml - mr;
    let ph = h - mt - mb;

    let all = series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        let pad = y0.abs().max(1.0) * 0.1;
        y0 -= pad;
        y1 += pad;
    }
    let xs = nice_step(x1 - x0, 8.0);
    let ys = nice_step(y1 - y0, 5.0);
    x0 = (x0 / xs).floor() * xs;
    x1 = (x1 / xs).ceil() * xs;
    y0 = (y0 / ys).floor() * ys;
    y1 = (y1 / ys).ceil() * ys;
    let px = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| mt + (y1 - y) / (y1 - y0) * ph;

    let mut o = String::new();
    writeln!(o, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(o, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(o, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, w / 2.0, esc(title)).unwrap();

    let mut t = x0;
    while t <= x1 + xs * 1e-6 {
        let x = px(t);
        writeln!(o, r##"<line x1="{x:.1}" y1="{mt}" x2="{x:.1}" y2="{:.1}" stroke="#e4e4e4"/>"##, mt + ph).unwrap();
        writeln!(o, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, mt + ph + 16.0, fmt_tick(t, xs)).unwrap();
        t += xs;
    }
    let mut t = y0;
    while t <= y1 + ys * 1e-6 {
        let y = py(t);
        writeln!(o, r##"<line x1="{ml}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#e4e4e4"/>"##, ml + pw).unwrap();
        writeln!(o, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, ml - 6.0, y + 4.0, fmt_tick(t, ys)).unwrap();
        t += ys;
    }
    writeln!(o, r#"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#).unwrap();
    writeln!(o, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, ml + pw / 2.0, h - 10.0, esc(xlabel)).unwrap();
    writeln!(
        o,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        mt + ph / 2.0,
        mt + ph / 2.0,
        esc(ylabel)
    )
    .unwrap();

    for (i, s) in series.iter().enumerate() {
        // keep files small on long runs
        let stride = (s.points.len() / 4000).max(1);
        let pts: Vec<String> = s
            .points
            .iter()
            .step_by(stride)
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y)))
            .collect();
        writeln!(o, r#"<polyline fill="none" stroke="{}" stroke-width="1.3" points="{}"/>"#, s.color, pts.join(" ")).unwrap();
        let ly = mt + 14.0 + 16.0 * i as f64;
        let lx = ml + pw - 150.0;
        writeln!(o, r#"<line x1="{lx:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{}" stroke-width="2"/>"#, ly - 4.0, lx + 20.0, ly - 4.0, s.color).unwrap();
        writeln!(o, r#"<text x="{:.1}" y="{ly:.1}">{}</text>"#, lx + 26.0, esc(s.label)).unwrap();
    }
    o.push_str("</svg>\n");
    o
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// The six time-history panels: (file name, svg text).
pub fn plots(rows: &[LogRow]) -> Vec<(&'static str, String)> {
    let col = |f: &dyn Fn(&LogRow) -> f64| rows.iter().map(|r| (r.t, f(r))).collect::<Vec<_>>();
    vec![
        (
            "altitude.svg",
            svg_plot("Altitude profile", "time [s]", "altitude [m]", &[Series { label: "altitude", color: "#8c564b", points: col(&|r| r.altitude) }]),
        ),
        (
            "throttle_brake.svg",
            svg_plot(
                "Throttle and brake",
                "time [s]",
                "command [%]",
                &[
                    Series { label: "throttle [%]", color: "#2ca02c", points: col(&|r| r.throttle) },
                    Series { label: "brake [%]", color: "#d62728", points: col(&|r| 100.0 * r.brake) },
                ],
            ),
        ),
        (
            "velocity.svg",
            svg_plot(
                "Velocity",
                "time [s]",
                "speed [m/s]",
                &[
                    Series { label: "v", color: "#1f77b4", points: col(&|r| r.v) },
                    Series { label: "planned v_ref", color: "#ff7f0e", points: col(&|r| r.v_ref_cmd) },
                    Series { label: "v_lim", color: "#7f7f7f", points: col(&|r| r.v_lim) },
                ],
            ),
        ),
        (
            "steering.svg",
            svg_plot(
                "Steering angle",
                "time [s]",
                "angle [rad]",
                &[
                    Series { label: "applied", color: "#1f77b4", points: col(&|r| r.alpha) },
                    Series { label: "commanded", color: "#ff7f0e", points: col(&|r| r.alpha_cmd) },
                ],
            ),
        ),
        (
            "heading_error.svg",
            svg_plot("Heading error", "time [s]", "theta [rad]", &[Series { label: "theta", color: "#9467bd", points: col(&|r| r.theta) }]),
        ),
        (
            "lateral_displacement.svg",
            svg_plot("Lateral displacement", "time [s]", "rho [m]", &[Series { label: "rho", color: "#17becf", points: col(&|r| r.rho) }]),
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64, rho: f64, alpha: f64) -> LogRow {
        LogRow { t, rho, alpha, v: 2.0, f_curv: 0.01, ..Default::default() }
    }

    #[test]
    fn summary_of_small_log() {
        let rows = [row(0.0, 0.3, 0.0), row(0.05, -0.4, 0.01), row(0.1, 0.0, 0.0)];
        let s = RunSummary::from_rows(&rows, None);
        assert_eq!(s.max_abs_rho, 0.4);
        assert!((s.rms_rho - (0.25f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((s.max_abs_alpha_rate - 0.2).abs() < 1e-12);
        assert!((s.max_lat_accel - 0.04).abs() < 1e-15);
        assert!(!s.to_text().contains("completed"));
    }

    #[test]
    fn outcome_round_trips_through_metadata() {
        let o = RunOutcome { completed: false, reason: Some("non-finite state at t = 3 \"x\"".into()), wall_time: 0.25 };
        let meta = run_metadata(&ScenarioConfig::default(), "a.toml", &o);
        assert_eq!(outcome_from_metadata(&meta), Some(o));
        assert!(meta.contains("nmpc.w1 = "));
        assert!(meta.contains("path.route.segments.0.kind = \"straight\""));
    }

    #[test]
    fn ticks_are_round() {
        assert_eq!(nice_step(100.0, 5.0), 20.0);
        assert_eq!(nice_step(0.7, 5.0), 0.1);
        assert_eq!(fmt_tick(0.30000000000000004, 0.1), "0.3");
    }

    #[test]
    fn flat_series_still_plots() {
        let svg = svg_plot("t", "x", "y", &[Series { label: "c", color: "black", points: vec![(0.0, 2.0), (1.0, 2.0)] }]);
        assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
        assert!(!svg.contains("NaN"));
    }
}
