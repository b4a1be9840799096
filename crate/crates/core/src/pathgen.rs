//! Synthetic routes built from straights and circular arcs with a grade per segment.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::path::{wrap_angle, Waypoint};

#[derive(Debug, Error, PartialEq)]
#[error("invalid path spec: {0}")]
pub struct InvalidSpec(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Segment {
    Straight {
        length: f64,
        #[serde(default)]
        grade: f64,
    },
    /// Positive angle turns left.
    Arc {
        radius: f64,
        angle_deg: f64,
        #[serde(default)]
        grade: f64,
    },
}

impl Segment {
    pub fn length(&self) -> f64 {
        match *self {
            Segment::Straight { length, .. } => length,
            Segment::Arc { radius, angle_deg, .. } => radius * angle_deg.to_radians().abs(),
        }
    }

    pub fn grade(&self) -> f64 {
        match *self {
            Segment::Straight { grade, .. } | Segment::Arc { grade, .. } => grade,
        }
    }

    /// Signed curvature.
    pub fn curvature(&self) -> f64 {
        match *self {
            Segment::Straight { .. } => 0.0,
            Segment::Arc { radius, angle_deg, .. } => angle_deg.signum() / radius,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StartPose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub altitude: f64,
}

impl Default for StartPose {
    fn default() -> Self {
        Self { x: 0.0, y: 0.0, heading: 0.0, altitude: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathSpec {
    /// Waypoint spacing along each segment, m.
    pub spacing: f64,
    pub start: StartPose,
    pub segments: Vec<Segment>,
}

impl Default for PathSpec {
    fn default() -> Self {
        Self::haul_route()
    }
}

impl PathSpec {
    /// 2 km haul route: left and right arcs (R 150 to 250 m) with climbs and
    /// descents up to 6 %.
    pub fn haul_route() -> Self {
        use Segment::*;
        Self {
            spacing: 1.0,
            start: StartPose::default(),
            segments: vec![
                Straight { length: 150.0, grade: 0.0 },
                Arc { radius: 150.0, angle_deg: 60.0, grade: 0.03 },
                Straight { length: 200.0, grade: 0.06 },
                Arc { radius: 180.0, angle_deg: -90.0, grade: 0.0 },
                Straight { length: 180.0, grade: -0.06 },
                Arc { radius: 250.0, angle_deg: 45.0, grade: -0.03 },
                Straight { length: 250.0, grade: 0.0 },
                Arc { radius: 150.0, angle_deg: -60.0, grade: 0.02 },
                Straight { length: 200.0, grade: 0.05 },
                Arc { radius: 160.0, angle_deg: 40.0, grade: -0.04 },
                Straight { length: 0.0, grade: 0.0 },
            ],
        }
        .padded_to(2000.0)
    }

    /// Sets the final straight so the route totals `total` metres.
    fn padded_to(mut self, total: f64) -> Self {
        let body: f64 = self.segments[..self.segments.len() - 1].iter().map(Segment::length).sum();
        if let Some(Segment::Straight { length, .. }) = self.segments.last_mut() {
            *length = total - body;
        }
        self
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(Segment::length).sum()
    }

    pub fn validate(&self) -> Result<(), InvalidSpec> {
        let err = |m: String| Err(InvalidSpec(m));
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return err(format!("spacing must be positive, got {}", self.spacing));
        }
        let s = &self.start;
        if ![s.x, s.y, s.heading, s.altitude].iter().all(|v| v.is_finite()) {
            return err("start pose must be finite".into());
        }
        if self.segments.is_empty() {
            return err("no segments".into());
        }
        for (i, seg) in self.segments.iter().enumerate() {
            let g = seg.grade();
            if !(g.is_finite() && g.abs() < 1.0) {
                return err(format!("segment {i}: grade {g} outside (-1, 1)"));
            }
            match *seg {
                Segment::Straight { length, .. } => {
                    if !(length > 0.0 && length.is_finite()) {
                        return err(format!("segment {i}: straight length must be positive, got {length}"));
                    }
                }
                Segment::Arc { radius, angle_deg, .. } => {
                    if !(radius > 0.0 && radius.is_finite()) {
                        return err(format!("segment {i}: radius must be positive, got {radius}"));
                    }
                    if !(angle_deg != 0.0 && angle_deg.abs() < 360.0) {
                        return err(format!("segment {i}: angle must be non-zero and below 360 deg, got {angle_deg}"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Waypoints along the spec, one every `spacing` metres (rounded per segment),
/// starting with the start pose.
pub fn generate(spec: &PathSpec) -> Result<Vec<Waypoint>, InvalidSpec> {
    spec.validate()?;
    let st = spec.start;
    let (mut x, mut y, mut psi, mut z) = (st.x, st.y, st.heading, st.altitude);
    let mut out = vec![Waypoint::new(x, y, psi, z)];
    for seg in &spec.segments {
        let len = seg.length();
        let n = ((len / spec.spacing) - 1e-9).ceil().max(1.0) as usize;
        let ds = len / n as f64;
        let kappa = seg.curvature();
        let (x0, y0, psi0, z0) = (x, y, psi, z);
        for k in 1..=n {
            let t = k as f64 * ds;
            if kappa == 0.0 {
                x = x0 + t * psi0.cos();
                y = y0 + t * psi0.sin();
            } else {
                psi = psi0 + kappa * t;
                x = x0 + (psi.sin() - psi0.sin()) / kappa;
                y = y0 - (psi.cos() - psi0.cos()) / kappa;
            }
            z = z0 + seg.grade() * t;
            out.push(Waypoint::new(x, y, psi, z));
        }
        psi = wrap_angle(psi);
    }
    if out.len() < 3 {
        return Err(InvalidSpec("spec yields fewer than 3 waypoints".into()));
    }
    Ok(out)
}
