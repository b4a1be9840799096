//! Scenario configuration: TOML sections for every component, dotted-key
//! overrides, and validation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lateral::{LateralParams, ModelVariant};
use crate::longitudinal::LongitudinalParams;
use crate::nmpc::NmpcConfig;
use crate::pathgen::PathSpec;
use crate::rlqr::RlqrConfig;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {msg}")]
    BadValue { key: String, msg: String },
    #[error("override `{0}` is not of the form key=value")]
    Malformed(String),
    #[error("invalid configuration: `{key}`: {msg}")]
    Invalid { key: String, msg: String },
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// RK4 step, s.
    pub plant_step: f64,
    pub duration_cap: f64,
    pub goal_tolerance: f64,
    /// Log every n-th plant step.
    pub log_decimation: usize,
    pub seed: u64,
    pub initial_speed: f64,
    /// Initial lateral offset from the path start, m (left positive).
    pub initial_offset: f64,
    pub initial_heading_error: f64,
    /// Std. dev. of a seeded random addition to the initial offset, m.
    pub offset_jitter: f64,
    /// Steering actuator rate limit, rad/s.
    pub steer_rate_limit: f64,
    pub gear: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            plant_step: 0.01,
            duration_cap: 900.0,
            goal_tolerance: 2.0,
            log_decimation: 5,
            seed: 0,
            initial_speed: 2.0,
            initial_offset: 0.0,
            initial_heading_error: 0.0,
            offset_jitter: 0.0,
            steer_rate_limit: 0.6,
            gear: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleConfig {
    pub m1: f64,
    /// Payload actually carried by the simulated truck, kg.
    pub plant_payload: f64,
    /// Payload assumed by both controllers' models, kg.
    pub controller_payload: f64,
    pub plant_variant: ModelVariant,
}

impl Default for VehicleConfig {
    fn default() -> Self {
        Self {
            m1: 16030.0,
            plant_payload: 35000.0,
            controller_payload: 12550.0,
            plant_variant: ModelVariant::StandardBicycle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PiGains {
    pub kp: f64,
    pub ki: f64,
    pub k_b: f64,
}

impl Default for PiGains {
    fn default() -> Self {
        Self { kp: 0.8, ki: 0.2, k_b: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathConfig {
    /// Waypoint file; empty means generate from `route`.
    pub file: String,
    /// Resampling spacing, m.
    pub spacing: f64,
    pub route: PathSpec,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self { file: String::new(), spacing: 1.0, route: PathSpec::haul_route() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub sim: SimConfig,
    pub vehicle: VehicleConfig,
    pub path: PathConfig,
    pub pi: PiGains,
    pub nmpc: NmpcConfig,
    pub rlqr: RlqrConfig,
    pub longitudinal: LongitudinalParams,
    pub lateral: LateralParams,
}

fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), msg: msg.into() }
}

impl ScenarioConfig {
    /// Longitudinal model with the given payload and the vehicle's m1.
    pub fn longitudinal_with(&self, payload: f64) -> LongitudinalParams {
        LongitudinalParams { m1: self.vehicle.m1, payload, ..self.longitudinal.clone() }
    }

    pub fn lateral_with(&self, payload: f64) -> LateralParams {
        LateralParams { m1: self.vehicle.m1, payload, ..self.lateral.clone() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.sim;
        if !(s.plant_step > 0.0) {
            return Err(invalid("sim.plant_step", "must be positive"));
        }
        let fastest = self.nmpc.period.min(self.rlqr.period);
        if s.plant_step > fastest / 5.0 + 1e-12 {
            return Err(invalid("sim.plant_step", format!("must be at most 1/5 of the fastest controller period ({fastest})")));
        }
        for (key, period) in [("nmpc.period", self.nmpc.period), ("rlqr.period", self.rlqr.period)] {
            let ratio = period / s.plant_step;
            if (ratio - ratio.round()).abs() > 1e-9 {
                return Err(invalid(key, "must be an integer multiple of sim.plant_step"));
            }
        }
        if !(s.duration_cap > 0.0) {
            return Err(invalid("sim.duration_cap", "must be positive"));
        }
        if !(s.goal_tolerance >= 0.0) {
            return Err(invalid("sim.goal_tolerance", "must be non-negative"));
        }
        if s.log_decimation == 0 {
            return Err(invalid("sim.log_decimation", "must be at least 1"));
        }
        if !(s.initial_speed >= 0.0) {
            return Err(invalid("sim.initial_speed", "must be non-negative"));
        }
        if !(s.steer_rate_limit > 0.0) {
            return Err(invalid("sim.steer_rate_limit", "must be positive"));
        }
        if !(s.offset_jitter >= 0.0) {
            return Err(invalid("sim.offset_jitter", "must be non-negative"));
        }
        if !(self.vehicle.m1 > 0.0) {
            return Err(invalid("vehicle.m1", "must be positive"));
        }
        if !(self.vehicle.plant_payload >= 0.0) || !(self.vehicle.controller_payload >= 0.0) {
            return Err(invalid("vehicle", "payloads must be non-negative"));
        }
        if !(self.pi.kp > 0.0 && self.pi.ki > 0.0 && self.pi.k_b > 0.0) {
            return Err(invalid("pi", "gains must be positive"));
        }
        if !(self.path.spacing > 0.0) {
            return Err(invalid("path.spacing", "must be positive"));
        }
        if self.path.file.is_empty() {
            self.path.route.validate().map_err(|e| invalid("path.route", e.0))?;
        }
        self.nmpc.validate().map_err(|e| invalid("nmpc", e.to_string()))?;
        self.rlqr.validate().map_err(|e| invalid("rlqr", e))?;
        let lon = self.longitudinal_with(self.vehicle.controller_payload);
        lon.validate().map_err(|e| invalid("longitudinal", e.to_string()))?;
        lon.gear_ratio(s.gear).map_err(|e| invalid("sim.gear", e.to_string()))?;
        self.lateral_with(self.vehicle.controller_payload)
            .validate()
            .map_err(|e| invalid("lateral", e))?;
        Ok(())
    }

    /// Resolved configuration as TOML text.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

fn parse_table(text: &str) -> Result<toml::Table, ConfigError> {
    text.parse::<toml::Table>().map_err(|e| ConfigError::Parse(e.to_string()))
}

fn from_value(v: toml::Value) -> Result<ScenarioConfig, ConfigError> {
    v.try_into::<ScenarioConfig>().map_err(|e| {
        let msg = e.to_string();
        match msg.split("unknown field `").nth(1).and_then(|r| r.split('`').next()) {
            Some(k) => ConfigError::UnknownKey(k.to_string()),
            None => ConfigError::Parse(msg),
        }
    })
}

fn parse_override_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `key=value` overrides. Every key must already exist in the
/// resolved configuration tree.
pub fn apply_overrides(cfg: &ScenarioConfig, overrides: &[String]) -> Result<ScenarioConfig, ConfigError> {
    let mut tree = toml::Value::try_from(cfg).map_err(|e| ConfigError::Parse(e.to_string()))?;
    for ov in overrides {
        let (key, raw) = ov.split_once('=').ok_or_else(|| ConfigError::Malformed(ov.clone()))?;
        let key = key.trim();
        let mut node = &mut tree;
        for part in key.split('.') {
            node = match node {
                toml::Value::Table(t) => t.get_mut(part).ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?,
                _ => return Err(ConfigError::UnknownKey(key.to_string())),
            };
        }
        *node = parse_override_value(raw.trim());
        // type-check each override on its own so errors name the key
        from_value(tree.clone()).map_err(|e| ConfigError::BadValue { key: key.to_string(), msg: e.to_string() })?;
    }
    from_value(tree)
}

/// Parses config text (missing keys take defaults), applies overrides, validates.
pub fn load_str(text: &str, overrides: &[String]) -> Result<ScenarioConfig, ConfigError> {
    let table = parse_table(text)?;
    let base = from_value(toml::Value::Table(table))?;
    let cfg = apply_overrides(&base, overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_file(path: &Path, overrides: &[String]) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.display().to_string(), msg: e.to_string() })?;
    load_str(&text, overrides)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ScenarioConfig::default();
        cfg.validate().unwrap();
        let back = load_str(&cfg.to_toml(), &[]).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn empty_file_is_defaults() {
        assert_eq!(load_str("", &[]).unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn unknown_key_in_file_is_named() {
        let err = load_str("[nmpc]\nw9 = 1.0\n", &[]).unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey("w9".into()));
    }

    #[test]
    fn overrides() {
        let cfg = load_str("", &["nmpc.w5=0.5".into(), "sim.seed=7".into(), "rlqr.mu=inf".into()]).unwrap();
        assert_eq!(cfg.nmpc.w5, 0.5);
        assert_eq!(cfg.sim.seed, 7);
        assert!(cfg.rlqr.mu.is_infinite());
        let cfg = load_str("", &["nmpc.w1=3".into(), "rlqr.form=limit".into()]).unwrap();
        assert_eq!(cfg.nmpc.w1, 3.0);
        assert_eq!(cfg.rlqr.form, crate::rlqr::RlqrForm::Limit);
        assert_eq!(load_str("", &["nmpc.nope=1".into()]).unwrap_err(), ConfigError::UnknownKey("nmpc.nope".into()));
        assert!(matches!(load_str("", &["nmpc.w1=abc".into()]).unwrap_err(), ConfigError::BadValue { .. }));
        assert!(matches!(load_str("", &["nmpc.w1".into()]).unwrap_err(), ConfigError::Malformed(_)));
    }

    #[test]
    fn semantic_validation_names_key() {
        let err = load_str("[sim]\nplant_step = 0.05\n", &[]).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref key, .. } if key == "sim.plant_step"), "{err}");
        let err = load_str("[sim]\ngear = 0\n", &[]).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref key, .. } if key == "sim.gear"));
    }
}
