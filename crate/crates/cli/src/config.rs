//! Experiment configuration: defaults, file parsing and flag overrides.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dms_battery::dynamics::{default_dt, DriveEnvelope, EnvelopeShape};
use dms_battery::qsys::{staggered_phases, QuditSpec, SystemSpec};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Classify,
    Evolve,
    Robustness,
    Compare,
    Decay,
    Optimize,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Classify,
        Experiment::Evolve,
        Experiment::Robustness,
        Experiment::Compare,
        Experiment::Decay,
        Experiment::Optimize,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Classify => "classify",
            Experiment::Evolve => "evolve",
            Experiment::Robustness => "robustness",
            Experiment::Compare => "compare",
            Experiment::Decay => "decay",
            Experiment::Optimize => "optimize",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown experiment {s:?}")))
    }
}

/// Fully resolved experiment settings.
///
/// Times `cutoff` and `ramp` are in units of `omega t`; `t_final` and `dt`
/// are raw times; `decay_horizon` is in units of `1 / (2 gamma)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub omega: f64,
    pub alpha: f64,
    #[serde(rename = "J")]
    pub coupling_j: f64,
    pub gamma: f64,
    pub d: usize,
    pub sites: usize,
    /// Drive amplitude in units of `J`.
    pub drive_amp: f64,
    /// Relative phase between neighbouring sites.
    pub drive_phase: f64,
    pub cutoff: f64,
    /// Ramp duration; zero selects a hard cutoff.
    pub ramp: f64,
    pub t_final: f64,
    /// `None` selects `0.01 / omega`.
    pub dt: Option<f64>,
    pub record_stride: usize,
    pub sweep_alpha: bool,
    pub scan_alpha: f64,
    pub scan_min: f64,
    pub scan_max: f64,
    pub scan_points: usize,
    pub decay_horizon: f64,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Classify,
            omega: 10.0,
            alpha: 0.2,
            coupling_j: 1.0,
            gamma: 0.1,
            d: 3,
            sites: 2,
            drive_amp: 0.5,
            drive_phase: PI,
            cutoff: 3.0,
            ramp: 0.2,
            t_final: 100.0,
            dt: None,
            record_stride: 100,
            sweep_alpha: false,
            scan_alpha: 1.0,
            scan_min: 0.01,
            scan_max: 100.0,
            scan_points: 81,
            decay_horizon: 10.0,
            out: PathBuf::from("out"),
        }
    }
}

/// Documentation for every key, printed by `--show-config`.
pub const KEY_DOCS: &[(&str, &str)] = &[
    (
        "experiment",
        "classify | evolve | robustness | compare | decay | optimize",
    ),
    ("omega", "bare transition frequency"),
    ("alpha", "anharmonicity (ignored for d = 2)"),
    ("J", "exchange coupling"),
    ("gamma", "bath rate"),
    ("d", "levels per site"),
    ("sites", "number of sites on the chain"),
    ("drive_amp", "drive amplitude in units of J"),
    ("drive_phase", "relative drive phase between neighbouring sites"),
    ("cutoff", "drive switch-off time, omega t"),
    ("ramp", "cosine ramp duration, omega t; 0 for a hard cutoff"),
    ("t_final", "run length, raw time"),
    ("dt", "RK4 step, raw time; null for 0.01 / omega"),
    ("record_stride", "steps between recorded samples"),
    ("sweep_alpha", "evolve: run alpha in {0, 0.2, 1, 2}"),
    ("scan_alpha", "robustness: fixed alpha of the J/alpha scan"),
    ("scan_min", "robustness: smallest J/alpha"),
    ("scan_max", "robustness: largest J/alpha"),
    ("scan_points", "robustness: log-spaced grid size"),
    ("decay_horizon", "decay: run length in units of 1 / (2 gamma)"),
    ("out", "output directory"),
];

pub const SWEEP_ALPHAS: [f64; 4] = [0.0, 0.2, 1.0, 2.0];

impl ExperimentConfig {
    pub fn system(&self) -> Result<SystemSpec, CliError> {
        let site = QuditSpec::new(self.d, self.omega, self.alpha)?;
        Ok(SystemSpec::uniform(self.sites, site, self.coupling_j)?)
    }

    pub fn drive(&self) -> DriveEnvelope {
        DriveEnvelope {
            amplitude: self.drive_amp * self.coupling_j,
            phases: staggered_phases(self.sites, self.drive_phase),
            cutoff_time: self.cutoff,
            shape: if self.ramp > 0.0 {
                EnvelopeShape::CosineRamp { ramp_time: self.ramp }
            } else {
                EnvelopeShape::HardCutoff
            },
        }
    }

    pub fn dt_for(&self, system: &SystemSpec) -> f64 {
        self.dt.unwrap_or_else(|| default_dt(system))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.system()?;
        self.drive().validate(self.sites)?;
        let positive = [
            ("gamma", self.gamma >= 0.0),
            ("ramp", self.ramp >= 0.0),
            ("t_final", self.t_final > 0.0),
            ("dt", self.dt.is_none_or(|dt| dt > 0.0)),
            ("record_stride", self.record_stride > 0),
            ("scan_alpha", self.scan_alpha > 0.0),
            ("scan_min", self.scan_min > 0.0 && self.scan_min < self.scan_max),
            ("scan_points", self.scan_points >= 2),
            ("decay_horizon", self.decay_horizon > 0.0),
        ];
        match positive.iter().find(|(_, ok)| !ok) {
            Some((key, _)) => Err(CliError::Config(format!("invalid value for {key}"))),
            None => Ok(()),
        }
    }

    /// Canonical JSON without the output directory.
    pub fn record(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v.as_object_mut().expect("object").remove("out");
        v
    }

    /// Hex prefix of the SHA-256 of [`Self::record`].
    pub fn hash(&self) -> String {
        let v = self.record();
        let digest = Sha256::digest(v.to_string().as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    /// Apply a partial map of keys on top of `self`; unknown keys fail.
    pub fn merge(&self, overrides: Map<String, Value>) -> Result<Self, CliError> {
        let mut v = serde_json::to_value(self).expect("config serializes");
        let obj = v.as_object_mut().expect("object");
        for (k, val) in overrides {
            let key = if k == "j" { "J".to_string() } else { k };
            if !obj.contains_key(&key) {
                return Err(CliError::Config(format!("unknown key {key:?}")));
            }
            obj.insert(key, val);
        }
        serde_json::from_value(v).map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Parse a config file: a JSON object, or `key = value` lines with `#`
/// comments.
pub fn parse_config_text(text: &str) -> Result<Map<String, Value>, CliError> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        return match serde_json::from_str(trimmed) {
            Ok(Value::Object(map)) => Ok(map),
            Ok(_) => Err(CliError::Config("config must be a JSON object".into())),
            Err(e) => Err(CliError::Config(format!("invalid JSON: {e}"))),
        };
    }
    let mut map = Map::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", lineno + 1)))?;
        let key = k.trim().to_string();
        if map.insert(key.clone(), scalar(v.trim())).is_some() {
            return Err(CliError::Config(format!("line {}: duplicate key {key:?}", lineno + 1)));
        }
    }
    Ok(map)
}

/// Numbers, booleans and `null` as JSON; anything else as a string.
pub fn scalar(v: &str) -> Value {
    match serde_json::from_str::<Value>(v) {
        Ok(val @ (Value::Number(_) | Value::Bool(_) | Value::Null | Value::String(_))) => val,
        _ => Value::String(v.to_string()),
    }
}

pub fn load_config_file(path: &Path) -> Result<Map<String, Value>, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_text(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_value_and_json_agree() {
        let kv = parse_config_text("omega = 12 # comment\nJ=0.5\nsweep_alpha = true\nout = runs/a\n").unwrap();
        let json = parse_config_text(r#"{"omega": 12, "J": 0.5, "sweep_alpha": true, "out": "runs/a"}"#).unwrap();
        let base = ExperimentConfig::default();
        assert_eq!(base.merge(kv).unwrap(), base.merge(json).unwrap());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let map = parse_config_text("omgea = 3").unwrap();
        assert!(matches!(
            ExperimentConfig::default().merge(map),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn ill_typed_values_are_rejected() {
        let map = parse_config_text("d = three").unwrap();
        assert!(ExperimentConfig::default().merge(map).is_err());
    }

    #[test]
    fn hash_ignores_output_directory() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.out = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.alpha = 0.3;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 12);
    }

    #[test]
    fn every_key_is_documented() {
        let v = serde_json::to_value(ExperimentConfig::default()).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), KEY_DOCS.len());
        for (k, _) in KEY_DOCS {
            assert!(keys.iter().any(|x| x == k), "{k}");
        }
    }
}
