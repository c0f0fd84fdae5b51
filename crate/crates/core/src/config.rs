//! Experiment configuration and its flat `key = value` text format.

use crate::estimation::{CovarianceMode, Readout};
use crate::hamiltonians::{Model, Protocol, ProtocolParams};
use crate::kernel::{SpinSpecies, MAX_DIM};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

/// Smallest accepted number of clusters.
pub const MIN_CLUSTERS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error("invalid value '{value}' for key '{key}': {reason}")]
    InvalidValue { key: String, value: String, reason: String },
    #[error("line {line}: expected 'key = value', got '{text}'")]
    Syntax { line: usize, text: String },
    #[error("key '{key}': {reason}")]
    Invalid { key: String, reason: String },
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
}

impl ConfigError {
    fn invalid(key: &str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}

/// Every recognised key, in echo order.
pub const KEYS: &[&str] = &[
    "spin",
    "gamma",
    "rho",
    "cluster_size",
    "clusters",
    "protocol",
    "model",
    "omega_ratio",
    "b_rf",
    "rf_fd_step",
    "omega_fd_rel_step",
    "tau_min",
    "tau_max",
    "tau_points",
    "seed",
    "steps_per_period",
    "covariance",
    "readout",
    "min_distance",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub species: SpinSpecies,
    /// Number density in m⁻³; only used at the SI boundary.
    pub rho: f64,
    /// Spins per cluster `M`.
    pub cluster_size: usize,
    /// Number of clusters `Q`.
    pub clusters: usize,
    pub protocol: Protocol,
    pub model: Model,
    pub omega_ratio: f64,
    pub b_rf: f64,
    pub rf_fd_step: f64,
    /// Step of the `ω_L/ω_dd` finite difference, relative to `omega_ratio`.
    pub omega_fd_rel_step: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub tau_points: usize,
    pub seed: u64,
    pub steps_per_period: usize,
    pub covariance: CovarianceMode,
    pub readout: Readout,
    pub min_distance: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            species: SpinSpecies::spin_half(),
            rho: 1e24,
            cluster_size: 2,
            clusters: 40_000,
            protocol: Protocol::Dc,
            model: Model::Secular,
            omega_ratio: 10.0,
            b_rf: 1e-3,
            rf_fd_step: 1e-3,
            omega_fd_rel_step: 1e-3,
            tau_min: 0.02,
            tau_max: 3.0,
            tau_points: 60,
            seed: 1,
            steps_per_period: 32,
            covariance: CovarianceMode::Joint,
            readout: Readout::Plane,
            min_distance: 0.0,
        }
    }
}

fn parse_spin(value: &str) -> Option<f64> {
    match value.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().ok()?;
            let d: f64 = d.trim().parse().ok()?;
            (d != 0.0).then_some(n / d)
        }
        None => value.parse().ok(),
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

impl ExperimentConfig {
    pub fn protocol_params(&self) -> ProtocolParams {
        ProtocolParams {
            protocol: self.protocol,
            model: self.model,
            omega_ratio: self.omega_ratio,
            b_rf: self.b_rf,
        }
    }

    pub fn total_spins(&self) -> usize {
        self.clusters * self.cluster_size
    }

    /// Geometric grid from `tau_min` to `tau_max`.
    pub fn tau_grid(&self) -> Vec<f64> {
        let n = self.tau_points;
        if n == 1 {
            return vec![self.tau_min];
        }
        let ratio = (self.tau_max / self.tau_min).ln();
        (0..n)
            .map(|k| {
                if k == n - 1 {
                    self.tau_max
                } else {
                    self.tau_min * (ratio * k as f64 / (n - 1) as f64).exp()
                }
            })
            .collect()
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key {
            "spin" => {
                let s = parse_spin(value).ok_or_else(|| ConfigError::InvalidValue {
                    key: key.into(),
                    value: value.into(),
                    reason: "expected a number such as 1/2, 1 or 1.5".into(),
                })?;
                self.species = SpinSpecies::new(s, self.species.gamma()).map_err(|e| ConfigError::InvalidValue {
                    key: key.into(),
                    value: value.into(),
                    reason: e.to_string(),
                })?;
            }
            "gamma" => self.species = self.species.with_gamma(parse(key, value)?),
            "rho" => self.rho = parse(key, value)?,
            "cluster_size" => self.cluster_size = parse(key, value)?,
            "clusters" => self.clusters = parse_count(key, value)?,
            "protocol" => self.protocol = parse(key, value)?,
            "model" => self.model = parse(key, value)?,
            "omega_ratio" => self.omega_ratio = parse(key, value)?,
            "b_rf" => self.b_rf = parse(key, value)?,
            "rf_fd_step" => self.rf_fd_step = parse(key, value)?,
            "omega_fd_rel_step" => self.omega_fd_rel_step = parse(key, value)?,
            "tau_min" => self.tau_min = parse(key, value)?,
            "tau_max" => self.tau_max = parse(key, value)?,
            "tau_points" => self.tau_points = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "steps_per_period" => self.steps_per_period = parse(key, value)?,
            "covariance" => self.covariance = parse(key, value)?,
            "readout" => self.readout = parse(key, value)?,
            "min_distance" => self.min_distance = parse(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and `#`
    /// comments are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: n + 1,
                text: raw.to_string(),
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_text(&text)
    }

    /// Current value of a key as text that [`set`](Self::set) accepts.
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "spin" => self.species.to_string(),
            "gamma" => self.species.gamma().to_string(),
            "rho" => self.rho.to_string(),
            "cluster_size" => self.cluster_size.to_string(),
            "clusters" => self.clusters.to_string(),
            "protocol" => self.protocol.to_string(),
            "model" => self.model.to_string(),
            "omega_ratio" => self.omega_ratio.to_string(),
            "b_rf" => self.b_rf.to_string(),
            "rf_fd_step" => self.rf_fd_step.to_string(),
            "omega_fd_rel_step" => self.omega_fd_rel_step.to_string(),
            "tau_min" => self.tau_min.to_string(),
            "tau_max" => self.tau_max.to_string(),
            "tau_points" => self.tau_points.to_string(),
            "seed" => self.seed.to_string(),
            "steps_per_period" => self.steps_per_period.to_string(),
            "covariance" => self.covariance.to_string(),
            "readout" => self.readout.to_string(),
            "min_distance" => self.min_distance.to_string(),
            _ => return None,
        })
    }

    /// The whole configuration in the text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("known key"));
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::invalid(key, format!("must be positive and finite, got {v}")))
            }
        };
        let g = self.species.gamma();
        if !(g != 0.0 && g.is_finite()) {
            return Err(ConfigError::invalid("gamma", format!("must be non-zero and finite, got {g}")));
        }
        positive("rho", self.rho)?;
        if self.cluster_size < 1 {
            return Err(ConfigError::invalid("cluster_size", "must be at least 1"));
        }
        let dim = self.species.cluster_dim(self.cluster_size).map_err(|e| ConfigError::invalid("cluster_size", e.to_string()))?;
        if dim > MAX_DIM {
            return Err(ConfigError::invalid("cluster_size", format!("dimension {dim} exceeds {MAX_DIM}")));
        }
        if self.clusters < MIN_CLUSTERS {
            return Err(ConfigError::invalid(
                "clusters",
                format!("must be at least {MIN_CLUSTERS}, got {}", self.clusters),
            ));
        }
        positive("tau_min", self.tau_min)?;
        positive("tau_max", self.tau_max)?;
        if self.tau_points < 3 {
            return Err(ConfigError::invalid("tau_points", "must be at least 3"));
        }
        if self.tau_max <= self.tau_min {
            return Err(ConfigError::invalid("tau_max", "must exceed tau_min"));
        }
        if !(self.min_distance >= 0.0 && self.min_distance.is_finite()) {
            return Err(ConfigError::invalid("min_distance", "must be non-negative and finite"));
        }
        match (self.protocol, self.model) {
            (Protocol::Rf, Model::Full) => {
                return Err(ConfigError::invalid("model", "the rf protocol supports only the secular model"))
            }
            (Protocol::Rf, _) => {
                if !(self.b_rf >= 0.0 && self.b_rf.is_finite()) {
                    return Err(ConfigError::invalid("b_rf", "must be non-negative and finite"));
                }
                positive("rf_fd_step", self.rf_fd_step)?;
            }
            (Protocol::Dc, Model::Full) => {
                positive("omega_ratio", self.omega_ratio)?;
                positive("omega_fd_rel_step", self.omega_fd_rel_step)?;
                if self.omega_fd_rel_step >= 1.0 {
                    return Err(ConfigError::invalid("omega_fd_rel_step", "must be below 1"));
                }
                if self.steps_per_period < crate::dynamics::MIN_STEPS_PER_PERIOD {
                    return Err(ConfigError::invalid(
                        "steps_per_period",
                        format!("must be at least {}", crate::dynamics::MIN_STEPS_PER_PERIOD),
                    ));
                }
            }
            (Protocol::Dc, Model::Secular) => {}
        }
        Ok(())
    }
}

/// Accepts plain integers as well as `4e4`-style counts.
fn parse_count(key: &str, value: &str) -> Result<usize, ConfigError> {
    if let Ok(n) = value.parse::<usize>() {
        return Ok(n);
    }
    let x: f64 = parse(key, value)?;
    if x >= 0.0 && x.fract() == 0.0 && x < 1e15 {
        Ok(x as usize)
    } else {
        Err(ConfigError::InvalidValue {
            key: key.into(),
            value: value.into(),
            reason: "expected a non-negative integer".into(),
        })
    }
}
