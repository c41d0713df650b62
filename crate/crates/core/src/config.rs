//! Flat `key=value` scenario configuration.
//!
//! Blank lines and lines starting with `#` are ignored. `n_nodes` and
//! `attacker_fraction` accept comma-separated lists, which expand into an
//! experiment grid. Every key and its default:
//!
//! ```text
//! n_nodes=100               attacker_fraction=0.10
//! area_width=200            area_height=200           tx_range=100
//! duration_s=1200           send_period_s=1.0         jitter_max_s=0.1
//! cthresh=3                 consensus_threshold=5     consensus_quorum=5
//! attack_mode=additive_offset   (or fixed_value, random_fabrication)
//! attack_lo=20              attack_hi=40
//! attack_active_from=0      attack_duty_cycle=1
//! loss_probability=0.01     delay_mean_s=0.005        delay_jitter_s=0.002
//! reading_source=synthetic  (or dataset)
//! reading_base=16           reading_drift=0           reading_noise_sd=0.5
//! dataset_path=             dataset_column=0
//! dataset_node_stride=1     dataset_rows_per_send=1
//! seed=1                    replications=35           detection_enabled=true
//! trace_level=protocol      (or full)                 census_cadence_s=10
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::attack::{AttackKind, AttackTemplate};
use crate::trace::TraceLevel;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config key `{}`: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub enum ReadingSourceConfig {
    Synthetic {
        base: f64,
        drift_per_s: f64,
        noise_sd: f64,
    },
    Dataset {
        path: PathBuf,
        column: String,
        /// Row offset between consecutive nodes' starting positions.
        node_stride: usize,
        rows_per_send: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n_nodes: usize,
    pub area: (f64, f64),
    pub tx_range: f64,
    pub duration_s: f64,
    pub send_period_s: f64,
    pub jitter_max_s: f64,
    pub cthresh: f64,
    pub consensus_threshold: f64,
    pub consensus_quorum: usize,
    pub attacker_fraction: f64,
    pub attack: AttackTemplate,
    pub loss_probability: f64,
    pub delay_mean_s: f64,
    pub delay_jitter_s: f64,
    pub reading_source: ReadingSourceConfig,
    pub seed: u64,
    pub run_id: u64,
    pub detection_enabled: bool,
    pub trace_level: TraceLevel,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_nodes: 100,
            area: (200.0, 200.0),
            tx_range: 100.0,
            duration_s: 1200.0,
            send_period_s: 1.0,
            jitter_max_s: 0.1,
            cthresh: 3.0,
            consensus_threshold: 5.0,
            consensus_quorum: 5,
            attacker_fraction: 0.10,
            attack: AttackTemplate::default(),
            loss_probability: 0.01,
            delay_mean_s: 0.005,
            delay_jitter_s: 0.002,
            reading_source: ReadingSourceConfig::Synthetic {
                base: 16.0,
                drift_per_s: 0.0,
                noise_sd: 0.5,
            },
            seed: 1,
            run_id: 0,
            detection_enabled: true,
            trace_level: TraceLevel::Protocol,
        }
    }
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(
            key,
            format!("must be a positive number, got {v}"),
        ))
    }
}

fn non_negative(key: &str, v: f64) -> Result<(), ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(
            key,
            format!("must be a non-negative number, got {v}"),
        ))
    }
}

fn fraction(key: &str, v: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ConfigError::new(
            key,
            format!("must lie in [0, 1], got {v}"),
        ))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_nodes == 0 {
            return Err(ConfigError::new("n_nodes", "must be at least 1"));
        }
        positive("area_width", self.area.0)?;
        positive("area_height", self.area.1)?;
        positive("tx_range", self.tx_range)?;
        non_negative("duration_s", self.duration_s)?;
        positive("send_period_s", self.send_period_s)?;
        non_negative("jitter_max_s", self.jitter_max_s)?;
        positive("cthresh", self.cthresh)?;
        positive("consensus_threshold", self.consensus_threshold)?;
        fraction("attacker_fraction", self.attacker_fraction)?;
        fraction("loss_probability", self.loss_probability)?;
        if self.loss_probability >= 1.0 {
            return Err(ConfigError::new("loss_probability", "must be below 1"));
        }
        positive("delay_mean_s", self.delay_mean_s)?;
        non_negative("delay_jitter_s", self.delay_jitter_s)?;
        if self.delay_jitter_s >= self.delay_mean_s {
            return Err(ConfigError::new(
                "delay_jitter_s",
                "must be smaller than delay_mean_s so that every delay is positive",
            ));
        }
        non_negative("attack_active_from", self.attack.active_from)?;
        if !(self.attack.duty_cycle > 0.0 && self.attack.duty_cycle <= 1.0) {
            return Err(ConfigError::new(
                "attack_duty_cycle",
                format!("must lie in (0, 1], got {}", self.attack.duty_cycle),
            ));
        }
        self.attack
            .validate(self.cthresh)
            .map_err(|e| ConfigError::new("attack_lo", e.to_string()))?;
        match &self.reading_source {
            ReadingSourceConfig::Synthetic {
                noise_sd,
                base,
                drift_per_s,
            } => {
                non_negative("reading_noise_sd", *noise_sd)?;
                if !base.is_finite() {
                    return Err(ConfigError::new("reading_base", "must be finite"));
                }
                if !drift_per_s.is_finite() {
                    return Err(ConfigError::new("reading_drift", "must be finite"));
                }
            }
            ReadingSourceConfig::Dataset {
                path,
                rows_per_send,
                ..
            } => {
                if path.as_os_str().is_empty() {
                    return Err(ConfigError::new(
                        "dataset_path",
                        "required when reading_source=dataset",
                    ));
                }
                if *rows_per_send == 0 {
                    return Err(ConfigError::new(
                        "dataset_rows_per_send",
                        "must be at least 1",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// A scenario plus the grid axes and replication count.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub n_nodes: Vec<usize>,
    pub attacker_fractions: Vec<f64>,
    pub replications: usize,
    pub census_cadence_s: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let scenario = ScenarioConfig::default();
        ExperimentConfig {
            n_nodes: vec![scenario.n_nodes],
            attacker_fractions: vec![scenario.attacker_fraction],
            scenario,
            replications: 35,
            census_cadence_s: 10.0,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str, expected: &str) -> Result<T, ConfigError> {
    value
        .trim()
        .parse()
        .map_err(|_| ConfigError::new(key, format!("expected {expected}, got `{value}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str, expected: &str) -> Result<Vec<T>, ConfigError> {
    let items: Vec<T> = value
        .split(',')
        .map(|v| parse_value(key, v, expected))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(ConfigError::new(key, "empty list"));
    }
    Ok(items)
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(ConfigError::new(
            key,
            format!("expected a boolean, got `{value}`"),
        )),
    }
}

impl ExperimentConfig {
    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let s = &mut self.scenario;
        let real = |v: &str| parse_value::<f64>(key, v, "a number");
        match key {
            "n_nodes" => {
                self.n_nodes = parse_list(key, value, "a positive integer")?;
                s.n_nodes = self.n_nodes[0];
            }
            "attacker_fraction" => {
                self.attacker_fractions = parse_list(key, value, "a number in [0, 1]")?;
                s.attacker_fraction = self.attacker_fractions[0];
            }
            "area_width" => s.area.0 = real(value)?,
            "area_height" => s.area.1 = real(value)?,
            "tx_range" => s.tx_range = real(value)?,
            "duration_s" => s.duration_s = real(value)?,
            "send_period_s" => s.send_period_s = real(value)?,
            "jitter_max_s" => s.jitter_max_s = real(value)?,
            "cthresh" => s.cthresh = real(value)?,
            "consensus_threshold" => s.consensus_threshold = real(value)?,
            "consensus_quorum" => {
                s.consensus_quorum = parse_value(key, value, "a non-negative integer")?
            }
            "attack_mode" => {
                s.attack.kind = value
                    .trim()
                    .parse::<AttackKind>()
                    .map_err(|e| ConfigError::new(key, e.to_string()))?
            }
            "attack_lo" => s.attack.lo = real(value)?,
            "attack_hi" => s.attack.hi = real(value)?,
            "attack_active_from" => s.attack.active_from = real(value)?,
            "attack_duty_cycle" => s.attack.duty_cycle = real(value)?,
            "loss_probability" => s.loss_probability = real(value)?,
            "delay_mean_s" => s.delay_mean_s = real(value)?,
            "delay_jitter_s" => s.delay_jitter_s = real(value)?,
            "reading_source" => {
                s.reading_source = match value.trim() {
                    "synthetic" => ReadingSourceConfig::Synthetic {
                        base: 16.0,
                        drift_per_s: 0.0,
                        noise_sd: 0.5,
                    },
                    "dataset" => ReadingSourceConfig::Dataset {
                        path: PathBuf::new(),
                        column: "0".into(),
                        node_stride: 1,
                        rows_per_send: 1,
                    },
                    other => {
                        return Err(ConfigError::new(
                            key,
                            format!("expected `synthetic` or `dataset`, got `{other}`"),
                        ))
                    }
                }
            }
            "reading_base" | "reading_drift" | "reading_noise_sd" => {
                let v = real(value)?;
                match &mut s.reading_source {
                    ReadingSourceConfig::Synthetic {
                        base,
                        drift_per_s,
                        noise_sd,
                    } => match key {
                        "reading_base" => *base = v,
                        "reading_drift" => *drift_per_s = v,
                        _ => *noise_sd = v,
                    },
                    ReadingSourceConfig::Dataset { .. } => {
                        return Err(ConfigError::new(
                            key,
                            "only valid with reading_source=synthetic",
                        ))
                    }
                }
            }
            "dataset_path" | "dataset_column" | "dataset_node_stride" | "dataset_rows_per_send" => {
                match &mut s.reading_source {
                    ReadingSourceConfig::Dataset {
                        path,
                        column,
                        node_stride,
                        rows_per_send,
                    } => match key {
                        "dataset_path" => *path = PathBuf::from(value.trim()),
                        "dataset_column" => *column = value.trim().to_string(),
                        "dataset_node_stride" => {
                            *node_stride = parse_value(key, value, "a non-negative integer")?
                        }
                        _ => *rows_per_send = parse_value(key, value, "a positive integer")?,
                    },
                    ReadingSourceConfig::Synthetic { .. } => {
                        return Err(ConfigError::new(
                            key,
                            "only valid with reading_source=dataset (set it first)",
                        ))
                    }
                }
            }
            "seed" => s.seed = parse_value(key, value, "an unsigned integer")?,
            "replications" => self.replications = parse_value(key, value, "a positive integer")?,
            "detection_enabled" => s.detection_enabled = parse_bool(key, value)?,
            "trace_level" => {
                s.trace_level = match value.trim() {
                    "protocol" => TraceLevel::Protocol,
                    "full" => TraceLevel::Full,
                    other => {
                        return Err(ConfigError::new(
                            key,
                            format!("expected `protocol` or `full`, got `{other}`"),
                        ))
                    }
                }
            }
            "census_cadence_s" => self.census_cadence_s = real(value)?,
            _ => return Err(ConfigError::new(key, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.replications == 0 {
            return Err(ConfigError::new("replications", "must be at least 1"));
        }
        positive("census_cadence_s", self.census_cadence_s)?;
        for &n in &self.n_nodes {
            if n == 0 {
                return Err(ConfigError::new(
                    "n_nodes",
                    "every entry must be at least 1",
                ));
            }
        }
        for &f in &self.attacker_fractions {
            fraction("attacker_fraction", f)?;
        }
        for cell in self.cells() {
            cell.validate()?;
        }
        Ok(())
    }

    /// Parses config text, then applies `overrides` in order (they win).
    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError::new(line, format!("line {}: expected key=value", lineno + 1))
            })?;
            cfg.set(key.trim(), value)?;
        }
        for (key, value) in overrides {
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("config", format!("{}: {e}", path.display())))?;
        ExperimentConfig::parse(&text, overrides)
    }

    /// One scenario per grid cell, node counts outermost.
    pub fn cells(&self) -> Vec<ScenarioConfig> {
        let mut out = Vec::with_capacity(self.n_nodes.len() * self.attacker_fractions.len());
        for &n in &self.n_nodes {
            for &f in &self.attacker_fractions {
                out.push(ScenarioConfig {
                    n_nodes: n,
                    attacker_fraction: f,
                    ..self.scenario.clone()
                });
            }
        }
        out
    }
}
