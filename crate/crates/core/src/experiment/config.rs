//! Experiment configuration and its key-value text form.
//!
//! The text form is one `key = value` per line with `#` comments. Keys are
//! the long command-line flag names (`mean-size`, `reps`, ...); underscores
//! are accepted in place of dashes. Every setting can therefore come from a
//! file, a flag, or both, with later assignments winning.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

use crate::kpaths::DEFAULT_K;
use crate::policies::{PolicyKind, ViewMode};
use crate::traffic::{
    SizeDistribution, TrafficError, DEFAULT_BIMODAL_LARGE, DEFAULT_BIMODAL_SMALL,
    DEFAULT_MEAN_SIZE, DEFAULT_PARETO_SHAPE, KB, MB,
};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("invalid value {value:?} for {key}: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<ConfigError>,
    },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum TopologySource {
    Abilene,
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum TrafficSource {
    /// The shipped matrix for Abilene; a calibrated uniform matrix otherwise.
    Builtin,
    File(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DistKind {
    Pareto,
    Bimodal,
    Deterministic,
}

impl DistKind {
    pub fn name(&self) -> &'static str {
        match self {
            DistKind::Pareto => "pareto",
            DistKind::Bimodal => "bimodal",
            DistKind::Deterministic => "deterministic",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub topology: TopologySource,
    pub traffic: TrafficSource,
    pub dist: DistKind,
    pub mean_size: f64,
    pub pareto_shape: f64,
    pub bimodal_small: f64,
    pub bimodal_large: f64,
    pub k: usize,
    pub policies: Vec<PolicyKind>,
    pub scales: Vec<f64>,
    pub thresholds: Vec<f64>,
    /// Load scale used by the threshold sweep.
    pub sweep_scale: f64,
    pub horizon: f64,
    /// Flows arriving before this time are left out of the means; `None`
    /// means 10% of the horizon.
    pub warmup: Option<f64>,
    pub seed: u64,
    pub reps: usize,
    pub view: ViewMode,
    /// Write per-flow records and decision logs for the first replication.
    pub export_flows: bool,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            topology: TopologySource::Abilene,
            traffic: TrafficSource::Builtin,
            dist: DistKind::Pareto,
            mean_size: DEFAULT_MEAN_SIZE,
            pareto_shape: DEFAULT_PARETO_SHAPE,
            bimodal_small: DEFAULT_BIMODAL_SMALL,
            bimodal_large: DEFAULT_BIMODAL_LARGE,
            k: DEFAULT_K,
            policies: vec![PolicyKind::Mbp, PolicyKind::WeightedRandom],
            scales: vec![1.0, 1.2, 1.4, 1.6],
            thresholds: vec![
                0.0,
                10.0 * KB,
                100.0 * KB,
                500.0 * KB,
                MB,
                2.5 * MB,
                5.0 * MB,
                10.0 * MB,
                f64::INFINITY,
            ],
            sweep_scale: 1.3,
            horizon: 20.0,
            warmup: None,
            seed: 1,
            reps: 5,
            view: ViewMode::Exact,
            export_flows: false,
            out: PathBuf::from("results"),
        }
    }
}

/// Every key accepted by [`ExperimentConfig::set`], in echo order.
pub const CONFIG_KEYS: &[&str] = &[
    "topology",
    "traffic",
    "dist",
    "mean-size",
    "pareto-shape",
    "bimodal-small",
    "bimodal-large",
    "k",
    "policies",
    "scale",
    "threshold",
    "sweep-scale",
    "horizon",
    "warmup",
    "seed",
    "reps",
    "view",
    "export-flows",
    "out",
];

fn invalid(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.into(),
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = match value {
        "inf" | "infinity" => f64::INFINITY,
        _ => value.parse().map_err(|_| invalid(key, value, "not a number"))?,
    };
    if v.is_nan() {
        return Err(invalid(key, value, "not a number"));
    }
    Ok(v)
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    let items: Result<Vec<f64>, _> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_f64(key, s))
        .collect();
    let items = items?;
    if items.is_empty() {
        return Err(invalid(key, value, "empty list"));
    }
    Ok(items)
}

/// Parses a policy label as produced by [`PolicyKind::label`].
pub fn parse_policy(label: &str) -> Option<PolicyKind> {
    match label {
        "mbp" => Some(PolicyKind::Mbp),
        "weighted_random" | "weighted-random" | "wr" => Some(PolicyKind::WeightedRandom),
        _ => {
            let t = label.strip_prefix("tmbp_")?;
            let threshold = parse_f64("policies", t).ok()?;
            (threshold >= 0.0).then_some(PolicyKind::ThresholdedMbp { threshold })
        }
    }
}

fn fmt_list(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(",")
}

impl ExperimentConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        let k = key.as_str();
        match k {
            "topology" => {
                self.topology = match value {
                    "abilene" => TopologySource::Abilene,
                    "" => return Err(invalid(k, value, "empty path")),
                    path => TopologySource::File(PathBuf::from(path)),
                }
            }
            "traffic" => {
                self.traffic = match value {
                    "builtin" | "synthetic" => TrafficSource::Builtin,
                    "" => return Err(invalid(k, value, "empty path")),
                    path => TrafficSource::File(PathBuf::from(path)),
                }
            }
            "dist" => {
                self.dist = match value {
                    "pareto" => DistKind::Pareto,
                    "bimodal" => DistKind::Bimodal,
                    "deterministic" => DistKind::Deterministic,
                    _ => return Err(invalid(k, value, "expected pareto, bimodal or deterministic")),
                }
            }
            "mean-size" => self.mean_size = parse_f64(k, value)?,
            "pareto-shape" => self.pareto_shape = parse_f64(k, value)?,
            "bimodal-small" => self.bimodal_small = parse_f64(k, value)?,
            "bimodal-large" => self.bimodal_large = parse_f64(k, value)?,
            "k" => {
                self.k = value
                    .parse()
                    .map_err(|_| invalid(k, value, "not a non-negative integer"))?
            }
            "policies" => {
                let mut out = Vec::new();
                for label in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    out.push(
                        parse_policy(label).ok_or_else(|| invalid(k, label, "unknown policy"))?,
                    );
                }
                if out.is_empty() {
                    return Err(invalid(k, value, "empty list"));
                }
                self.policies = out;
            }
            "scale" => self.scales = parse_list(k, value)?,
            "threshold" => self.thresholds = parse_list(k, value)?,
            "sweep-scale" => self.sweep_scale = parse_f64(k, value)?,
            "horizon" => self.horizon = parse_f64(k, value)?,
            "warmup" => {
                self.warmup = match value {
                    "auto" => None,
                    _ => Some(parse_f64(k, value)?),
                }
            }
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| invalid(k, value, "not a non-negative integer"))?
            }
            "reps" => {
                self.reps = value
                    .parse()
                    .map_err(|_| invalid(k, value, "not a non-negative integer"))?
            }
            "view" => {
                self.view = match value {
                    "exact" => ViewMode::Exact,
                    "counter" => ViewMode::CounterEstimate,
                    _ => return Err(invalid(k, value, "expected exact or counter")),
                }
            }
            "export-flows" => {
                self.export_flows = match value {
                    "true" | "yes" | "1" => true,
                    "false" | "no" | "0" => false,
                    _ => return Err(invalid(k, value, "expected true or false")),
                }
            }
            "out" => {
                if value.is_empty() {
                    return Err(invalid(k, value, "empty path"));
                }
                self.out = PathBuf::from(value)
            }
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Applies every assignment of a key-value text on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = raw.split('#').next().unwrap_or("").trim();
            if s.is_empty() {
                continue;
            }
            let (key, value) = s.split_once('=').ok_or(ConfigError::Syntax { line })?;
            self.set(key, value).map_err(|e| ConfigError::AtLine {
                line,
                source: Box::new(e),
            })?;
        }
        Ok(())
    }

    /// Defaults overridden by the assignments in `text`.
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Checks the cross-field constraints.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.scales.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return bad(format!("scale factors must be positive: {}", fmt_list(&self.scales)));
        }
        if !(self.sweep_scale > 0.0) || !self.sweep_scale.is_finite() {
            return bad(format!("sweep scale must be positive: {}", self.sweep_scale));
        }
        if self.thresholds.iter().any(|t| !(*t >= 0.0)) {
            return bad(format!("thresholds must be non-negative: {}", fmt_list(&self.thresholds)));
        }
        if self.reps < 1 {
            return bad("replication count must be at least 1".into());
        }
        if self.k < 1 {
            return bad("k must be at least 1".into());
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return bad(format!("horizon must be positive: {}", self.horizon));
        }
        let w = self.warmup_seconds();
        if !(w >= 0.0) || w >= self.horizon {
            return bad(format!("warm-up {w} must lie in [0, horizon {})", self.horizon));
        }
        self.size_distribution()
            .map_err(|e| ConfigError::Invalid(format!("size distribution: {e}")))?;
        Ok(())
    }

    pub fn warmup_seconds(&self) -> f64 {
        self.warmup.unwrap_or(0.1 * self.horizon)
    }

    /// The configured size law with mean [`Self::mean_size`].
    pub fn size_distribution(&self) -> Result<SizeDistribution, TrafficError> {
        match self.dist {
            DistKind::Pareto => SizeDistribution::pareto_with_mean(self.mean_size, self.pareto_shape),
            DistKind::Bimodal => SizeDistribution::bimodal_with_mean(
                self.mean_size,
                self.bimodal_small,
                self.bimodal_large,
            ),
            DistKind::Deterministic => {
                let d = SizeDistribution::Deterministic {
                    size: self.mean_size,
                };
                d.validate()?;
                Ok(d)
            }
        }
    }

    /// Key-value text that [`Self::from_text`] turns back into `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in CONFIG_KEYS {
            let value = match *key {
                "topology" => match &self.topology {
                    TopologySource::Abilene => "abilene".to_string(),
                    TopologySource::File(p) => p.display().to_string(),
                },
                "traffic" => match &self.traffic {
                    TrafficSource::Builtin => "builtin".to_string(),
                    TrafficSource::File(p) => p.display().to_string(),
                },
                "dist" => self.dist.name().to_string(),
                "mean-size" => format!("{}", self.mean_size),
                "pareto-shape" => format!("{}", self.pareto_shape),
                "bimodal-small" => format!("{}", self.bimodal_small),
                "bimodal-large" => format!("{}", self.bimodal_large),
                "k" => self.k.to_string(),
                "policies" => self
                    .policies
                    .iter()
                    .map(PolicyKind::label)
                    .collect::<Vec<_>>()
                    .join(","),
                "scale" => fmt_list(&self.scales),
                "threshold" => fmt_list(&self.thresholds),
                "sweep-scale" => format!("{}", self.sweep_scale),
                "horizon" => format!("{}", self.horizon),
                "warmup" => match self.warmup {
                    None => "auto".to_string(),
                    Some(w) => format!("{w}"),
                },
                "seed" => self.seed.to_string(),
                "reps" => self.reps.to_string(),
                "view" => match self.view {
                    ViewMode::Exact => "exact".to_string(),
                    ViewMode::CounterEstimate => "counter".to_string(),
                },
                "export-flows" => self.export_flows.to_string(),
                "out" => self.out.display().to_string(),
                _ => unreachable!("every key is listed"),
            };
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(ExperimentConfig::from_text(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn later_assignments_win() {
        let mut cfg = ExperimentConfig::from_text("reps = 2\n# comment\nscale = 1.0, 1.3\n").unwrap();
        assert_eq!(cfg.reps, 2);
        assert_eq!(cfg.scales, vec![1.0, 1.3]);
        cfg.set("reps", "7").unwrap();
        cfg.set("mean_size", "1e6").unwrap();
        assert_eq!(cfg.reps, 7);
        assert_eq!(cfg.mean_size, 1e6);
    }

    #[test]
    fn custom_values_round_trip() {
        let text = "topology = net.csv\ntraffic = tm.csv\ndist = bimodal\nthreshold = 0,2500000,inf\n\
                    policies = mbp,tmbp_1000000,weighted_random\nwarmup = 3\nview = counter\nexport-flows = true\n";
        let cfg = ExperimentConfig::from_text(text).unwrap();
        assert_eq!(cfg.topology, TopologySource::File("net.csv".into()));
        assert_eq!(cfg.thresholds[2], f64::INFINITY);
        assert_eq!(
            cfg.policies[1],
            PolicyKind::ThresholdedMbp { threshold: 1e6 }
        );
        assert_eq!(ExperimentConfig::from_text(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = ExperimentConfig::from_text("reps = 1\nbogus = 3\n").unwrap_err();
        assert_eq!(
            e,
            ConfigError::AtLine {
                line: 2,
                source: Box::new(ConfigError::UnknownKey("bogus".into()))
            }
        );
        assert_eq!(
            ExperimentConfig::from_text("reps 3").unwrap_err(),
            ConfigError::Syntax { line: 1 }
        );
        assert!(ExperimentConfig::from_text("seed = -1").is_err());
        assert!(ExperimentConfig::from_text("dist = normal").is_err());
    }

    #[test]
    fn validation_rejects_bad_combinations() {
        let mut cfg = ExperimentConfig::default();
        cfg.warmup = Some(cfg.horizon);
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.scales = vec![1.0, 0.0];
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.reps = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.thresholds = vec![-1.0];
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.dist = DistKind::Bimodal;
        cfg.mean_size = 50.0 * MB;
        assert!(cfg.validate().is_err());
    }
}
