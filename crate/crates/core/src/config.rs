//! Experiment configuration files.
//!
//! The format is line based:
//!
//! ```text
//! # comment
//! key = value
//! [grid]             # later keys are read as grid.<key>
//! density = 4, 6, 8
//! ```
//!
//! Omitted keys keep their defaults. Overrides (`key=value`, as given to
//! `--set`) are applied after the file.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::cia::Strategy;
use crate::harness::{ScenarioConfig, SweepParam, SweepSpec};

/// Where a value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Override(usize),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Override(n) => write!(f, "override #{n}"),
        }
    }
}

#[derive(Debug)]
pub enum ConfigError {
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    Invalid {
        origin: Option<Origin>,
        key: Option<String>,
        message: String,
    },
}

impl ConfigError {
    fn invalid(origin: Option<Origin>, key: Option<&str>, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            origin,
            key: key.map(str::to_string),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, source } => {
                write!(f, "cannot read {}: {source}", path.display())
            }
            ConfigError::Invalid {
                origin,
                key,
                message,
            } => {
                if let Some(o) = origin {
                    write!(f, "{o}: ")?;
                }
                if let Some(k) = key {
                    write!(f, "key `{k}`: ")?;
                }
                f.write_str(message)
            }
        }
    }
}

impl std::error::Error for ConfigError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            ConfigError::Io { source, .. } => Some(source),
            ConfigError::Invalid { .. } => None,
        }
    }
}

/// Value lists of the four standard sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrids {
    pub n_nodes: Vec<f64>,
    pub density: Vec<f64>,
    pub interfaces: Vec<f64>,
    pub p_cover_min: Vec<f64>,
}

impl Default for SweepGrids {
    fn default() -> Self {
        Self {
            n_nodes: vec![50.0, 100.0, 150.0, 200.0, 250.0, 300.0],
            density: vec![4.0, 6.0, 8.0, 10.0, 12.0, 14.0],
            interfaces: (1..=12).map(f64::from).collect(),
            p_cover_min: vec![0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99],
        }
    }
}

impl SweepGrids {
    pub fn values(&self, param: SweepParam) -> &[f64] {
        match param {
            SweepParam::Nodes => &self.n_nodes,
            SweepParam::Density => &self.density,
            SweepParam::Interfaces => &self.interfaces,
            SweepParam::PCoverMin => &self.p_cover_min,
        }
    }

    fn values_mut(&mut self, param: SweepParam) -> &mut Vec<f64> {
        match param {
            SweepParam::Nodes => &mut self.n_nodes,
            SweepParam::Density => &mut self.density,
            SweepParam::Interfaces => &mut self.interfaces,
            SweepParam::PCoverMin => &mut self.p_cover_min,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    /// Strategies compared by `sweep` and `figures`.
    pub strategies: Vec<Strategy>,
    pub grids: SweepGrids,
    /// Whether `base_seed` was given explicitly.
    pub seed_given: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            strategies: Strategy::ALL.to_vec(),
            grids: SweepGrids::default(),
            seed_given: false,
        }
    }
}

impl ExperimentConfig {
    pub fn sweep(&self, param: SweepParam) -> SweepSpec {
        SweepSpec {
            param,
            values: self.grids.values(param).to_vec(),
            strategies: self.strategies.clone(),
        }
    }
}

pub const KEYS: [&str; 18] = [
    "n_nodes",
    "density",
    "interfaces",
    "channels",
    "strategy",
    "strategies",
    "p_cover_min",
    "p_p_max",
    "d_full",
    "d_cutoff",
    "per_floor",
    "slot_len",
    "replications",
    "base_seed",
    "grid.n_nodes",
    "grid.density",
    "grid.interfaces",
    "grid.p_cover_min",
];

struct Builder {
    cfg: ExperimentConfig,
    origins: HashMap<&'static str, Origin>,
}

fn parse_num<T: std::str::FromStr>(origin: Origin, key: &str, raw: &str) -> Result<T, ConfigError> {
    raw.parse()
        .map_err(|_| ConfigError::invalid(Some(origin), Some(key), format!("cannot parse {raw:?}")))
}

fn parse_float(origin: Origin, key: &str, raw: &str) -> Result<f64, ConfigError> {
    let v: f64 = parse_num(origin, key, raw)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::invalid(
            Some(origin),
            Some(key),
            format!("{raw} is not finite"),
        ))
    }
}

fn parse_list(origin: Origin, key: &str, raw: &str) -> Result<Vec<f64>, ConfigError> {
    raw.split(',')
        .map(str::trim)
        .map(|s| parse_float(origin, key, s))
        .collect()
}

impl Builder {
    fn set(&mut self, origin: Origin, key: &str, raw: &str) -> Result<(), ConfigError> {
        let Some(&known) = KEYS.iter().find(|&&k| k == key) else {
            return Err(ConfigError::invalid(Some(origin), Some(key), "unknown key"));
        };
        let range = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::invalid(
                    Some(origin),
                    Some(key),
                    format!("{raw} out of range, expected {what}"),
                ))
            }
        };
        let s = &mut self.cfg.scenario;
        match known {
            "n_nodes" => {
                s.n_nodes = parse_num(origin, key, raw)?;
                range(s.n_nodes >= 2, "at least 2")?;
            }
            "density" => {
                s.density = parse_float(origin, key, raw)?;
                range(s.density > 0.0, "a positive number")?;
            }
            "interfaces" => {
                s.n_interfaces = parse_num(origin, key, raw)?;
                range(s.n_interfaces >= 1, "at least 1")?;
            }
            "channels" => {
                s.channels = parse_num(origin, key, raw)?;
                range((1..=u16::MAX as usize).contains(&s.channels), "[1, 65535]")?;
            }
            "strategy" => {
                s.strategy = raw
                    .parse()
                    .map_err(|e| ConfigError::invalid(Some(origin), Some(key), format!("{e}")))?;
            }
            "strategies" => {
                self.cfg.strategies = raw
                    .split(',')
                    .map(|t| t.trim().parse::<Strategy>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| ConfigError::invalid(Some(origin), Some(key), format!("{e}")))?;
                range(!self.cfg.strategies.is_empty(), "a non-empty list")?;
            }
            "p_cover_min" => {
                s.p_cover_min = parse_float(origin, key, raw)?;
                range(s.p_cover_min > 0.0 && s.p_cover_min < 1.0, "(0, 1)")?;
            }
            "p_p_max" => {
                s.p_p_max = parse_float(origin, key, raw)?;
                range((0.0..1.0).contains(&s.p_p_max), "[0, 1)")?;
            }
            "d_full" => {
                s.per_model.d_full = parse_float(origin, key, raw)?;
                range(s.per_model.d_full > 0.0, "a positive distance")?;
            }
            "d_cutoff" => {
                s.per_model.d_cutoff = parse_float(origin, key, raw)?;
                range(s.per_model.d_cutoff > 0.0, "a positive distance")?;
            }
            "per_floor" => {
                s.per_model.per_floor = parse_float(origin, key, raw)?;
                range((0.0..1.0).contains(&s.per_model.per_floor), "[0, 1)")?;
            }
            "slot_len" => {
                s.slot_len = parse_num(origin, key, raw)?;
                range(s.slot_len >= 1, "at least 1")?;
            }
            "replications" => {
                s.replications = parse_num(origin, key, raw)?;
                range(s.replications >= 2, "at least 2")?;
            }
            "base_seed" => {
                s.base_seed = parse_num(origin, key, raw)?;
                self.cfg.seed_given = true;
            }
            grid => {
                let param: SweepParam = grid["grid.".len()..].parse().map_err(|_| {
                    ConfigError::invalid(Some(origin), Some(key), "unknown sweep parameter")
                })?;
                *self.cfg.grids.values_mut(param) = parse_list(origin, key, raw)?;
            }
        }
        self.origins.insert(known, origin);
        Ok(())
    }

    fn fail_at(&self, key: &'static str, message: String) -> ConfigError {
        ConfigError::invalid(self.origins.get(key).copied(), Some(key), message)
    }

    fn finish(mut self) -> Result<ExperimentConfig, ConfigError> {
        let s = &self.cfg.scenario;
        if s.density > (s.n_nodes - 1) as f64 {
            return Err(self.fail_at(
                "density",
                format!("{} exceeds n_nodes - 1 = {}", s.density, s.n_nodes - 1),
            ));
        }
        if s.n_interfaces > s.channels {
            return Err(self.fail_at(
                "interfaces",
                format!("{} exceeds channels = {}", s.n_interfaces, s.channels),
            ));
        }
        if s.per_model.d_cutoff <= s.per_model.d_full {
            return Err(self.fail_at(
                "d_cutoff",
                format!(
                    "{} must exceed d_full = {}",
                    s.per_model.d_cutoff, s.per_model.d_full
                ),
            ));
        }
        if s.per_model.per_floor > s.p_p_max {
            return Err(self.fail_at(
                "per_floor",
                format!("{} exceeds p_p_max = {}", s.per_model.per_floor, s.p_p_max),
            ));
        }
        s.validate()
            .map_err(|e| ConfigError::invalid(None, None, e.to_string()))?;

        let channels = s.channels as f64;
        if !self.origins.contains_key("grid.interfaces") {
            self.cfg.grids.interfaces.retain(|&k| k <= channels);
        }
        for param in SweepParam::ALL {
            let key = match param {
                SweepParam::Nodes => "grid.n_nodes",
                SweepParam::Density => "grid.density",
                SweepParam::Interfaces => "grid.interfaces",
                SweepParam::PCoverMin => "grid.p_cover_min",
            };
            // default grids are checked when a sweep uses them
            if self.origins.contains_key(key) {
                self.cfg
                    .sweep(param)
                    .validate(&self.cfg.scenario)
                    .map_err(|e| self.fail_at(key, e.to_string()))?;
            }
        }
        Ok(self.cfg)
    }
}

fn split_assignment(text: &str) -> Option<(&str, &str)> {
    let (k, v) = text.split_once('=')?;
    let (k, v) = (k.trim(), v.trim());
    (!k.is_empty() && !v.is_empty()).then_some((k, v))
}

/// Parses configuration text, then applies `overrides` in order.
pub fn parse_config_str(text: &str, overrides: &[String]) -> Result<ExperimentConfig, ConfigError> {
    let mut b = Builder {
        cfg: ExperimentConfig::default(),
        origins: HashMap::new(),
    };
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let origin = Origin::Line(i + 1);
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if name.is_empty() || name.contains(char::is_whitespace) {
                return Err(ConfigError::invalid(
                    Some(origin),
                    None,
                    format!("bad section header {line:?}"),
                ));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = split_assignment(line).ok_or_else(|| {
            ConfigError::invalid(
                Some(origin),
                None,
                format!("expected `key = value`, got {line:?}"),
            )
        })?;
        let full = match &section {
            Some(s) => format!("{s}.{key}"),
            None => key.to_string(),
        };
        b.set(origin, &full, value)?;
    }
    for (i, ov) in overrides.iter().enumerate() {
        let origin = Origin::Override(i + 1);
        let (key, value) = split_assignment(ov).ok_or_else(|| {
            ConfigError::invalid(
                Some(origin),
                None,
                format!("expected `key=value`, got {ov:?}"),
            )
        })?;
        b.set(origin, key, value)?;
    }
    b.finish()
}

pub fn parse_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text, overrides)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn invalid(text: &str, overrides: &[&str]) -> (Option<Origin>, Option<String>, String) {
        let ov: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        match parse_config_str(text, &ov) {
            Err(ConfigError::Invalid {
                origin,
                key,
                message,
            }) => (origin, key, message),
            other => panic!("expected an invalid config, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse_config_str("", &[]).unwrap();
        let s = &c.scenario;
        assert_eq!(
            (
                s.n_nodes,
                s.density,
                s.n_interfaces,
                s.channels,
                s.p_cover_min
            ),
            (200, 10.0, 3, 12, 0.95)
        );
        assert_eq!(c.strategies, Strategy::ALL.to_vec());
        assert_eq!(c.grids, SweepGrids::default());
        assert!(!c.seed_given);
    }

    #[test]
    fn keys_comments_sections_and_overrides() {
        let text = "\
# scenario
n_nodes = 80   # fewer nodes
density=6
strategy = StaticPseudoRandom
base_seed = 99

[grid]
density = 4, 5
";
        let c = parse_config_str(
            text,
            &["strategy=DynamicAdaptive".into(), "n_nodes=90".into()],
        )
        .unwrap();
        assert_eq!(c.scenario.n_nodes, 90);
        assert_eq!(c.scenario.density, 6.0);
        assert_eq!(c.scenario.strategy, Strategy::DynamicAdaptive);
        assert_eq!(c.scenario.base_seed, 99);
        assert!(c.seed_given);
        assert_eq!(c.grids.density, vec![4.0, 5.0]);
    }

    #[test]
    fn pcover_range_error_names_key_and_line() {
        let (origin, key, msg) = invalid("n_nodes = 50\np_cover_min = 1.2\n", &[]);
        assert_eq!(origin, Some(Origin::Line(2)));
        assert_eq!(key.as_deref(), Some("p_cover_min"));
        assert!(msg.contains("(0, 1)"), "{msg}");
    }

    #[test]
    fn unknown_keys_and_malformed_lines() {
        let (origin, key, _) = invalid("\n\nbogus = 3\n", &[]);
        assert_eq!(
            (origin, key.as_deref()),
            (Some(Origin::Line(3)), Some("bogus"))
        );
        let (origin, _, _) = invalid("density 10\n", &[]);
        assert_eq!(origin, Some(Origin::Line(1)));
        let (origin, key, _) = invalid("", &["nope=1"]);
        assert_eq!(
            (origin, key.as_deref()),
            (Some(Origin::Override(1)), Some("nope"))
        );
        let (_, key, _) = invalid("n_nodes = ten\n", &[]);
        assert_eq!(key.as_deref(), Some("n_nodes"));
        let (_, key, _) = invalid("strategy = Flooding\n", &[]);
        assert_eq!(key.as_deref(), Some("strategy"));
    }

    #[test]
    fn cross_key_errors_point_at_a_key() {
        let (origin, key, _) = invalid("n_nodes = 5\ndensity = 8\n", &[]);
        assert_eq!(
            (origin, key.as_deref()),
            (Some(Origin::Line(2)), Some("density"))
        );
        let (_, key, _) = invalid("channels = 2\n", &[]);
        assert_eq!(key.as_deref(), Some("interfaces"));
        let (_, key, _) = invalid("[grid]\np_cover_min = 0.9, 0.8\n", &[]);
        assert_eq!(key.as_deref(), Some("grid.p_cover_min"));
    }

    #[test]
    fn default_grids_do_not_constrain_small_scenarios() {
        let c = parse_config_str("n_nodes = 10\ndensity = 3\n", &[]).unwrap();
        assert_eq!(c.grids, SweepGrids::default());
        assert!(c.sweep(SweepParam::Density).validate(&c.scenario).is_err());
    }

    #[test]
    fn default_interface_grid_follows_channels() {
        let c = parse_config_str("channels = 4\n", &[]).unwrap();
        assert_eq!(c.grids.interfaces, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = parse_config(Path::new("/nonexistent/meshcast.conf"), &[]).unwrap_err();
        assert!(matches!(err, ConfigError::Io { .. }));
    }
}
