//! Pipeline configuration: defaults, a `key = value` file format, and range
//! checks.
//!
//! Keys use the same kebab-case names as the command-line flags. Blank lines
//! and lines starting with `#` are ignored.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use autorig_core::ctrlskel::DEFAULT_MAX_SEGMENTS;
use autorig_core::embed::DEFAULT_BEAM;
use autorig_core::medial::DEFAULT_MIN_DIST;
use autorig_core::pathskel::{PathCost, DEFAULT_EXTREME_THRESHOLD, DEFAULT_SMOOTHING_ITERATIONS};
use autorig_core::skinning::DEFAULT_MAX_INFLUENCES;
use autorig_core::voxelgrid::{DEFAULT_RESOLUTION, MIN_RESOLUTION};
use thiserror::Error;

pub const MAX_RESOLUTION: usize = 1024;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{path}:{line}: expected `key = value`")]
    Syntax { path: String, line: usize },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    Value { key: String, value: String, reason: String },
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    PathTree,
    Embed,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TemplateSource {
    Builtin(String),
    File(PathBuf),
}

impl TemplateSource {
    fn parse(s: &str) -> Self {
        match s {
            "biped" | "quadruped" => Self::Builtin(s.to_owned()),
            _ => Self::File(PathBuf::from(s)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub method: Method,
    pub resolution: usize,
    pub dms_min_dist: f64,
    /// Voxel units.
    pub extreme_threshold: f64,
    pub path_cost: PathCost,
    pub max_segments: usize,
    /// World units; `None` means 1.5 cells.
    pub max_error: Option<f64>,
    pub smoothing_iterations: usize,
    /// World units; `None` means 2 cells.
    pub min_radius: Option<f64>,
    /// `None` searches exhaustively.
    pub beam: Option<usize>,
    /// Penalty weights file; `None` uses equal weights.
    pub gamma: Option<PathBuf>,
    pub template: TemplateSource,
    pub max_influences: usize,
    pub out: PathBuf,
    pub seed: u64,
    pub dump_debug: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            method: Method::PathTree,
            resolution: DEFAULT_RESOLUTION,
            dms_min_dist: DEFAULT_MIN_DIST,
            extreme_threshold: DEFAULT_EXTREME_THRESHOLD,
            path_cost: PathCost::StepScaled,
            max_segments: DEFAULT_MAX_SEGMENTS,
            max_error: None,
            smoothing_iterations: DEFAULT_SMOOTHING_ITERATIONS,
            min_radius: None,
            beam: Some(DEFAULT_BEAM),
            gamma: None,
            template: TemplateSource::Builtin("biped".into()),
            max_influences: DEFAULT_MAX_INFLUENCES,
            out: PathBuf::from("out"),
            seed: 0,
            dump_debug: false,
        }
    }
}

fn value_error(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Value {
        key: key.to_owned(),
        value: value.to_owned(),
        reason: reason.into(),
    }
}

fn number<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| value_error(key, value, "not a number"))
}

fn bounded<T: FromStr + PartialOrd + std::fmt::Display + Copy>(
    key: &str,
    value: &str,
    lo: T,
    hi: T,
) -> Result<T, ConfigError> {
    let v: T = number(key, value)?;
    if v < lo || v > hi {
        return Err(value_error(key, value, format!("must lie in [{lo}, {hi}]")));
    }
    Ok(v)
}

fn positive(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = number(key, value)?;
    if v.is_nan() || v <= 0.0 || v.is_infinite() {
        return Err(value_error(key, value, "must be positive and finite"));
    }
    Ok(v)
}

impl PipelineConfig {
    /// Set one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key {
            "method" => {
                self.method = match value {
                    "pathtree" | "method1" => Method::PathTree,
                    "embed" | "method2" => Method::Embed,
                    _ => return Err(value_error(key, value, "expected `pathtree` or `embed`")),
                }
            }
            "resolution" => self.resolution = bounded(key, value, MIN_RESOLUTION, MAX_RESOLUTION)?,
            "dms-min-dist" => self.dms_min_dist = bounded(key, value, 1.0, 1e6)?,
            "extreme-threshold" => self.extreme_threshold = bounded(key, value, 0.0, 1e6)?,
            "pathcost" => {
                self.path_cost = match value {
                    "step" => PathCost::StepScaled,
                    "voxel" => PathCost::PerVoxel,
                    _ => return Err(value_error(key, value, "expected `step` or `voxel`")),
                }
            }
            "segments" => self.max_segments = bounded(key, value, 1, 10_000)?,
            "max-error" => self.max_error = Some(positive(key, value)?),
            "smooth-iters" => self.smoothing_iterations = bounded(key, value, 0, 100_000)?,
            "min-radius" => self.min_radius = Some(positive(key, value)?),
            "beam" => {
                self.beam = match value {
                    "inf" | "exhaustive" => None,
                    _ => Some(bounded(key, value, 1, 1 << 24)?),
                }
            }
            "gamma" => self.gamma = Some(PathBuf::from(value)),
            "template" => self.template = TemplateSource::parse(value),
            "max-influences" => self.max_influences = bounded(key, value, 1, 64)?,
            "out" => self.out = PathBuf::from(value),
            "seed" => self.seed = number(key, value)?,
            "dump-debug" => {
                self.dump_debug = match value {
                    "true" | "1" | "yes" => true,
                    "false" | "0" | "no" => false,
                    _ => return Err(value_error(key, value, "expected a boolean")),
                }
            }
            _ => return Err(ConfigError::UnknownKey(key.to_owned())),
        }
        Ok(())
    }

    /// Apply every `key = value` line of `text`.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                path: origin.to_owned(),
                line: n + 1,
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        self.apply_text(&text, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file_format() {
        let mut c = PipelineConfig::default();
        c.apply_text("# comment\nresolution = 48\n\nsegments=2\nbeam = inf\npathcost = voxel\n", "t")
            .unwrap();
        assert_eq!(c.resolution, 48);
        assert_eq!(c.max_segments, 2);
        assert_eq!(c.beam, None);
        assert_eq!(c.path_cost, PathCost::PerVoxel);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut c = PipelineConfig::default();
        assert_eq!(c.set("colour", "red"), Err(ConfigError::UnknownKey("colour".into())));
        assert!(c.set("resolution", "4").is_err());
        assert!(c.set("resolution", "abc").is_err());
        assert!(c.set("min-radius", "-1").is_err());
        assert!(c.set("dms-min-dist", "0.5").is_err());
        assert!(matches!(
            c.apply_text("resolution 32", "f"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert_eq!(c, PipelineConfig::default());
    }

    #[test]
    fn template_names() {
        let mut c = PipelineConfig::default();
        c.set("template", "quadruped").unwrap();
        assert_eq!(c.template, TemplateSource::Builtin("quadruped".into()));
        c.set("template", "rig.json").unwrap();
        assert_eq!(c.template, TemplateSource::File("rig.json".into()));
    }
}
