//! Defaults file, TOML or JSON by extension.

use std::path::{Path, PathBuf};

use motionflow::diffusion::{two_mode_reference, NoiseSchedule};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_PORT: u16 = 8787;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Densification kernel width; `None` picks 5% of the longer side.
    pub sigma: Option<f64>,
    pub port: Option<u16>,
    pub schedule: ScheduleConfig,
    pub limits: Limits,
    pub toy: ToyConfig,
    /// Directory of the config file, for resolving relative paths.
    #[serde(skip)]
    pub base: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            beta_start: 1e-4,
            beta_end: 0.02,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> motionflow::Result<NoiseSchedule<f64>> {
        NoiseSchedule::linear(self.steps, self.beta_start, self.beta_end)
    }
}

/// Preview service request limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Limits {
    pub max_width: usize,
    pub max_height: usize,
    pub max_frames: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_width: 512,
            max_height: 512,
            max_frames: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetSpec {
    /// Constant `(+1, 0)` and `(−1, 0)` flows.
    TwoMode,
    /// Directories of `.flo` frames, one example each.
    Flows(Vec<PathBuf>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub hidden: usize,
    pub time_dim: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub dataset: DatasetSpec,
    /// Clip shape used by `two-mode`.
    pub frames: usize,
    pub width: usize,
    pub height: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        let (dims, cfg) = two_mode_reference();
        Self {
            hidden: dims.hidden,
            time_dim: dims.time_dim,
            steps: cfg.steps,
            batch_size: cfg.batch_size,
            lr: cfg.adam.lr,
            dataset: DatasetSpec::TwoMode,
            frames: 4,
            width: 8,
            height: 8,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(path, e))?;
        let mut cfg: Config = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| CliError::config(path, e))?
        } else {
            toml::from_str(&text).map_err(|e| CliError::config(path, e))?
        };
        cfg.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_relative() {
            self.base.join(p)
        } else {
            p.to_path_buf()
        }
    }
}
