use std::path::{Path, PathBuf};

use cpq::{BinGrid, CensoredPolicy, SystemParams};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Named two-server reference configurations, one stable and one overloaded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// `alpha = 1.5`, `c = 2`: every priority level is stable.
    StablePaper,
    /// `alpha = 5.0`, `c = 2`: levels below `p* = 0.6` diverge.
    UnstablePaper,
}

impl Preset {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "stable-paper" => Some(Preset::StablePaper),
            "unstable-paper" => Some(Preset::UnstablePaper),
            _ => None,
        }
    }

    pub fn apply(self, config: &mut ExperimentConfig) {
        config.params = match self {
            Preset::StablePaper => SystemParams { alpha: 1.5, servers: 2 },
            Preset::UnstablePaper => SystemParams { alpha: 5.0, servers: 2 },
        };
        config.delta = 0.05;
        config.horizon = 2e3;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub params: SystemParams,
    pub horizon: f64,
    pub delta: f64,
    pub seed: u64,
    pub replications: usize,
    pub censored_policy: CensoredPolicy,
    pub warmup_fraction: f64,
    pub output_dir: PathBuf,
    /// Number of evenly spaced points at which the closed forms are sampled.
    pub curve_resolution: usize,
    /// Upper bound on concurrently running replications; `None` uses every core.
    pub workers: Option<usize>,
    /// Export the full arrival snapshots. These grow quadratically in the
    /// horizon for overloaded systems.
    pub write_snapshots: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut config = Self {
            params: SystemParams { alpha: 1.5, servers: 2 },
            horizon: 2e3,
            delta: 0.05,
            seed: 1,
            replications: 1,
            censored_policy: CensoredPolicy::Infinite,
            warmup_fraction: 0.0,
            output_dir: PathBuf::from("out"),
            curve_resolution: 201,
            workers: None,
            write_snapshots: true,
        };
        Preset::StablePaper.apply(&mut config);
        config
    }
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let mut config = Self::default();
        preset.apply(&mut config);
        config
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        serde_json::from_str(&text).map_err(|source| CliError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn grid(&self) -> Result<BinGrid> {
        Ok(BinGrid::new(self.delta)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.grid()?;
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(CliError::Config(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.replications == 0 {
            return Err(CliError::Config("need at least one replication".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(CliError::Config(format!(
                "warmup fraction must lie in [0, 1), got {}",
                self.warmup_fraction
            )));
        }
        if self.curve_resolution < 2 {
            return Err(CliError::Config(format!(
                "curve resolution must be at least 2, got {}",
                self.curve_resolution
            )));
        }
        if self.workers == Some(0) {
            return Err(CliError::Config("worker limit must be positive".into()));
        }
        Ok(())
    }
}
