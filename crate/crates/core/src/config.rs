//! Run configuration: every tunable in one TOML document. Missing keys
//! take defaults, unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::EstimatorNoise;
use crate::grasp::DetectorConfig;
use crate::pipeline::{BenchSettings, Environment, Limits, Mode, NoiseConfig, TrialConfig};
use crate::singulation::{SingulationParams, SingulationPolicy};
use crate::world::{Gripper, PlacementParams, ScenarioParams, Workspace};

/// Environment variable naming a config file.
pub const CONFIG_ENV: &str = "BINPICK_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RasterScales {
    pub bin_mm_per_px: f64,
    pub tray_mm_per_px: f64,
}

impl Default for RasterScales {
    fn default() -> Self {
        Self {
            bin_mm_per_px: 2.0,
            tray_mm_per_px: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensitySettings {
    /// Gaussian kernel sigma (px).
    pub kernel_sigma: f64,
    /// Gripper opening for the rough grab (mm).
    pub rough_open_width: f64,
    pub estimator: EstimatorNoise,
}

impl Default for DensitySettings {
    fn default() -> Self {
        Self {
            kernel_sigma: 8.0,
            rough_open_width: 16.0,
            estimator: EstimatorNoise::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialSettings {
    pub target_picks: usize,
    pub policy: SingulationPolicy,
    pub tray_jitter_sigma: f64,
    pub bin_jitter_sigma: f64,
    pub max_singulations: u32,
    pub max_rough_attempts: u32,
}

impl Default for TrialSettings {
    fn default() -> Self {
        let limits = Limits::default();
        Self {
            target_picks: 1,
            policy: SingulationPolicy::Auto,
            tray_jitter_sigma: 0.3,
            bin_jitter_sigma: 2.5,
            max_singulations: limits.max_singulations,
            max_rough_attempts: limits.max_rough_attempts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub workspace: Workspace,
    pub raster: RasterScales,
    pub gripper: Gripper,
    pub scenario: ScenarioParams,
    pub placement: PlacementParams,
    pub density: DensitySettings,
    pub detector: DetectorConfig,
    pub singulation: SingulationParams,
    pub trial: TrialSettings,
    pub bench: BenchSettings,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: String| ConfigError::Invalid(e);
        self.workspace.validate().map_err(|e| invalid(e.to_string()))?;
        self.gripper.validate().map_err(|e| invalid(e.to_string()))?;
        self.scenario.validate().map_err(|e| invalid(e.to_string()))?;
        self.placement.validate().map_err(|e| invalid(e.to_string()))?;
        self.detector.validate().map_err(|e| invalid(e.to_string()))?;
        self.singulation.validate().map_err(|e| invalid(e.to_string()))?;
        self.trial_config(Mode::TwoStage, 0).validate().map_err(invalid)?;
        self.bench.validate().map_err(invalid)?;
        let scales = [self.raster.bin_mm_per_px, self.raster.tray_mm_per_px, self.density.kernel_sigma];
        if scales.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(invalid("scales and kernel sigma must be positive".into()));
        }
        let w = self.density.rough_open_width;
        if !(w > 0.0 && w <= self.gripper.max_open_width) {
            return Err(invalid(format!(
                "rough_open_width {w} outside (0, {}]",
                self.gripper.max_open_width
            )));
        }
        Ok(())
    }

    pub fn environment(&self) -> Environment {
        Environment {
            gripper: self.gripper,
            detector: self.detector,
            singulation: self.singulation,
            placement: self.placement,
            kernel_sigma: self.density.kernel_sigma,
            rough_open_width: self.density.rough_open_width,
            bin_mm_per_px: self.raster.bin_mm_per_px,
            tray_mm_per_px: self.raster.tray_mm_per_px,
        }
    }

    pub fn trial_config(&self, mode: Mode, seed: u64) -> TrialConfig {
        TrialConfig {
            mode,
            target_picks: self.trial.target_picks,
            singulation_policy: self.trial.policy,
            noise: NoiseConfig {
                tray_jitter_sigma: self.trial.tray_jitter_sigma,
                bin_jitter_sigma: self.trial.bin_jitter_sigma,
                estimator: self.density.estimator,
            },
            limits: Limits {
                max_singulations: self.trial.max_singulations,
                max_rough_attempts: self.trial.max_rough_attempts,
            },
            seed,
        }
    }
}
