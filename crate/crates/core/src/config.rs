//! Run configuration file (TOML). Unknown keys are rejected and every key
//! has a default; [`TEMPLATE`] lists them all.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::AnalysisConfig;
use crate::map_augment::AugmentConfig;
use crate::planner::PlannerParams;
use crate::pretrain_prep::MaskConfig;
use crate::refine::RefinementParams;
use crate::synthesis::GenerationConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

/// Every key with its default value and allowed range.
pub const TEMPLATE: &str = r#"# Top-level seed; every random stream is derived from it.
seed = 0
# Scenes to generate (>= 1).
n_scenes = 100
# Probability that a scene's map is warped before planning, in [0, 1].
augmented_fraction = 0.44594594594594594
# Map crop radius around the trajectory midpoint, meters (> 0).
crop_radius = 100.0
# Desired-speed range, m/s (0 < min <= max).
v_d_min = 6.0
v_d_max = 15.0
# Initial speed = v_d times a factor in this range (0 < min <= max).
v0_scale_min = 0.8
v0_scale_max = 1.2
# Extra attempts per scene before it is skipped.
max_retries = 5
# Output directory, relative to this file.
output_dir = "scenes"
# Lane map files, relative to this file.
maps = []
# Default worker count for `generate` (overridden by --workers).
workers = 1

[planner]
# Accelerations, m/s², each in [-2, 1].
action_set = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0]
dt = 0.5
w1 = 5.0
w2 = 5.0
w3 = 1.0
# Replaced per scene by a draw from [v_d_min, v_d_max].
v_d = 10.0
t_g = 5.0
abs_curvature = true
# mode = "binned" (with ds, dv > 0) or mode = "exact".
closed_set = { mode = "binned", ds = 0.5, dv = 0.25 }

[refinement]
omega1 = 1.0
omega2 = 1.0
# Tracking weight (> 0).
omega3 = 10.0
# k * dt_fine must equal planner.dt.
dt_fine = 0.1
k = 5
# "coarse_knots" or "all_knots".
tracking = "coarse_knots"
# Optional diagonal shift used only when the system is singular, e.g. 1e-9.
# regularization = 1e-9

[augment]
# 1 <= alpha1_min <= alpha1_max <= 10.
alpha1_min = 1.0
alpha1_max = 10.0
# > 1
alpha2 = 20.0
# > 0
s_t = 10.0
# > 0
beta = 20.0
b = 10.0
# Optional cap on alpha1 * alpha2 / s_t.
# max_slope = 4.0

[mask]
# "map", "traj", or "combined".
policy = "combined"
# Probability of the map task under "combined", in [0, 1].
map_fraction = 0.7
# Share of lanes masked by the map task, in [0, 1].
map_ratio = 0.5

[analysis]
speed_bin = 0.5
speed_max = 30.0
direction_bins = 72
# Final-point error above this (meters) is a miss.
miss_threshold = 2.0
"#;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub n_scenes: usize,
    pub augmented_fraction: f64,
    pub crop_radius: f64,
    pub v_d_min: f64,
    pub v_d_max: f64,
    pub v0_scale_min: f64,
    pub v0_scale_max: f64,
    pub max_retries: usize,
    pub output_dir: PathBuf,
    pub maps: Vec<PathBuf>,
    pub workers: usize,
    pub planner: PlannerParams,
    pub refinement: RefinementParams,
    pub augment: AugmentConfig,
    pub mask: MaskConfig,
    pub analysis: AnalysisConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let g = GenerationConfig::default();
        Self {
            seed: g.seed,
            n_scenes: g.n_scenes,
            augmented_fraction: g.augmented_fraction,
            crop_radius: g.crop_radius,
            v_d_min: g.v_d_min,
            v_d_max: g.v_d_max,
            v0_scale_min: g.v0_scale_min,
            v0_scale_max: g.v0_scale_max,
            max_retries: g.max_retries,
            output_dir: g.output_dir,
            maps: Vec::new(),
            workers: 1,
            planner: g.planner,
            refinement: g.refinement,
            augment: g.augment,
            mask: MaskConfig::default(),
            analysis: AnalysisConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.to_owned(), message: e.to_string() })
    }

    /// Loads and validates `path`, resolving relative paths against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.to_owned(), message: e.to_string() })?;
        let mut cfg = Self::parse(&text, path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.output_dir = base.join(&cfg.output_dir);
        cfg.maps = cfg.maps.iter().map(|m| base.join(m)).collect();
        cfg.validate().map_err(|message| ConfigError::Invalid { path: path.to_owned(), message })?;
        Ok(cfg)
    }

    pub fn generation(&self) -> GenerationConfig {
        GenerationConfig {
            seed: self.seed,
            n_scenes: self.n_scenes,
            augmented_fraction: self.augmented_fraction,
            crop_radius: self.crop_radius,
            v_d_min: self.v_d_min,
            v_d_max: self.v_d_max,
            v0_scale_min: self.v0_scale_min,
            v0_scale_max: self.v0_scale_max,
            max_retries: self.max_retries,
            output_dir: self.output_dir.clone(),
            planner: self.planner.clone(),
            refinement: self.refinement.clone(),
            augment: self.augment.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.generation().validate().map_err(|e| e.to_string())?;
        self.mask.validate().map_err(|e| format!("mask: {e}"))?;
        let a = &self.analysis;
        if !(a.speed_bin > 0.0 && a.speed_max > a.speed_bin) || a.direction_bins == 0 {
            return Err("analysis: speed_bin must be > 0, speed_max > speed_bin, direction_bins >= 1".into());
        }
        if !(a.miss_threshold >= 0.0) {
            return Err("analysis: miss_threshold must be >= 0".into());
        }
        if self.workers == 0 {
            return Err("workers must be >= 1".into());
        }
        Ok(())
    }
}
