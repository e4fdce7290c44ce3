//! Scene synthesis: pick a path, optionally warp the map, plan a speed
//! profile, smooth it, and crop the map around the result.

mod dataset;
mod format;

pub use dataset::{
    generate_dataset, validate_dataset, Counts, GenerationReport, Manifest, ManifestEntry, SceneFailure,
    ValidationReport, Violation, MANIFEST_FILE,
};
pub use format::{format_scene, parse_scene, read_scene, write_scene, SCENE_FORMAT};

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::map_augment::{apply_transform, sample_transform_params, AugmentConfig, AugmentError, TurnTransformParams};
use crate::map_model::{
    build_reference_paths, project_to_path, MapError, Point2, ReferencePath, SceneMap, REFERENCE_SPACING,
};
use crate::planner::{astar_plan, PlanError, PlannerNode, PlannerParams, ACCEL_MAX};
use crate::refine::{refine_trajectory, RefineError, RefinementParams};
use crate::rng;

/// Samples per scene (5 s at 10 Hz).
pub const SCENE_LEN: usize = 50;
pub const HISTORY_LEN: usize = 20;
pub const SAMPLE_DT: f64 = 0.1;
pub const SPEED_LIMITS: (f64, f64) = (0.0, 25.0);
pub const ACCEL_LIMITS: (f64, f64) = (-5.0, 3.0);
/// Reference paths are built at least this long where the lane graph allows.
pub const MIN_PATH_LENGTH: f64 = 250.0;
/// Number of path samples ahead of the start that may anchor a warp.
pub const ANCHOR_WINDOW: usize = 40;

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("invalid generation config: {0}")]
    Config(String),
    #[error("no reference path is long enough ({needed:.1} m needed)")]
    NoUsablePath { needed: f64 },
    #[error("map {index}: {source}")]
    BadMap {
        index: usize,
        #[source]
        source: MapError,
    },
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Refine(#[from] RefineError),
    #[error("generated scene is invalid: {0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationConfig {
    pub seed: u64,
    pub n_scenes: usize,
    pub augmented_fraction: f64,
    pub crop_radius: f64,
    pub v_d_min: f64,
    pub v_d_max: f64,
    /// The initial speed is `v_d` times a factor drawn from this range.
    pub v0_scale_min: f64,
    pub v0_scale_max: f64,
    pub max_retries: usize,
    pub output_dir: PathBuf,
    pub planner: PlannerParams,
    pub refinement: RefinementParams,
    pub augment: AugmentConfig,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_scenes: 100,
            augmented_fraction: 165.0 / 370.0,
            crop_radius: 100.0,
            v_d_min: 6.0,
            v_d_max: 15.0,
            v0_scale_min: 0.8,
            v0_scale_max: 1.2,
            max_retries: 5,
            output_dir: PathBuf::from("scenes"),
            planner: PlannerParams::default(),
            refinement: RefinementParams::default(),
            augment: AugmentConfig::default(),
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), SynthesisError> {
        let bad = |m: &str| Err(SynthesisError::Config(m.to_owned()));
        if self.n_scenes == 0 {
            return bad("n_scenes must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.augmented_fraction) {
            return bad("augmented_fraction must lie in [0, 1]");
        }
        if !(self.crop_radius > 0.0 && self.crop_radius.is_finite()) {
            return bad("crop_radius must be > 0");
        }
        if !(0.0 < self.v_d_min && self.v_d_min <= self.v_d_max && self.v_d_max.is_finite()) {
            return bad("v_d_min/v_d_max must satisfy 0 < min <= max");
        }
        if !(0.0 < self.v0_scale_min && self.v0_scale_min <= self.v0_scale_max && self.v0_scale_max.is_finite()) {
            return bad("v0_scale_min/v0_scale_max must satisfy 0 < min <= max");
        }
        self.planner.validate().map_err(|e| SynthesisError::Config(format!("planner: {e}")))?;
        self.refinement
            .validate(self.planner.dt)
            .map_err(|e| SynthesisError::Config(format!("refinement: {e}")))?;
        self.augment.validate().map_err(SynthesisError::Config)?;
        let steps = (self.planner.t_g / self.planner.dt).floor() as usize + 1;
        if steps * self.refinement.k < SCENE_LEN {
            return bad("planner horizon is too short for a 50-sample scene");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneMetadata {
    /// Present when the map was warped before planning.
    pub transform: Option<TurnTransformParams>,
    /// Seed of the generator the scene was drawn from.
    pub seed: u64,
    pub v_d: f64,
    pub v0: f64,
    pub plan_cost: f64,
    pub crop_center: Point2,
    pub crop_radius: f64,
    pub history_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub scene_id: String,
    pub city_tag: String,
    pub map_crop: SceneMap,
    pub timestamps: Vec<f64>,
    pub positions: Vec<Point2>,
    pub metadata: SceneMetadata,
}

impl Scene {
    pub fn is_augmented(&self) -> bool {
        self.metadata.transform.is_some()
    }

    pub fn history(&self) -> &[Point2] {
        &self.positions[..self.metadata.history_len.min(self.positions.len())]
    }

    pub fn future(&self) -> &[Point2] {
        &self.positions[self.metadata.history_len.min(self.positions.len())..]
    }

    /// All invariant violations; empty when the scene is valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.positions.len() != SCENE_LEN {
            out.push(format!("expected {SCENE_LEN} samples, found {}", self.positions.len()));
        }
        if self.timestamps.len() != self.positions.len() {
            out.push(format!("{} timestamps for {} positions", self.timestamps.len(), self.positions.len()));
        }
        if self.metadata.history_len != HISTORY_LEN {
            out.push(format!("history_len is {}, expected {HISTORY_LEN}", self.metadata.history_len));
        }
        if let Some(&t0) = self.timestamps.first() {
            for (i, t) in self.timestamps.iter().enumerate() {
                if (t - t0 - i as f64 * SAMPLE_DT).abs() > 1e-9 {
                    out.push(format!("timestamp {i} is {t}, not on the 0.1 s grid"));
                    break;
                }
            }
        }
        if let Some(i) = self.positions.iter().position(|p| !p.is_finite()) {
            out.push(format!("sample {i} is not finite"));
            return out;
        }
        let c = self.metadata.crop_center;
        if let Some(i) = self.positions.iter().position(|p| p.distance(&c) > self.metadata.crop_radius) {
            out.push(format!("sample {i} lies outside the crop radius"));
        }
        if self.map_crop.is_empty() {
            out.push("map crop has no lanes".into());
        }
        let speeds = speeds(&self.positions);
        if let Some((i, v)) = speeds
            .iter()
            .enumerate()
            .find(|(_, v)| !(SPEED_LIMITS.0..=SPEED_LIMITS.1).contains(*v))
        {
            out.push(format!("speed {v:.3} m/s at step {i} outside [0, 25]"));
        }
        let margin = 1e-6;
        if let Some((i, a)) = speeds
            .windows(2)
            .map(|w| (w[1] - w[0]) / SAMPLE_DT)
            .enumerate()
            .find(|(_, a)| *a < ACCEL_LIMITS.0 - margin || *a > ACCEL_LIMITS.1 + margin)
        {
            out.push(format!("acceleration {a:.3} m/s² at step {i} outside [-5, 3]"));
        }
        out
    }
}

/// Finite-difference speeds between consecutive samples.
pub fn speeds(positions: &[Point2]) -> Vec<f64> {
    positions.windows(2).map(|w| w[1].distance(&w[0]) / SAMPLE_DT).collect()
}

/// A map with its reference paths, built once per run.
#[derive(Debug, Clone)]
pub struct PreparedMap {
    pub map: SceneMap,
    pub paths: Vec<ReferencePath>,
}

impl PreparedMap {
    pub fn new(map: SceneMap, seed: u64, index: usize) -> Result<Self, SynthesisError> {
        let mut r = rng::stream(seed, &[rng::tag::MAP_PATHS, index as u64]);
        let paths = build_reference_paths(&map, MIN_PATH_LENGTH, REFERENCE_SPACING, &mut r)
            .map_err(|source| SynthesisError::BadMap { index, source })?;
        Ok(Self { map, paths })
    }
}

fn quantize(x: f64) -> f64 {
    format!("{x:.9}").parse().expect("formatted float parses")
}

/// Draws one scene from `map` using a generator seeded with `seed`; the map
/// is warped first when `augmented` is set.
pub fn generate_scene(
    map: &PreparedMap,
    seed: u64,
    augmented: bool,
    cfg: &GenerationConfig,
    scene_id: &str,
) -> Result<Scene, SynthesisError> {
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let v_d = r.gen_range(cfg.v_d_min..=cfg.v_d_max);
    let v0 = v_d * r.gen_range(cfg.v0_scale_min..=cfg.v0_scale_max);

    let horizon = cfg.planner.t_g + cfg.planner.dt;
    let needed = v0 * horizon + 0.5 * ACCEL_MAX * horizon * horizon + 5.0;
    let usable: Vec<&ReferencePath> = map.paths.iter().filter(|p| p.length() > needed).collect();
    if usable.is_empty() {
        return Err(SynthesisError::NoUsablePath { needed });
    }
    let base = usable[r.gen_range(0..usable.len())];
    let last_start = base.cum_s().partition_point(|&s| s <= base.length() - needed) - 1;
    let i0 = r.gen_range(0..=last_start);
    let start = base.samples()[i0];

    let warped;
    let (scene_map, path, s0, transform) = if augmented {
        let params = sample_transform_params(&mut r, &cfg.augment, base, i0 + 1..i0 + 1 + ANCHOR_WINDOW)?;
        warped = apply_transform(&map.map, &params)?;
        let path = ReferencePath::from_lanes(&warped, base.lanes(), REFERENCE_SPACING)?;
        let (s0, _) = project_to_path(start, &path);
        (&warped, path, s0, Some(params))
    } else {
        (&map.map, base.clone(), base.cum_s()[i0], None)
    };

    let params = PlannerParams { v_d, ..cfg.planner.clone() };
    let plan = astar_plan(&path, PlannerNode::new(s0, v0, 0.0), &params)?;
    let refined = refine_trajectory(&plan, &cfg.refinement, v0, s0)?;
    if refined.s_values.len() < SCENE_LEN {
        return Err(SynthesisError::Config("refined trajectory is shorter than a scene".into()));
    }
    let positions = refined.s_values[..SCENE_LEN]
        .iter()
        .map(|&s| path.point_at(s).map(|p| Point2::new(quantize(p.x), quantize(p.y))))
        .collect::<Result<Vec<_>, _>>()?;
    let timestamps = (0..SCENE_LEN).map(|i| i as f64 / 10.0).collect();
    let crop_center = positions[SCENE_LEN / 2];
    let scene = Scene {
        scene_id: scene_id.to_owned(),
        city_tag: scene_map.city_tag().to_owned(),
        map_crop: scene_map.crop(crop_center, cfg.crop_radius),
        timestamps,
        positions,
        metadata: SceneMetadata {
            transform,
            seed,
            v_d,
            v0,
            plan_cost: plan.total_cost,
            crop_center,
            crop_radius: cfg.crop_radius,
            history_len: HISTORY_LEN,
        },
    };
    let problems = scene.violations();
    if !problems.is_empty() {
        return Err(SynthesisError::Invalid(problems.join("; ")));
    }
    Ok(scene)
}

/// Whether scene `index` of a run uses a warped map. Drawn once per index
/// so retries cannot shift the augmented share.
pub fn is_augmented_index(cfg: &GenerationConfig, index: usize) -> bool {
    rng::stream(cfg.seed, &[rng::tag::SCENE, index as u64]).gen_bool(cfg.augmented_fraction)
}

/// Generates scene `index` of a run, retrying with fresh sub-seeds.
pub fn generate_indexed(
    maps: &[PreparedMap],
    cfg: &GenerationConfig,
    index: usize,
) -> Result<Scene, Vec<SynthesisError>> {
    let scene_id = scene_id(index);
    let augmented = is_augmented_index(cfg, index);
    let mut errors = Vec::new();
    for attempt in 0..=cfg.max_retries {
        let seed = rng::derive_seed(cfg.seed, &[rng::tag::SCENE, index as u64, 1 + attempt as u64]);
        let map_index = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5EED).gen_range(0..maps.len());
        match generate_scene(&maps[map_index], seed, augmented, cfg, &scene_id) {
            Ok(scene) => return Ok(scene),
            Err(e) => {
                log::debug!("scene {scene_id} attempt {attempt}: {e}");
                errors.push(e);
            }
        }
    }
    Err(errors)
}

pub fn scene_id(index: usize) -> String {
    format!("{index:06}")
}
