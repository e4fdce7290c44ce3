//! Batch generation into a directory, plus the manifest and validation pass.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::format::{format_scene, map_file_name, read_scene, scene_file_name, write_scene};
use super::{generate_indexed, scene_id, GenerationConfig, PreparedMap, Scene, SynthesisError};
use crate::fsutil::write_atomic;
use crate::map_model::{format_map, SceneMap};

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub original: usize,
    pub augmented: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub scene_id: String,
    pub file: String,
    pub map_file: String,
    pub city: String,
    pub augmented: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneFailure {
    pub scene_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub seed: u64,
    pub n_scenes: usize,
    pub counts: Counts,
    pub per_city: BTreeMap<String, usize>,
    pub config: GenerationConfig,
    pub scenes: Vec<ManifestEntry>,
    pub failures: Vec<SceneFailure>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self, SynthesisError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        toml::from_str(&text).map_err(|e| io_err(&path, e))
    }

    pub fn augmented_fraction(&self) -> f64 {
        let total = self.counts.original + self.counts.augmented;
        if total == 0 {
            0.0
        } else {
            self.counts.augmented as f64 / total as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenerationReport {
    pub manifest_path: PathBuf,
    pub manifest: Manifest,
    pub written: usize,
    pub reused: usize,
    pub elapsed: Duration,
}

impl GenerationReport {
    /// Newly generated scenes per second of wall time.
    pub fn throughput(&self) -> f64 {
        self.written as f64 / self.elapsed.as_secs_f64().max(1e-9)
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> SynthesisError {
    SynthesisError::Io { path: path.to_owned(), message: e.to_string() }
}

fn ensure_writable(dir: &Path) -> Result<(), SynthesisError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"").map_err(|e| io_err(dir, e))?;
    fs::remove_file(&probe).map_err(|e| io_err(&probe, e))
}

enum Outcome {
    Written(ManifestEntry),
    Reused(ManifestEntry),
    Failed(SceneFailure),
}

fn entry_for(scene: &Scene) -> ManifestEntry {
    ManifestEntry {
        scene_id: scene.scene_id.clone(),
        file: scene_file_name(&scene.scene_id),
        map_file: map_file_name(&scene.scene_id),
        city: scene.city_tag.clone(),
        augmented: scene.is_augmented(),
    }
}

fn process(maps: &[PreparedMap], cfg: &GenerationConfig, index: usize) -> Result<Outcome, SynthesisError> {
    let id = scene_id(index);
    let path = cfg.output_dir.join(scene_file_name(&id));
    if path.exists() {
        match read_scene(&path) {
            Ok(scene) if scene.scene_id == id => {
                log::info!("scene={id} status=reused");
                return Ok(Outcome::Reused(entry_for(&scene)));
            }
            Ok(_) => log::warn!("{}: scene id mismatch, regenerating", path.display()),
            Err(e) => log::warn!("{e}; regenerating"),
        }
    }
    let started = Instant::now();
    match generate_indexed(maps, cfg, index) {
        Ok(scene) => {
            write_scene(&scene, &cfg.output_dir)?;
            log::info!(
                "scene={id} status=written augmented={} cost={:.4} ms={:.2}",
                scene.is_augmented(),
                scene.metadata.plan_cost,
                started.elapsed().as_secs_f64() * 1e3
            );
            Ok(Outcome::Written(entry_for(&scene)))
        }
        Err(errors) => {
            let reason = errors.last().map_or_else(String::new, |e| e.to_string());
            log::warn!(
                "scene={id} status=failed attempts={} ms={:.2} reason={reason}",
                errors.len(),
                started.elapsed().as_secs_f64() * 1e3
            );
            Ok(Outcome::Failed(SceneFailure { scene_id: id, reason }))
        }
    }
}

/// Generates `cfg.n_scenes` scenes into `cfg.output_dir` on `workers`
/// threads. Existing scene files are kept, and the manifest is rewritten
/// only when its content changes. Output bytes do not depend on `workers`.
pub fn generate_dataset(
    maps: &[SceneMap],
    cfg: &GenerationConfig,
    workers: usize,
) -> Result<GenerationReport, SynthesisError> {
    cfg.validate()?;
    if maps.is_empty() {
        return Err(SynthesisError::Config("at least one map is required".into()));
    }
    ensure_writable(&cfg.output_dir)?;
    let start = Instant::now();
    let prepared = maps
        .iter()
        .enumerate()
        .map(|(i, m)| PreparedMap::new(m.clone(), cfg.seed, i))
        .collect::<Result<Vec<_>, _>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| SynthesisError::Config(format!("worker pool: {e}")))?;
    let outcomes: Vec<Outcome> = pool.install(|| {
        (0..cfg.n_scenes)
            .into_par_iter()
            .map(|i| process(&prepared, cfg, i))
            .collect::<Result<Vec<_>, _>>()
    })?;

    let mut manifest = Manifest {
        format: "scenesynth-manifest/1".into(),
        seed: cfg.seed,
        n_scenes: cfg.n_scenes,
        counts: Counts::default(),
        per_city: BTreeMap::new(),
        // the manifest lives in output_dir, so the echo records it as `.`
        config: GenerationConfig { output_dir: PathBuf::from("."), ..cfg.clone() },
        scenes: Vec::new(),
        failures: Vec::new(),
    };
    let (mut written, mut reused) = (0, 0);
    for outcome in outcomes {
        let entry = match outcome {
            Outcome::Written(e) => {
                written += 1;
                e
            }
            Outcome::Reused(e) => {
                reused += 1;
                e
            }
            Outcome::Failed(f) => {
                manifest.counts.failed += 1;
                manifest.failures.push(f);
                continue;
            }
        };
        if entry.augmented {
            manifest.counts.augmented += 1;
        } else {
            manifest.counts.original += 1;
        }
        *manifest.per_city.entry(entry.city.clone()).or_default() += 1;
        manifest.scenes.push(entry);
    }

    let manifest_path = cfg.output_dir.join(MANIFEST_FILE);
    let text = toml::to_string(&manifest).map_err(|e| io_err(&manifest_path, e))?;
    if fs::read_to_string(&manifest_path).ok().as_deref() != Some(text.as_str()) {
        write_atomic(&manifest_path, text.as_bytes()).map_err(|e| io_err(&manifest_path, e))?;
    }
    Ok(GenerationReport { manifest_path, manifest, written, reused, elapsed: start.elapsed() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub file: PathBuf,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub scenes_checked: usize,
    pub augmented: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every scene file in `dir`: scene invariants, kinematic bounds,
/// that re-serializing reproduces the files byte for byte, and agreement
/// with the manifest when one is present.
pub fn validate_dataset(dir: &Path) -> Result<ValidationReport, SynthesisError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    let mut report = ValidationReport::default();
    let flag = |report: &mut ValidationReport, file: &Path, message: String| {
        report.violations.push(Violation { file: file.to_owned(), message });
    };
    let mut seen = BTreeMap::new();
    for file in &files {
        report.scenes_checked += 1;
        let scene = match read_scene(file) {
            Ok(s) => s,
            Err(e) => {
                flag(&mut report, file, e.to_string());
                continue;
            }
        };
        for v in scene.violations() {
            flag(&mut report, file, v);
        }
        if fs::read_to_string(file).ok().as_deref() != Some(format_scene(&scene).as_str()) {
            flag(&mut report, file, "scene file does not round-trip".into());
        }
        let map_path = file.with_extension("map");
        if fs::read_to_string(&map_path).ok().as_deref() != Some(format_map(&scene.map_crop).as_str()) {
            flag(&mut report, &map_path, "map crop does not round-trip".into());
        }
        if scene.is_augmented() {
            report.augmented += 1;
        }
        seen.insert(scene.scene_id.clone(), entry_for(&scene));
    }
    let manifest_path = dir.join(MANIFEST_FILE);
    if manifest_path.exists() {
        match Manifest::load(dir) {
            Ok(m) => {
                for e in &m.scenes {
                    if seen.get(&e.scene_id) != Some(e) {
                        flag(&mut report, &manifest_path, format!("entry {} does not match its file", e.scene_id));
                    }
                }
                let listed = m.counts.original + m.counts.augmented;
                if listed != m.scenes.len() || listed + m.counts.failed != m.n_scenes {
                    flag(&mut report, &manifest_path, "manifest counts are inconsistent".into());
                }
            }
            Err(e) => flag(&mut report, &manifest_path, e.to_string()),
        }
    }
    Ok(report)
}
