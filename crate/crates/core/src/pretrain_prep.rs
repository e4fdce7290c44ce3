//! Pre-training samples: vectorized scenes, masking policies, and the
//! reconstruction losses.
//!
//! Attribute layout of [`VectorFeature::attributes`]:
//!
//! | kind       | a0               | a1              | a2            | a3         |
//! |------------|------------------|-----------------|---------------|------------|
//! | lane       | vector index     | has predecessor | has successor | degenerate |
//! | trajectory | start timestamp  | vector index    | is history    | degenerate |
//!
//! Flags are 0 or 1. Lanes get polyline ids `0..n` in lane-id order and the
//! trajectory gets id `n`.
//!
//! Sample file:
//!
//! ```text
//! # format: scenesynth-pretrain/1
//! # scene_id: 000004
//! # task: map_recon
//! # masked: 1 3
//! # placeholder: 1 lane 10.5 -2
//! # placeholder: 3 lane 40 7.25
//! kind,polyline_id,x0,y0,x1,y1,a0,a1,a2,a3
//! lane,0,0,0,0.5,0,0,0,1,0
//! # targets
//! 1,10.5,-2
//! ```
//!
//! Every number is written as the shortest decimal that parses back to the
//! same `f64`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsutil::write_atomic;
use crate::map_model::Point2;
use crate::rng;
use crate::synthesis::{Scene, SAMPLE_DT};

pub const SAMPLE_FORMAT: &str = "scenesynth-pretrain/1";
pub const MODES: usize = 6;
pub const REG_WEIGHT: f64 = 0.05;
const COLUMNS: &str = "kind,polyline_id,x0,y0,x1,y1,a0,a1,a2,a3";

#[derive(Debug, Error, PartialEq)]
pub enum PrepError {
    #[error("map masking needs at least 2 lanes, found {0}")]
    TooFewLanes(usize),
    #[error("expected exactly one trajectory, found {0}")]
    TrajectoryCount(usize),
    #[error("mask ratio {ratio} selects no lanes out of {lanes}")]
    EmptyMask { ratio: f64, lanes: usize },
    #[error("{0} must lie in [0, 1]")]
    OutOfRange(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ElementKind {
    Lane,
    Trajectory,
}

impl ElementKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ElementKind::Lane => "lane",
            ElementKind::Trajectory => "traj",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lane" => Some(ElementKind::Lane),
            "traj" => Some(ElementKind::Trajectory),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VectorFeature {
    pub start: Point2,
    pub end: Point2,
    pub polyline_id: u32,
    pub kind: ElementKind,
    pub attributes: [f64; 4],
}

impl VectorFeature {
    pub fn is_degenerate(&self) -> bool {
        self.attributes[3] != 0.0
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Splits every lane centerline and the trajectory into consecutive-point
/// vectors.
pub fn vectorize_scene(scene: &Scene) -> Vec<VectorFeature> {
    let mut out = Vec::new();
    let mut id = 0u32;
    for lane in scene.map_crop.lanes() {
        let pts = lane.centerline.points();
        for (i, w) in pts.windows(2).enumerate() {
            out.push(VectorFeature {
                start: w[0],
                end: w[1],
                polyline_id: id,
                kind: ElementKind::Lane,
                attributes: [
                    i as f64,
                    flag(!lane.predecessors.is_empty()),
                    flag(!lane.successors.is_empty()),
                    flag(w[0] == w[1]),
                ],
            });
        }
        id += 1;
    }
    let history = scene.metadata.history_len;
    for (i, w) in scene.positions.windows(2).enumerate() {
        let t = scene.timestamps.get(i).copied().unwrap_or(i as f64 * SAMPLE_DT);
        out.push(VectorFeature {
            start: w[0],
            end: w[1],
            polyline_id: id,
            kind: ElementKind::Trajectory,
            attributes: [t, i as f64, flag(i < history), flag(w[0] == w[1])],
        });
    }
    out
}

/// Rebuilds each polyline from its vectors: the first start point followed
/// by every end point.
pub fn reassemble(vectors: &[VectorFeature]) -> BTreeMap<u32, (ElementKind, Vec<Point2>)> {
    let mut out: BTreeMap<u32, (ElementKind, Vec<Point2>)> = BTreeMap::new();
    for v in vectors {
        out.entry(v.polyline_id).or_insert_with(|| (v.kind, vec![v.start])).1.push(v.end);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    MapRecon,
    TrajRecon,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::MapRecon => "map_recon",
            Task::TrajRecon => "traj_recon",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placeholder {
    pub polyline_id: u32,
    pub kind: ElementKind,
    pub first_point: Point2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub polyline_id: u32,
    pub points: Vec<Point2>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainSample {
    pub scene_id: String,
    pub task: Task,
    pub visible: Vec<VectorFeature>,
    pub placeholders: Vec<Placeholder>,
    pub targets: Vec<Target>,
}

impl PretrainSample {
    pub fn masked_ids(&self) -> Vec<u32> {
        self.placeholders.iter().map(|p| p.polyline_id).collect()
    }
}

fn split(vectors: &[VectorFeature], masked: &BTreeSet<u32>, task: Task) -> PretrainSample {
    let visible = vectors.iter().filter(|v| !masked.contains(&v.polyline_id)).copied().collect();
    let lines = reassemble(vectors);
    let (placeholders, targets) = masked
        .iter()
        .map(|id| {
            let (kind, points) = &lines[id];
            (
                Placeholder { polyline_id: *id, kind: *kind, first_point: points[0] },
                Target { polyline_id: *id, points: points.clone() },
            )
        })
        .unzip();
    PretrainSample { scene_id: String::new(), task, visible, placeholders, targets }
}

fn ids_of(vectors: &[VectorFeature], kind: ElementKind) -> Vec<u32> {
    let ids: BTreeSet<u32> = vectors.iter().filter(|v| v.kind == kind).map(|v| v.polyline_id).collect();
    ids.into_iter().collect()
}

/// Number of lanes masked for `ratio` over `n` lanes, rounding half up.
pub fn mask_count(ratio: f64, n: usize) -> usize {
    ((ratio * n as f64 + 0.5).floor() as usize).min(n)
}

/// Masks `round(ratio * lanes)` lane polylines chosen uniformly at random.
pub fn mask_map<R: Rng + ?Sized>(
    vectors: &[VectorFeature],
    ratio: f64,
    rng: &mut R,
) -> Result<PretrainSample, PrepError> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(PrepError::OutOfRange("map mask ratio"));
    }
    let lanes = ids_of(vectors, ElementKind::Lane);
    if lanes.len() < 2 {
        return Err(PrepError::TooFewLanes(lanes.len()));
    }
    let k = mask_count(ratio, lanes.len());
    if k == 0 {
        return Err(PrepError::EmptyMask { ratio, lanes: lanes.len() });
    }
    let masked: BTreeSet<u32> = sample(rng, lanes.len(), k).into_iter().map(|i| lanes[i]).collect();
    Ok(split(vectors, &masked, Task::MapRecon))
}

/// Masks the scene's single trajectory, keeping only its start point.
pub fn mask_trajectory(vectors: &[VectorFeature]) -> Result<PretrainSample, PrepError> {
    let traj = ids_of(vectors, ElementKind::Trajectory);
    if traj.len() != 1 {
        return Err(PrepError::TrajectoryCount(traj.len()));
    }
    Ok(split(vectors, &traj.into_iter().collect(), Task::TrajRecon))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskPolicy {
    Map,
    Traj,
    Combined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskConfig {
    pub policy: TaskPolicy,
    /// Probability of the map task under [`TaskPolicy::Combined`].
    pub map_fraction: f64,
    /// Share of lanes masked by the map task.
    pub map_ratio: f64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self { policy: TaskPolicy::Combined, map_fraction: 0.7, map_ratio: 0.5 }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<(), PrepError> {
        if !(0.0..=1.0).contains(&self.map_fraction) {
            return Err(PrepError::OutOfRange("map_fraction"));
        }
        if !(0.0..=1.0).contains(&self.map_ratio) {
            return Err(PrepError::OutOfRange("map_ratio"));
        }
        Ok(())
    }
}

pub fn choose_task<R: Rng + ?Sized>(rng: &mut R, cfg: &MaskConfig) -> Task {
    match cfg.policy {
        TaskPolicy::Map => Task::MapRecon,
        TaskPolicy::Traj => Task::TrajRecon,
        TaskPolicy::Combined => {
            if rng.gen::<f64>() < cfg.map_fraction {
                Task::MapRecon
            } else {
                Task::TrajRecon
            }
        }
    }
}

/// Picks a task per scene and masks it. Scene `i` of `epoch` draws from its
/// own stream of `seed`, so results do not depend on batching or threads.
pub fn assign_tasks(
    batch: &[(String, Vec<VectorFeature>)],
    cfg: &MaskConfig,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Result<PretrainSample, PrepError>>, PrepError> {
    cfg.validate()?;
    Ok(batch
        .par_iter()
        .enumerate()
        .map(|(i, (scene_id, vectors))| {
            let mut r = rng::stream(seed, &[rng::tag::MASK, epoch, i as u64]);
            let mut s = match choose_task(&mut r, cfg) {
                Task::MapRecon => mask_map(vectors, cfg.map_ratio, &mut r)?,
                Task::TrajRecon => mask_trajectory(vectors)?,
            };
            s.scene_id = scene_id.clone();
            Ok(s)
        })
        .collect())
}

fn l1_mean(pred: &[Point2], target: &[Point2]) -> Result<f64, PrepError> {
    if pred.len() != target.len() {
        return Err(PrepError::Shape(format!("{} predicted points for {} targets", pred.len(), target.len())));
    }
    if target.is_empty() {
        return Err(PrepError::Shape("no points".into()));
    }
    let sum: f64 = pred.iter().zip(target).map(|(p, t)| (p.x - t.x).abs() + (p.y - t.y).abs()).sum();
    Ok(sum / target.len() as f64)
}

/// Point-wise L1: mean over points of `|dx| + |dy|`.
pub fn map_recon_loss(pred: &[Point2], target: &[Point2]) -> Result<f64, PrepError> {
    l1_mean(pred, target)
}

/// Best-of-six L1 plus `reg_weight` times the mean L1 of the other modes.
/// Returns the loss and the best mode (lowest index on ties).
pub fn traj_recon_loss(preds: &[Vec<Point2>], target: &[Point2], reg_weight: f64) -> Result<(f64, usize), PrepError> {
    if preds.len() != MODES {
        return Err(PrepError::Shape(format!("expected {MODES} modes, got {}", preds.len())));
    }
    let errs = preds.iter().map(|p| l1_mean(p, target)).collect::<Result<Vec<_>, _>>()?;
    let mut best = 0;
    for (i, e) in errs.iter().enumerate() {
        if *e < errs[best] {
            best = i;
        }
    }
    let rest: f64 = errs.iter().enumerate().filter(|(i, _)| *i != best).map(|(_, e)| e).sum();
    Ok((errs[best] + reg_weight * rest / (MODES - 1) as f64, best))
}

pub fn format_sample(s: &PretrainSample) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# format: {SAMPLE_FORMAT}");
    let _ = writeln!(out, "# scene_id: {}", s.scene_id);
    let _ = writeln!(out, "# task: {}", s.task.as_str());
    let ids: Vec<String> = s.placeholders.iter().map(|p| p.polyline_id.to_string()).collect();
    let _ = writeln!(out, "# masked: {}", ids.join(" "));
    for p in &s.placeholders {
        let _ = writeln!(out, "# placeholder: {} {} {} {}", p.polyline_id, p.kind.as_str(), p.first_point.x, p.first_point.y);
    }
    out.push_str(COLUMNS);
    out.push('\n');
    for v in &s.visible {
        let a = v.attributes;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            v.kind.as_str(),
            v.polyline_id,
            v.start.x,
            v.start.y,
            v.end.x,
            v.end.y,
            a[0],
            a[1],
            a[2],
            a[3]
        );
    }
    out.push_str("# targets\n");
    for t in &s.targets {
        for p in &t.points {
            let _ = writeln!(out, "{},{},{}", t.polyline_id, p.x, p.y);
        }
    }
    out
}

pub fn parse_sample(text: &str) -> Result<PretrainSample, PrepError> {
    let mut line_no = 0;
    let err = |line: usize, m: String| PrepError::Parse { path: PathBuf::new(), line, message: m };
    let num = |line: usize, v: &str| -> Result<f64, PrepError> {
        v.trim().parse::<f64>().map_err(|_| err(line, format!("`{v}` is not a number")))
    };
    let id = |line: usize, v: &str| -> Result<u32, PrepError> {
        v.trim().parse::<u32>().map_err(|_| err(line, format!("`{v}` is not a polyline id")))
    };

    let mut scene_id = None;
    let mut task = None;
    let mut masked = None;
    let mut format_ok = false;
    let mut placeholders = Vec::new();
    let mut lines = text.lines();
    for raw in lines.by_ref() {
        line_no += 1;
        if raw == COLUMNS {
            break;
        }
        let Some((k, v)) = raw.strip_prefix("# ").and_then(|r| r.split_once(": ").or(r.split_once(':'))) else {
            return Err(err(line_no, format!("unexpected header line `{raw}`")));
        };
        let v = v.trim();
        match k {
            "format" if v == SAMPLE_FORMAT => format_ok = true,
            "format" => return Err(err(line_no, format!("unsupported format `{v}`"))),
            "scene_id" => scene_id = Some(v.to_owned()),
            "task" => {
                task = Some(match v {
                    "map_recon" => Task::MapRecon,
                    "traj_recon" => Task::TrajRecon,
                    _ => return Err(err(line_no, format!("unknown task `{v}`"))),
                })
            }
            "masked" => masked = Some(v.split_whitespace().map(|x| id(line_no, x)).collect::<Result<Vec<_>, _>>()?),
            "placeholder" => {
                let f: Vec<&str> = v.split_whitespace().collect();
                let [pid, kind, x, y] = f[..] else {
                    return Err(err(line_no, "placeholder needs `id kind x y`".into()));
                };
                let kind = ElementKind::parse(kind).ok_or_else(|| err(line_no, format!("unknown kind `{kind}`")))?;
                placeholders.push(Placeholder {
                    polyline_id: id(line_no, pid)?,
                    kind,
                    first_point: Point2::new(num(line_no, x)?, num(line_no, y)?),
                });
            }
            _ => return Err(err(line_no, format!("unknown header key `{k}`"))),
        }
    }
    if !format_ok {
        return Err(err(line_no, "missing format header".into()));
    }
    let (Some(scene_id), Some(task), Some(masked)) = (scene_id, task, masked) else {
        return Err(err(line_no, "missing scene_id, task, or masked header".into()));
    };
    if masked != placeholders.iter().map(|p| p.polyline_id).collect::<Vec<_>>() {
        return Err(err(line_no, "masked ids do not match placeholders".into()));
    }

    let mut visible = Vec::new();
    let mut in_targets = false;
    let mut targets: Vec<Target> = Vec::new();
    for raw in lines {
        line_no += 1;
        if raw == "# targets" {
            in_targets = true;
            continue;
        }
        let f: Vec<&str> = raw.split(',').collect();
        if in_targets {
            let [pid, x, y] = f[..] else {
                return Err(err(line_no, format!("target row needs 3 columns, found {}", f.len())));
            };
            let pid = id(line_no, pid)?;
            let p = Point2::new(num(line_no, x)?, num(line_no, y)?);
            match targets.last_mut() {
                Some(t) if t.polyline_id == pid => t.points.push(p),
                _ => targets.push(Target { polyline_id: pid, points: vec![p] }),
            }
        } else {
            if f.len() != 10 {
                return Err(err(line_no, format!("vector row needs 10 columns, found {}", f.len())));
            }
            let kind = ElementKind::parse(f[0]).ok_or_else(|| err(line_no, format!("unknown kind `{}`", f[0])))?;
            let v: Vec<f64> = f[2..].iter().map(|x| num(line_no, x)).collect::<Result<_, _>>()?;
            visible.push(VectorFeature {
                start: Point2::new(v[0], v[1]),
                end: Point2::new(v[2], v[3]),
                polyline_id: id(line_no, f[1])?,
                kind,
                attributes: [v[4], v[5], v[6], v[7]],
            });
        }
    }
    if !in_targets {
        return Err(err(line_no, "missing `# targets` section".into()));
    }
    Ok(PretrainSample { scene_id, task, visible, placeholders, targets })
}

pub fn write_sample(s: &PretrainSample, path: &Path) -> Result<(), PrepError> {
    write_atomic(path, format_sample(s).as_bytes())
        .map_err(|e| PrepError::Io { path: path.to_owned(), message: e.to_string() })
}

pub fn read_sample(path: &Path) -> Result<PretrainSample, PrepError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| PrepError::Io { path: path.to_owned(), message: e.to_string() })?;
    parse_sample(&text).map_err(|e| match e {
        PrepError::Parse { line, message, .. } => PrepError::Parse { path: path.to_owned(), line, message },
        other => other,
    })
}
