//! Trajectory statistics, distribution comparison, forecast metrics, and
//! plot-data output.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsutil::write_atomic;
use crate::map_model::Point2;
use crate::synthesis::SAMPLE_DT;

pub const MODES: usize = 6;
pub const MISS_THRESHOLD: f64 = 2.0;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("trajectory needs at least 2 samples, got {0}")]
    TooShort(usize),
    #[error("trajectory never moves")]
    Stationary,
    #[error("histogram is empty")]
    EmptyHistogram,
    #[error("histograms use different binning")]
    BinningMismatch,
    #[error("invalid binning: {0}")]
    BadBinning(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub speed_bin: f64,
    pub speed_max: f64,
    pub direction_bins: usize,
    pub miss_threshold: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { speed_bin: 0.5, speed_max: 30.0, direction_bins: 72, miss_threshold: MISS_THRESHOLD }
    }
}

/// Rotates `traj` about its first point so the first nonzero displacement
/// points along +x.
pub fn heading_normalize(traj: &[Point2]) -> Result<Vec<Point2>, AnalysisError> {
    if traj.len() < 2 {
        return Err(AnalysisError::TooShort(traj.len()));
    }
    let d = traj
        .windows(2)
        .map(|w| w[1] - w[0])
        .find(|d| d.norm() > 0.0)
        .ok_or(AnalysisError::Stationary)?;
    let (c, s) = (d.x / d.norm(), d.y / d.norm());
    let o = traj[0];
    Ok(traj
        .iter()
        .map(|p| {
            let r = *p - o;
            Point2::new(c * r.x + s * r.y, c * r.y - s * r.x) + o
        })
        .collect())
}

fn wrap_angle(a: f64) -> f64 {
    if a <= -PI {
        a + 2.0 * PI
    } else {
        a
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStats {
    pub speeds: Vec<f64>,
    /// Direction of each moving step after heading normalization, in (−π, π].
    pub headings: Vec<f64>,
    /// Final point relative to the first, in the normalized frame.
    pub endpoint: Point2,
}

impl TrajectoryStats {
    pub fn from_trajectory(traj: &[Point2]) -> Result<Self, AnalysisError> {
        let rotated = heading_normalize(traj)?;
        let speeds = traj.windows(2).map(|w| w[1].distance(&w[0]) / SAMPLE_DT).collect();
        let headings = rotated
            .windows(2)
            .map(|w| w[1] - w[0])
            .filter(|d| d.norm() > 0.0)
            .map(|d| wrap_angle(d.y.atan2(d.x)))
            .collect();
        let endpoint = rotated[rotated.len() - 1] - rotated[0];
        Ok(Self { speeds, headings, endpoint })
    }
}

/// Fixed-width bins over `[lo, lo + width * counts.len())`; values past the
/// ends are clamped into the first or last bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(lo: f64, width: f64, bins: usize) -> Result<Self, AnalysisError> {
        if !(width > 0.0 && width.is_finite() && lo.is_finite()) || bins == 0 {
            return Err(AnalysisError::BadBinning(format!("lo={lo} width={width} bins={bins}")));
        }
        Ok(Self { lo, width, counts: vec![0; bins] })
    }

    pub fn speed(cfg: &AnalysisConfig) -> Result<Self, AnalysisError> {
        Self::new(0.0, cfg.speed_bin, (cfg.speed_max / cfg.speed_bin).round() as usize)
    }

    pub fn direction(cfg: &AnalysisConfig) -> Result<Self, AnalysisError> {
        Self::new(-PI, 2.0 * PI / cfg.direction_bins as f64, cfg.direction_bins)
    }

    pub fn bin_of(&self, x: f64) -> usize {
        let i = ((x - self.lo) / self.width).floor();
        if i < 0.0 {
            0
        } else {
            (i as usize).min(self.counts.len() - 1)
        }
    }

    pub fn add(&mut self, x: f64) {
        if x.is_finite() {
            let i = self.bin_of(x);
            self.counts[i] += 1;
        }
    }

    pub fn bin_bounds(&self, i: usize) -> (f64, f64) {
        (self.lo + i as f64 * self.width, self.lo + (i + 1) as f64 * self.width)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn same_binning(&self, other: &Histogram) -> bool {
        self.lo == other.lo && self.width == other.width && self.counts.len() == other.counts.len()
    }

    pub fn merge(&mut self, other: &Histogram) -> Result<(), AnalysisError> {
        if !self.same_binning(other) {
            return Err(AnalysisError::BinningMismatch);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

/// Speed histogram over every finite-difference speed of every trajectory.
pub fn speed_distribution(trajs: &[Vec<Point2>], cfg: &AnalysisConfig) -> Result<Histogram, AnalysisError> {
    let empty = Histogram::speed(cfg)?;
    Ok(trajs
        .par_iter()
        .fold(
            || empty.clone(),
            |mut h, t| {
                for w in t.windows(2) {
                    h.add(w[1].distance(&w[0]) / SAMPLE_DT);
                }
                h
            },
        )
        .reduce(
            || empty.clone(),
            |mut a, b| {
                a.merge(&b).expect("same binning");
                a
            },
        ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub speed: Histogram,
    pub direction: Histogram,
    pub endpoints: Vec<Point2>,
    /// Trajectories skipped because they never move.
    pub stationary: usize,
}

pub fn dataset_stats(trajs: &[Vec<Point2>], cfg: &AnalysisConfig) -> Result<DatasetStats, AnalysisError> {
    let speed = speed_distribution(trajs, cfg)?;
    let mut direction = Histogram::direction(cfg)?;
    let mut endpoints = Vec::new();
    let mut stationary = 0;
    for t in trajs {
        match TrajectoryStats::from_trajectory(t) {
            Ok(s) => {
                for h in s.headings {
                    direction.add(h);
                }
                endpoints.push(s.endpoint);
            }
            Err(AnalysisError::Stationary) => stationary += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(DatasetStats { speed, direction, endpoints, stationary })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DivergenceReport {
    /// Σ min(p, q) over normalized bins.
    pub overlap: f64,
    /// Jensen–Shannon divergence in bits.
    pub jsd: f64,
}

fn kl_term(p: f64, m: f64) -> f64 {
    if p > 0.0 {
        p * (p / m).log2()
    } else {
        0.0
    }
}

pub fn compare_distributions(h1: &Histogram, h2: &Histogram) -> Result<DivergenceReport, AnalysisError> {
    if !h1.same_binning(h2) {
        return Err(AnalysisError::BinningMismatch);
    }
    let (n1, n2) = (h1.total() as f64, h2.total() as f64);
    if n1 == 0.0 || n2 == 0.0 {
        return Err(AnalysisError::EmptyHistogram);
    }
    // overlap in integers: Σ min(a·n2, b·n1) / (n1·n2), exact for h vs h
    let (t1, t2) = (h1.total() as u128, h2.total() as u128);
    let mut shared = 0u128;
    let mut jsd = 0.0;
    for (&a, &b) in h1.counts.iter().zip(&h2.counts) {
        shared += (a as u128 * t2).min(b as u128 * t1);
        let (p, q) = (a as f64 / n1, b as f64 / n2);
        let m = 0.5 * (p + q);
        jsd += 0.5 * kl_term(p, m) + 0.5 * kl_term(q, m);
    }
    let overlap = shared as f64 / (t1 * t2) as f64;
    Ok(DivergenceReport { overlap, jsd: jsd.clamp(0.0, 1.0) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastMetrics {
    pub min_ade: f64,
    pub min_fde: f64,
    /// Mode with the smallest final error (lowest index on ties).
    pub best_mode: usize,
    pub miss: bool,
}

pub fn forecast_metrics(
    preds: &[Vec<Point2>],
    truth: &[Point2],
    miss_threshold: f64,
) -> Result<ForecastMetrics, AnalysisError> {
    if preds.len() != MODES {
        return Err(AnalysisError::Shape(format!("expected {MODES} modes, got {}", preds.len())));
    }
    if truth.is_empty() {
        return Err(AnalysisError::Shape("empty ground truth".into()));
    }
    if let Some((i, p)) = preds.iter().enumerate().find(|(_, p)| p.len() != truth.len()) {
        return Err(AnalysisError::Shape(format!("mode {i} has {} points, truth has {}", p.len(), truth.len())));
    }
    let mut min_ade = f64::INFINITY;
    let mut min_fde = f64::INFINITY;
    let mut best_mode = 0;
    for (i, p) in preds.iter().enumerate() {
        let ade = p.iter().zip(truth).map(|(a, b)| a.distance(b)).sum::<f64>() / truth.len() as f64;
        let fde = p[p.len() - 1].distance(&truth[truth.len() - 1]);
        min_ade = min_ade.min(ade);
        if fde < min_fde {
            min_fde = fde;
            best_mode = i;
        }
    }
    Ok(ForecastMetrics { min_ade, min_fde, best_mode, miss: min_fde > miss_threshold })
}

/// Means of minADE and minFDE, and the miss rate.
pub fn summarize(metrics: &[ForecastMetrics]) -> Option<(f64, f64, f64)> {
    if metrics.is_empty() {
        return None;
    }
    let n = metrics.len() as f64;
    Some((
        metrics.iter().map(|m| m.min_ade).sum::<f64>() / n,
        metrics.iter().map(|m| m.min_fde).sum::<f64>() / n,
        metrics.iter().filter(|m| m.miss).count() as f64 / n,
    ))
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> AnalysisError {
    AnalysisError::Io { path: path.to_owned(), message: e.to_string() }
}

/// `bin_lo,bin_hi,count` rows for the occupied bins.
pub fn format_histogram_table(h: &Histogram) -> String {
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for (i, &c) in h.counts.iter().enumerate() {
        if c > 0 {
            let (lo, hi) = h.bin_bounds(i);
            let _ = writeln!(out, "{lo},{hi},{c}");
        }
    }
    out
}

/// Reads a table back into a histogram with the binning of `template`.
pub fn parse_histogram_table(text: &str, template: &Histogram) -> Result<Histogram, AnalysisError> {
    let err = |line: usize, m: String| AnalysisError::Parse { path: PathBuf::new(), line, message: m };
    let mut h = Histogram { counts: vec![0; template.counts.len()], ..template.clone() };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "bin_lo,bin_hi,count")) => {}
        _ => return Err(err(1, "missing `bin_lo,bin_hi,count` header".into())),
    }
    for (i, raw) in lines {
        let f: Vec<&str> = raw.split(',').collect();
        let [lo, _, c] = f[..] else {
            return Err(err(i + 1, format!("expected 3 columns, found {}", f.len())));
        };
        let lo: f64 = lo.parse().map_err(|_| err(i + 1, format!("bad bin_lo `{lo}`")))?;
        let c: u64 = c.parse().map_err(|_| err(i + 1, format!("bad count `{c}`")))?;
        let bin = ((lo - h.lo) / h.width).round();
        if bin < 0.0 || bin as usize >= h.counts.len() {
            return Err(err(i + 1, format!("bin_lo {lo} is outside the binning")));
        }
        h.counts[bin as usize] += c;
    }
    Ok(h)
}

pub fn format_cloud(points: &[Point2]) -> String {
    let mut out = String::from("x,y\n");
    for p in points {
        let _ = writeln!(out, "{},{}", p.x, p.y);
    }
    out
}

pub fn parse_cloud(text: &str) -> Result<Vec<Point2>, AnalysisError> {
    let err = |line: usize, m: String| AnalysisError::Parse { path: PathBuf::new(), line, message: m };
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, l)| l) != Some("x,y") {
        return Err(err(1, "missing `x,y` header".into()));
    }
    lines
        .map(|(i, raw)| {
            let (x, y) = raw.split_once(',').ok_or_else(|| err(i + 1, "expected `x,y`".into()))?;
            let x = x.parse().map_err(|_| err(i + 1, format!("bad x `{x}`")))?;
            let y = y.parse().map_err(|_| err(i + 1, format!("bad y `{y}`")))?;
            Ok(Point2::new(x, y))
        })
        .collect()
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Bar chart of `h` as a standalone SVG document.
pub fn render_histogram_svg(h: &Histogram, title: &str) -> String {
    let (w, ht, pad) = (640.0, 360.0, 40.0);
    let max = h.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let bar = (w - 2.0 * pad) / h.counts.len() as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{ht}" viewBox="0 0 {w} {ht}">"#
    );
    let _ = writeln!(out, r#"  <title>{}</title>"#, xml_escape(title));
    let _ = writeln!(out, r#"  <rect x="0" y="0" width="{w}" height="{ht}" fill="white"/>"#);
    for (i, &c) in h.counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let bh = (ht - 2.0 * pad) * c as f64 / max;
        let _ = writeln!(
            out,
            r##"  <rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="#4a7ab5"/>"##,
            pad + i as f64 * bar,
            ht - pad - bh,
            bar,
            bh
        );
    }
    let (lo, _) = h.bin_bounds(0);
    let (_, hi) = h.bin_bounds(h.counts.len() - 1);
    let _ = writeln!(
        out,
        r#"  <line x1="{pad}" y1="{y}" x2="{x2}" y2="{y}" stroke="black"/>"#,
        y = ht - pad,
        x2 = w - pad
    );
    let _ = writeln!(out, r#"  <text x="{pad}" y="{}" font-size="12">{lo:.2}</text>"#, ht - pad / 3.0);
    let _ = writeln!(
        out,
        r#"  <text x="{}" y="{}" font-size="12" text-anchor="end">{hi:.2}</text>"#,
        w - pad,
        ht - pad / 3.0
    );
    let _ = writeln!(out, r#"  <text x="{}" y="24" font-size="14" text-anchor="middle">{}</text>"#, w / 2.0, xml_escape(title));
    out.push_str("</svg>\n");
    out
}

/// Writes `<dir>/<name>.csv` for each histogram (plus `<name>.svg` when
/// `svg` is set) and `<dir>/endpoints.csv`. Returns the written paths.
pub fn emit_plot_data(
    dir: &Path,
    histograms: &[(&str, &Histogram)],
    endpoints: &[Point2],
    svg: bool,
) -> Result<Vec<PathBuf>, AnalysisError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<(), AnalysisError> {
        let path = dir.join(name);
        write_atomic(&path, body.as_bytes()).map_err(|e| io_err(&path, e))?;
        written.push(path);
        Ok(())
    };
    for (name, h) in histograms {
        put(format!("{name}.csv"), format_histogram_table(h))?;
        if svg {
            put(format!("{name}.svg"), render_histogram_svg(h, name))?;
        }
    }
    put("endpoints.csv".into(), format_cloud(endpoints))?;
    Ok(written)
}
