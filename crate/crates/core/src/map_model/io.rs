//! Line-oriented lane map format.
//!
//! ```text
//! # comment lines and blank lines are ignored
//! city PIT
//! lane L1
//! pt 0 0
//! pt 10.5 0.25
//! succ L2
//! lane L2
//! pt 10.5 0.25
//! pt 20 0
//! pred L1
//! ```
//!
//! `city` must precede the first `lane` record and may appear at most once.
//! Each `lane <id>` opens a record; `pt <x> <y>` rows (meters, decimal) give the
//! centerline in order; `succ <id>` / `pred <id>` rows give connectivity.
//! The writer prints coordinates as the shortest decimal that parses back to
//! the same `f64`, so write-then-load is lossless.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{LaneId, LaneSegment, MapError, Point2, Polyline, SceneMap};

struct PendingLane {
    id: String,
    line: usize,
    points: Vec<Point2>,
    successors: Vec<LaneId>,
    predecessors: Vec<LaneId>,
}

impl PendingLane {
    fn finish(self) -> Result<LaneSegment, MapError> {
        let centerline = Polyline::new(self.points).map_err(|e| MapError::Parse {
            line: self.line,
            message: format!("lane `{}`: {e}", self.id),
        })?;
        Ok(LaneSegment {
            id: LaneId(self.id),
            centerline,
            predecessors: self.predecessors,
            successors: self.successors,
        })
    }
}

pub fn parse_map(text: &str) -> Result<SceneMap, MapError> {
    let mut city: Option<String> = None;
    let mut lanes = Vec::new();
    let mut current: Option<PendingLane> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let keyword = fields.next().unwrap_or_default();
        let args: Vec<&str> = fields.collect();
        let err = |message: String| MapError::Parse { line: line_no, message };
        let lane_ctx = |cur: &Option<PendingLane>| {
            cur.as_ref().map(|l| format!(" in lane `{}`", l.id)).unwrap_or_default()
        };

        match keyword {
            "city" => {
                if args.len() != 1 {
                    return Err(err("`city` takes exactly one tag".into()));
                }
                if city.is_some() || current.is_some() || !lanes.is_empty() {
                    return Err(err("`city` must appear once, before any lane".into()));
                }
                city = Some(args[0].to_owned());
            }
            "lane" => {
                if args.len() != 1 {
                    return Err(err("`lane` takes exactly one id".into()));
                }
                if let Some(done) = current.take() {
                    lanes.push(done.finish()?);
                }
                current = Some(PendingLane {
                    id: args[0].to_owned(),
                    line: line_no,
                    points: Vec::new(),
                    successors: Vec::new(),
                    predecessors: Vec::new(),
                });
            }
            "pt" => {
                let ctx = lane_ctx(&current);
                let Some(lane) = current.as_mut() else {
                    return Err(err("`pt` outside a lane record".into()));
                };
                if args.len() != 2 {
                    return Err(err(format!("`pt` needs x and y{ctx}")));
                }
                let parse = |s: &str| {
                    s.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| err(format!("bad coordinate `{s}`{ctx}")))
                };
                lane.points.push(Point2::new(parse(args[0])?, parse(args[1])?));
            }
            "succ" | "pred" => {
                let Some(lane) = current.as_mut() else {
                    return Err(err(format!("`{keyword}` outside a lane record")));
                };
                if args.len() != 1 {
                    return Err(err(format!("`{keyword}` takes exactly one id in lane `{}`", lane.id)));
                }
                let target = LaneId(args[0].to_owned());
                if keyword == "succ" {
                    lane.successors.push(target);
                } else {
                    lane.predecessors.push(target);
                }
            }
            other => {
                let ctx = lane_ctx(&current);
                return Err(err(format!("unknown record `{other}`{ctx}")));
            }
        }
    }
    if let Some(done) = current.take() {
        lanes.push(done.finish()?);
    }
    SceneMap::new(city.unwrap_or_else(|| "UNKNOWN".to_owned()), lanes)
}

pub fn load_map(path: impl AsRef<Path>) -> Result<SceneMap, MapError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| MapError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_map(&text)
}

pub fn format_map(map: &SceneMap) -> String {
    let mut out = String::with_capacity(map.point_count() * 32);
    let _ = writeln!(out, "city {}", map.city_tag());
    for lane in map.lanes() {
        let _ = writeln!(out, "lane {}", lane.id);
        for p in lane.centerline.points() {
            let _ = writeln!(out, "pt {} {}", p.x, p.y);
        }
        for s in &lane.successors {
            let _ = writeln!(out, "succ {s}");
        }
        for p in &lane.predecessors {
            let _ = writeln!(out, "pred {p}");
        }
    }
    out
}

/// Writes the map atomically (temporary file, then rename).
pub fn write_map(map: &SceneMap, path: impl AsRef<Path>) -> Result<(), MapError> {
    crate::fsutil::write_atomic(path.as_ref(), format_map(map).as_bytes())
        .map_err(|e| MapError::Io { path: path.as_ref().display().to_string(), message: e.to_string() })
}
