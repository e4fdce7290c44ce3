//! Scene files.
//!
//! ```text
//! # format: scenesynth-scene/1
//! # scene_id: 000012
//! # city: PIT
//! # seed: 1234567
//! # v_d: 9.5
//! # v0: 10.1
//! # plan_cost: 42.25
//! # crop_center: 120.5 -30.25
//! # crop_radius: 100
//! # history_len: 20
//! # map_file: 000012.map
//! # transform: single b=10 alpha1=3.5 alpha2=20 s_t=10 beta=20 origin=1,2 heading=0.5
//! TIMESTAMP,TRACK_ID,OBJECT_TYPE,X,Y,CITY_NAME
//! 0.0,ego,AGENT,120.000000000,-30.000000000,PIT
//! ```
//!
//! `transform` is `none` for scenes on unmodified maps. Metadata floats use
//! the shortest representation that parses back exactly; coordinates use
//! nine decimals. The map crop lives next to the scene in the lane map format.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{Scene, SceneMetadata, SynthesisError};
use crate::fsutil::write_atomic;
use crate::map_augment::{Frame, TurnKind, TurnTransformParams};
use crate::map_model::{format_map, parse_map, Point2};

pub const SCENE_FORMAT: &str = "scenesynth-scene/1";
const COLUMNS: &str = "TIMESTAMP,TRACK_ID,OBJECT_TYPE,X,Y,CITY_NAME";
const TRACK_ID: &str = "ego";

pub fn map_file_name(scene_id: &str) -> String {
    format!("{scene_id}.map")
}

pub fn scene_file_name(scene_id: &str) -> String {
    format!("{scene_id}.csv")
}

pub fn format_scene(scene: &Scene) -> String {
    let m = &scene.metadata;
    let mut out = String::new();
    let _ = writeln!(out, "# format: {SCENE_FORMAT}");
    let _ = writeln!(out, "# scene_id: {}", scene.scene_id);
    let _ = writeln!(out, "# city: {}", scene.city_tag);
    let _ = writeln!(out, "# seed: {}", m.seed);
    let _ = writeln!(out, "# v_d: {}", m.v_d);
    let _ = writeln!(out, "# v0: {}", m.v0);
    let _ = writeln!(out, "# plan_cost: {}", m.plan_cost);
    let _ = writeln!(out, "# crop_center: {} {}", m.crop_center.x, m.crop_center.y);
    let _ = writeln!(out, "# crop_radius: {}", m.crop_radius);
    let _ = writeln!(out, "# history_len: {}", m.history_len);
    let _ = writeln!(out, "# map_file: {}", map_file_name(&scene.scene_id));
    match &m.transform {
        None => out.push_str("# transform: none\n"),
        Some(t) => {
            let _ = writeln!(
                out,
                "# transform: {} b={} alpha1={} alpha2={} s_t={} beta={} origin={},{} heading={}",
                t.kind.as_str(),
                t.b,
                t.alpha1,
                t.alpha2,
                t.s_t,
                t.beta,
                t.frame.origin.x,
                t.frame.origin.y,
                t.frame.heading
            );
        }
    }
    out.push_str(COLUMNS);
    out.push('\n');
    for (t, p) in scene.timestamps.iter().zip(&scene.positions) {
        let _ = writeln!(out, "{t:.1},{TRACK_ID},AGENT,{:.9},{:.9},{}", p.x, p.y, scene.city_tag);
    }
    out
}

struct Cursor {
    line: usize,
}

impl Cursor {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, SynthesisError> {
        Err(SynthesisError::Parse { path: PathBuf::new(), line: self.line, message: message.into() })
    }

    fn float(&self, key: &str, v: &str) -> Result<f64, SynthesisError> {
        match v.trim().parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => self.err(format!("{key}: `{v}` is not a finite number")),
        }
    }
}

fn parse_transform(c: &Cursor, v: &str) -> Result<Option<TurnTransformParams>, SynthesisError> {
    let mut parts = v.split_whitespace();
    let kind = match parts.next() {
        Some("none") => return Ok(None),
        Some(k) => TurnKind::parse(k).map_or_else(|| c.err(format!("unknown transform kind `{k}`")), Ok)?,
        None => return c.err("empty transform"),
    };
    let mut fields = std::collections::BTreeMap::new();
    for part in parts {
        let Some((k, val)) = part.split_once('=') else {
            return c.err(format!("transform field `{part}` is not key=value"));
        };
        fields.insert(k, val);
    }
    let mut get = |k: &str| match fields.remove(k) {
        Some(v) => c.float(k, v),
        None => c.err(format!("transform is missing `{k}`")),
    };
    let (b, alpha1, alpha2, s_t, beta, heading) =
        (get("b")?, get("alpha1")?, get("alpha2")?, get("s_t")?, get("beta")?, get("heading")?);
    let origin = match fields.remove("origin").and_then(|o| o.split_once(',')) {
        Some((x, y)) => Point2::new(c.float("origin", x)?, c.float("origin", y)?),
        None => return c.err("transform origin must be `x,y`"),
    };
    if let Some(k) = fields.keys().next() {
        return c.err(format!("unknown transform field `{k}`"));
    }
    Ok(Some(TurnTransformParams { kind, b, alpha1, alpha2, s_t, beta, frame: Frame { origin, heading } }))
}

/// Parses a scene file; the map crop is supplied separately.
pub fn parse_scene(text: &str, map_crop: crate::map_model::SceneMap) -> Result<Scene, SynthesisError> {
    let mut c = Cursor { line: 0 };
    let mut header = std::collections::BTreeMap::new();
    let mut lines = text.lines();
    let mut saw_columns = false;
    for raw in lines.by_ref() {
        c.line += 1;
        if let Some(rest) = raw.strip_prefix('#') {
            let Some((k, v)) = rest.split_once(':') else {
                return c.err(format!("header line `{raw}` is not `# key: value`"));
            };
            if header.insert(k.trim().to_owned(), (c.line, v.trim().to_owned())).is_some() {
                return c.err(format!("duplicate header key `{}`", k.trim()));
            }
        } else if raw.trim() == COLUMNS {
            saw_columns = true;
            break;
        } else {
            return c.err(format!("expected header or `{COLUMNS}`"));
        }
    }
    if !saw_columns {
        return c.err("missing column row");
    }

    let columns_line = c.line;
    let mut take = |key: &str| -> Result<(Cursor, String), SynthesisError> {
        match header.remove(key) {
            Some((line, v)) => Ok((Cursor { line }, v)),
            None => Cursor { line: columns_line }.err(format!("missing header `{key}`")),
        }
    };
    let (fc, format) = take("format")?;
    if format != SCENE_FORMAT {
        return fc.err(format!("unsupported format `{format}`"));
    }
    let (_, scene_id) = take("scene_id")?;
    let (_, city_tag) = take("city")?;
    let (sc, seed) = take("seed")?;
    let seed = seed.parse::<u64>().map_or_else(|_| sc.err("seed must be an unsigned integer"), Ok)?;
    let mut float_key = |key: &str| -> Result<f64, SynthesisError> {
        let (c, v) = take(key)?;
        c.float(key, &v)
    };
    let v_d = float_key("v_d")?;
    let v0 = float_key("v0")?;
    let plan_cost = float_key("plan_cost")?;
    let crop_radius = float_key("crop_radius")?;
    let (cc, center) = take("crop_center")?;
    let crop_center = match center.split_whitespace().collect::<Vec<_>>()[..] {
        [x, y] => Point2::new(cc.float("crop_center", x)?, cc.float("crop_center", y)?),
        _ => return cc.err("crop_center must be `x y`"),
    };
    let (hc, history) = take("history_len")?;
    let history_len = history.parse::<usize>().map_or_else(|_| hc.err("history_len must be an integer"), Ok)?;
    let (mc, map_file) = take("map_file")?;
    if map_file != map_file_name(&scene_id) {
        return mc.err(format!("map_file `{map_file}` does not match scene id"));
    }
    let (tc, transform) = take("transform")?;
    let transform = parse_transform(&tc, &transform)?;
    if let Some((k, (line, _))) = header.into_iter().next() {
        return Cursor { line }.err(format!("unknown header key `{k}`"));
    }

    let mut timestamps = Vec::new();
    let mut positions = Vec::new();
    for raw in lines {
        c.line += 1;
        if raw.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = raw.split(',').collect();
        let [t, track, kind, x, y, city] = cols[..] else {
            return c.err(format!("expected 6 columns, found {}", cols.len()));
        };
        if track != TRACK_ID || kind != "AGENT" {
            return c.err(format!("unexpected track `{track}` / object type `{kind}`"));
        }
        if city != city_tag {
            return c.err(format!("city `{city}` differs from header `{city_tag}`"));
        }
        timestamps.push(c.float("TIMESTAMP", t)?);
        positions.push(Point2::new(c.float("X", x)?, c.float("Y", y)?));
    }
    Ok(Scene {
        scene_id,
        city_tag,
        map_crop,
        timestamps,
        positions,
        metadata: SceneMetadata { transform, seed, v_d, v0, plan_cost, crop_center, crop_radius, history_len },
    })
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> SynthesisError {
    SynthesisError::Io { path: path.to_owned(), message: e.to_string() }
}

/// Writes `<dir>/<id>.csv` and its map crop `<dir>/<id>.map`; returns the
/// scene file path.
pub fn write_scene(scene: &Scene, dir: &Path) -> Result<PathBuf, SynthesisError> {
    let map_path = dir.join(map_file_name(&scene.scene_id));
    write_atomic(&map_path, format_map(&scene.map_crop).as_bytes()).map_err(|e| io_err(&map_path, e))?;
    let path = dir.join(scene_file_name(&scene.scene_id));
    write_atomic(&path, format_scene(scene).as_bytes()).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

/// Reads a scene file and the map crop stored next to it.
pub fn read_scene(path: &Path) -> Result<Scene, SynthesisError> {
    let with_path = |e: SynthesisError| match e {
        SynthesisError::Parse { line, message, .. } => SynthesisError::Parse { path: path.to_owned(), line, message },
        other => other,
    };
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let map_path = path.with_extension("map");
    let map_text = fs::read_to_string(&map_path).map_err(|e| io_err(&map_path, e))?;
    let map = parse_map(&map_text).map_err(|e| match e {
        crate::map_model::MapError::Parse { line, message } => {
            SynthesisError::Parse { path: map_path.clone(), line, message }
        }
        other => io_err(&map_path, other),
    })?;
    parse_scene(&text, map).map_err(with_path)
}
