//! Lane-graph maps: geometry, ingestion, reference paths.

mod fixtures;
mod geometry;
mod io;
mod lane_graph;
mod reference;

pub use fixtures::{chain_map, corridor_map, fork_map, town_map, CorridorSpec};
pub use geometry::{
    curvature_profile, menger_curvature, resample_polyline, Point2, Polyline, MIN_VERTEX_SPACING,
};
pub use io::{format_map, load_map, parse_map, write_map};
pub use lane_graph::{LaneId, LaneSegment, SceneMap, SUCCESSOR_GAP_TOLERANCE};
pub use reference::{build_reference_paths, project_to_path, ReferencePath, REFERENCE_SPACING};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("polyline needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("non-finite coordinate at point {index}")]
    NonFinite { index: usize },
    #[error("point {index} coincides with its predecessor")]
    CoincidentPoints { index: usize },
    #[error("resampling spacing must be positive and finite, got {0}")]
    InvalidSpacing(f64),
    #[error("duplicate lane id `{0}`")]
    DuplicateLane(String),
    #[error("lane `{lane}` references unknown lane `{missing}`")]
    DanglingReference { lane: String, missing: String },
    #[error("lane `{lane}` ends {gap:.3} m away from the start of successor `{successor}`")]
    Discontinuous { lane: String, successor: String, gap: f64 },
    #[error("lane `{lane}`: {source}")]
    BadLane {
        lane: String,
        #[source]
        source: Box<MapError>,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("reference path is empty")]
    EmptyPath,
    #[error("arc-length {s} outside path [0, {length}]")]
    OutsidePath { s: f64, length: f64 },
}
