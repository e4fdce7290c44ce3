use std::collections::BTreeMap;
use std::fmt;

use super::{MapError, Point2, Polyline};

/// Maximum gap between a lane's last point and each successor's first point.
pub const SUCCESSOR_GAP_TOLERANCE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LaneId(pub String);

impl LaneId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for LaneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for LaneId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaneSegment {
    pub id: LaneId,
    pub centerline: Polyline,
    pub predecessors: Vec<LaneId>,
    pub successors: Vec<LaneId>,
}

impl LaneSegment {
    pub fn new(id: impl Into<LaneId>, centerline: Polyline) -> Self {
        Self { id: id.into(), centerline, predecessors: Vec::new(), successors: Vec::new() }
    }
}

impl From<String> for LaneId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

/// A lane graph keyed by lane id. Iteration order is the id order, which keeps
/// every consumer deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneMap {
    city_tag: String,
    lanes: BTreeMap<LaneId, LaneSegment>,
}

impl SceneMap {
    /// Builds and validates a map: unique ids, resolvable connectivity and
    /// successor continuity within [`SUCCESSOR_GAP_TOLERANCE`].
    pub fn new(city_tag: impl Into<String>, lanes: Vec<LaneSegment>) -> Result<Self, MapError> {
        let map = Self::new_unchecked_continuity(city_tag, lanes)?;
        map.check_continuity()?;
        Ok(map)
    }

    /// Validates ids and references but not geometric continuity. Used for
    /// derived maps (crops, warps) whose topology is inherited.
    pub(crate) fn new_unchecked_continuity(
        city_tag: impl Into<String>,
        lanes: Vec<LaneSegment>,
    ) -> Result<Self, MapError> {
        let mut by_id = BTreeMap::new();
        for lane in lanes {
            if by_id.contains_key(&lane.id) {
                return Err(MapError::DuplicateLane(lane.id.0));
            }
            by_id.insert(lane.id.clone(), lane);
        }
        let map = Self { city_tag: city_tag.into(), lanes: by_id };
        map.check_references()?;
        Ok(map)
    }

    fn check_references(&self) -> Result<(), MapError> {
        for lane in self.lanes.values() {
            for other in lane.successors.iter().chain(&lane.predecessors) {
                if !self.lanes.contains_key(other) {
                    return Err(MapError::DanglingReference {
                        lane: lane.id.0.clone(),
                        missing: other.0.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    fn check_continuity(&self) -> Result<(), MapError> {
        for lane in self.lanes.values() {
            let end = lane.centerline.last();
            for succ in &lane.successors {
                let gap = end.distance(&self.lanes[succ].centerline.first());
                if gap > SUCCESSOR_GAP_TOLERANCE {
                    return Err(MapError::Discontinuous {
                        lane: lane.id.0.clone(),
                        successor: succ.0.clone(),
                        gap,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn city_tag(&self) -> &str {
        &self.city_tag
    }

    pub fn lanes(&self) -> impl Iterator<Item = &LaneSegment> {
        self.lanes.values()
    }

    pub fn lane(&self, id: &LaneId) -> Option<&LaneSegment> {
        self.lanes.get(id)
    }

    pub fn len(&self) -> usize {
        self.lanes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lanes.is_empty()
    }

    /// Number of successor edges in the graph.
    pub fn edge_count(&self) -> usize {
        self.lanes.values().map(|l| l.successors.len()).sum()
    }

    pub fn point_count(&self) -> usize {
        self.lanes.values().map(|l| l.centerline.len()).sum()
    }

    /// Applies `f` to every lane point, keeping ids and connectivity.
    pub(crate) fn map_points<F>(&self, mut f: F) -> Result<SceneMap, MapError>
    where
        F: FnMut(Point2) -> Point2,
    {
        let lanes = self
            .lanes
            .values()
            .map(|lane| {
                let pts = lane.centerline.points().iter().map(|&p| f(p)).collect();
                let centerline = Polyline::new(pts).map_err(|e| MapError::BadLane {
                    lane: lane.id.0.clone(),
                    source: Box::new(e),
                })?;
                Ok(LaneSegment { centerline, ..lane.clone() })
            })
            .collect::<Result<Vec<_>, MapError>>()?;
        Ok(SceneMap { city_tag: self.city_tag.clone(), lanes: lanes.into_iter().map(|l| (l.id.clone(), l)).collect() })
    }

    /// Keeps the part of the map within `radius` of `center`.
    ///
    /// Each lane is cut to the vertex run between its first and last vertex
    /// inside the disk; lanes with fewer than two such vertices are dropped.
    /// Connectivity survives only between kept lanes whose shared endpoints
    /// were not cut away.
    pub fn crop(&self, center: Point2, radius: f64) -> SceneMap {
        let mut kept: BTreeMap<LaneId, (LaneSegment, bool, bool)> = BTreeMap::new();
        for lane in self.lanes.values() {
            let pts = lane.centerline.points();
            let inside: Vec<usize> = (0..pts.len()).filter(|&i| pts[i].distance(&center) <= radius).collect();
            let (Some(&lo), Some(&hi)) = (inside.first(), inside.last()) else { continue };
            if hi <= lo {
                continue;
            }
            let cut_start = lo > 0;
            let cut_end = hi < pts.len() - 1;
            let centerline = if !cut_start && !cut_end {
                lane.centerline.clone()
            } else {
                Polyline::new(pts[lo..=hi].to_vec()).expect("sub-run of a valid polyline")
            };
            kept.insert(
                lane.id.clone(),
                (LaneSegment { centerline, ..lane.clone() }, cut_start, cut_end),
            );
        }
        let flags: BTreeMap<LaneId, (bool, bool)> =
            kept.iter().map(|(id, (_, s, e))| (id.clone(), (*s, *e))).collect();
        let lanes = kept
            .into_values()
            .map(|(mut lane, cut_start, cut_end)| {
                lane.successors.retain(|s| !cut_end && flags.get(s).is_some_and(|f| !f.0));
                lane.predecessors.retain(|p| !cut_start && flags.get(p).is_some_and(|f| !f.1));
                (lane.id.clone(), lane)
            })
            .collect();
        SceneMap { city_tag: self.city_tag.clone(), lanes }
    }
}
