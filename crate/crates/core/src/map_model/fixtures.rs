//! Procedural lane maps used as generation substrates and test fixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LaneId, LaneSegment, Point2, Polyline, SceneMap};

#[derive(Debug, Clone)]
pub struct CorridorSpec {
    pub city: String,
    pub id_prefix: String,
    pub origin: Point2,
    pub heading: f64,
    pub lanes: usize,
    pub lane_width: f64,
    pub segment_length: f64,
    pub segments: usize,
    pub vertex_spacing: f64,
}

impl Default for CorridorSpec {
    fn default() -> Self {
        Self {
            city: "SYN".into(),
            id_prefix: String::new(),
            origin: Point2::new(0.0, 0.0),
            heading: 0.0,
            lanes: 2,
            lane_width: 3.5,
            segment_length: 50.0,
            segments: 6,
            vertex_spacing: 0.5,
        }
    }
}

fn straight_points(start: Point2, heading: f64, length: f64, spacing: f64) -> Vec<Point2> {
    let n = (length / spacing).ceil().max(1.0) as usize;
    let dir = Point2::new(heading.cos(), heading.sin());
    (0..=n).map(|i| start + dir * (length * i as f64 / n as f64)).collect()
}

fn arc_points(start: Point2, heading: f64, radius: f64, sweep: f64, spacing: f64) -> Vec<Point2> {
    // positive sweep turns left
    let length = radius * sweep.abs();
    let n = (length / spacing).ceil().max(2.0) as usize;
    let side = sweep.signum();
    let normal = Point2::new(-heading.sin(), heading.cos()) * side;
    let center = start + normal * radius;
    let start_angle = (start - center).y.atan2((start - center).x);
    (0..=n)
        .map(|i| {
            let a = start_angle + sweep * i as f64 / n as f64;
            center + Point2::new(a.cos(), a.sin()) * radius
        })
        .collect()
}

fn link(lanes: &mut [LaneSegment], from: usize, to: usize) {
    let to_id = lanes[to].id.clone();
    let from_id = lanes[from].id.clone();
    lanes[from].successors.push(to_id);
    lanes[to].predecessors.push(from_id);
}

fn corridor_lanes(spec: &CorridorSpec) -> Vec<LaneSegment> {
    let dir = Point2::new(spec.heading.cos(), spec.heading.sin());
    let left = Point2::new(-dir.y, dir.x);
    let mut lanes = Vec::with_capacity(spec.lanes * spec.segments);
    for lane in 0..spec.lanes {
        let offset = left * (spec.lane_width * lane as f64);
        for seg in 0..spec.segments {
            let start = spec.origin + offset + dir * (spec.segment_length * seg as f64);
            let pts = straight_points(start, spec.heading, spec.segment_length, spec.vertex_spacing);
            let id = LaneId(format!("{}L{}_{}", spec.id_prefix, lane, seg));
            lanes.push(LaneSegment::new(id, Polyline::new(pts).expect("straight fixture")));
        }
    }
    for lane in 0..spec.lanes {
        for seg in 1..spec.segments {
            let i = lane * spec.segments + seg;
            link(&mut lanes, i - 1, i);
        }
    }
    lanes
}

/// Parallel straight lanes split into connected segments.
pub fn corridor_map(spec: &CorridorSpec) -> SceneMap {
    SceneMap::new(spec.city.clone(), corridor_lanes(spec)).expect("corridor fixture is valid")
}

/// `count` straight lanes `L1 → L2 → …` of `length` meters along +x.
pub fn chain_map(count: usize, length: f64) -> SceneMap {
    let mut lanes: Vec<LaneSegment> = (0..count)
        .map(|i| {
            let start = Point2::new(length * i as f64, 0.0);
            let pts = straight_points(start, 0.0, length, 1.0);
            LaneSegment::new(LaneId(format!("L{}", i + 1)), Polyline::new(pts).unwrap())
        })
        .collect();
    for i in 1..count {
        link(&mut lanes, i - 1, i);
    }
    SceneMap::new("SYN", lanes).expect("chain fixture is valid")
}

/// `L1` (straight, `length` m) forks into a straight `L2` and a left arc `L3`.
pub fn fork_map(length: f64) -> SceneMap {
    let l1 = straight_points(Point2::new(0.0, 0.0), 0.0, length, 1.0);
    let end = l1[l1.len() - 1];
    let l2 = straight_points(end, 0.0, length, 1.0);
    let l3 = arc_points(end, 0.0, 30.0, std::f64::consts::FRAC_PI_2, 1.0);
    let mut lanes = vec![
        LaneSegment::new("L1", Polyline::new(l1).unwrap()),
        LaneSegment::new("L2", Polyline::new(l2).unwrap()),
        LaneSegment::new("L3", Polyline::new(l3).unwrap()),
    ];
    link(&mut lanes, 0, 1);
    link(&mut lanes, 0, 2);
    SceneMap::new("SYN", lanes).expect("fork fixture is valid")
}

/// A small synthetic city: `roads` two-lane corridors at random poses, each
/// with a curved branch leaving its right lane. Deterministic in `seed`.
pub fn town_map(roads: usize, seed: u64) -> SceneMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all = Vec::new();
    for r in 0..roads {
        let spec = CorridorSpec {
            city: "SYN".into(),
            id_prefix: format!("R{r}"),
            origin: Point2::new(rng.gen_range(-2000.0..2000.0), rng.gen_range(-2000.0..2000.0)),
            heading: rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
            lanes: 2,
            lane_width: 3.5,
            segment_length: 50.0,
            segments: rng.gen_range(5..=8),
            vertex_spacing: 0.5,
        };
        let mut lanes = corridor_lanes(&spec);

        // branch: arc from the end of segment 2 on lane 0, then a straight run-out
        let fork_from = 2;
        let src_end = lanes[fork_from].centerline.last();
        let radius = rng.gen_range(30.0..90.0);
        let sweep = rng.gen_range(0.4..1.4) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let arc = arc_points(src_end, spec.heading, radius, sweep, 0.5);
        let exit_heading = spec.heading + sweep;
        let run = straight_points(arc[arc.len() - 1], exit_heading, 150.0, 0.5);
        let arc_id = LaneId(format!("R{r}B0"));
        let run_id = LaneId(format!("R{r}B1"));
        lanes.push(LaneSegment::new(arc_id, Polyline::new(arc).unwrap()));
        lanes.push(LaneSegment::new(run_id, Polyline::new(run).unwrap()));
        let n = lanes.len();
        link(&mut lanes, fork_from, n - 2);
        link(&mut lanes, n - 2, n - 1);
        all.extend(lanes);
    }
    SceneMap::new("SYN", all).expect("town fixture is valid")
}
