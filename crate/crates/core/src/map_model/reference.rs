use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{
    curvature_profile, resample_polyline, LaneId, MapError, Point2, Polyline, SceneMap,
    MIN_VERTEX_SPACING,
};

/// Sample spacing of reference paths, meters.
pub const REFERENCE_SPACING: f64 = 1.0;

/// Upper bound on lane visits per depth-first walk.
const DFS_BUDGET: usize = 10_000;

/// An arc-length parameterised path the ego vehicle follows.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePath {
    samples: Polyline,
    cum_s: Vec<f64>,
    kappa: Vec<f64>,
    lanes: Vec<LaneId>,
}

impl ReferencePath {
    /// Resamples `line` at `spacing` and attaches arc-length and curvature.
    pub fn from_polyline(line: &Polyline, spacing: f64) -> Result<Self, MapError> {
        let samples = resample_polyline(line, spacing)?;
        let cum_s = samples.cumulative_length();
        let kappa = if samples.len() >= 3 {
            curvature_profile(&samples)?
        } else {
            vec![0.0; samples.len()]
        };
        Ok(Self { samples, cum_s, kappa, lanes: Vec::new() })
    }

    /// Concatenates the centerlines of `lanes` (in order) into one path.
    pub fn from_lanes(map: &SceneMap, lanes: &[LaneId], spacing: f64) -> Result<Self, MapError> {
        let mut pts: Vec<Point2> = Vec::new();
        for id in lanes {
            let lane = map.lane(id).ok_or_else(|| MapError::DanglingReference {
                lane: "<path>".into(),
                missing: id.0.clone(),
            })?;
            let cl = lane.centerline.points();
            let skip = match pts.last() {
                Some(last) if last.distance(&cl[0]) <= 1e-6 => 1,
                _ => 0,
            };
            pts.extend_from_slice(&cl[skip..]);
        }
        if pts.is_empty() {
            return Err(MapError::EmptyPath);
        }
        let line = Polyline::from_points_dedup(pts)?;
        let mut path = Self::from_polyline(&line, spacing)?;
        path.lanes = lanes.to_vec();
        Ok(path)
    }

    pub fn samples(&self) -> &[Point2] {
        self.samples.points()
    }

    pub fn polyline(&self) -> &Polyline {
        &self.samples
    }

    pub fn cum_s(&self) -> &[f64] {
        &self.cum_s
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    /// Lane ids the path was assembled from (empty for raw polylines).
    pub fn lanes(&self) -> &[LaneId] {
        &self.lanes
    }

    pub fn length(&self) -> f64 {
        self.cum_s[self.cum_s.len() - 1]
    }

    /// Segment index and interpolation fraction for arc-length `s`.
    fn locate(&self, s: f64) -> Result<(usize, f64), MapError> {
        let len = self.length();
        if !(0.0..=len).contains(&s) {
            return Err(MapError::OutsidePath { s, length: len });
        }
        let n = self.cum_s.len();
        let i = self.cum_s.partition_point(|&c| c <= s).saturating_sub(1).min(n - 2);
        let u = (s - self.cum_s[i]) / (self.cum_s[i + 1] - self.cum_s[i]);
        Ok((i, u))
    }

    /// Position at arc-length `s`; exact sample coordinates when `s` hits a sample.
    pub fn point_at(&self, s: f64) -> Result<Point2, MapError> {
        let (i, u) = self.locate(s)?;
        let pts = self.samples.points();
        Ok(if u == 0.0 {
            pts[i]
        } else if u == 1.0 {
            pts[i + 1]
        } else {
            pts[i].lerp(&pts[i + 1], u)
        })
    }

    /// Curvature at `s`, linearly interpolated between samples.
    pub fn kappa_at(&self, s: f64) -> Result<f64, MapError> {
        let (i, u) = self.locate(s)?;
        Ok(self.kappa[i] + u * (self.kappa[i + 1] - self.kappa[i]))
    }

    /// Unit tangent heading (radians) at sample `i`.
    pub fn heading_at_index(&self, i: usize) -> f64 {
        let pts = self.samples.points();
        let (a, b) = if i + 1 < pts.len() { (pts[i], pts[i + 1]) } else { (pts[i - 1], pts[i]) };
        (b.y - a.y).atan2(b.x - a.x)
    }
}

/// One path per seed lane (in id order): a randomised depth-first walk over
/// successor edges that stops once the concatenated centerlines reach
/// `min_length`. When no walk from a seed reaches it, the longest walk found
/// is used.
pub fn build_reference_paths<R: Rng + ?Sized>(
    map: &SceneMap,
    min_length: f64,
    spacing: f64,
    rng: &mut R,
) -> Result<Vec<ReferencePath>, MapError> {
    let mut out = Vec::with_capacity(map.len());
    for seed in map.lanes() {
        let lanes = walk_from(map, &seed.id, min_length, rng);
        out.push(ReferencePath::from_lanes(map, &lanes, spacing)?);
    }
    Ok(out)
}

fn walk_from<R: Rng + ?Sized>(
    map: &SceneMap,
    seed: &LaneId,
    min_length: f64,
    rng: &mut R,
) -> Vec<LaneId> {
    let lane_len = |id: &LaneId| map.lane(id).map_or(0.0, |l| l.centerline.length());

    struct Frame {
        lane: LaneId,
        next: Vec<LaneId>,
    }
    let shuffled = |id: &LaneId, rng: &mut R| {
        let mut s = map.lane(id).map(|l| l.successors.clone()).unwrap_or_default();
        s.shuffle(rng);
        // popped from the back
        s.reverse();
        s
    };

    let mut stack = vec![Frame { lane: seed.clone(), next: shuffled(seed, rng) }];
    let mut on_path: HashSet<LaneId> = HashSet::from([seed.clone()]);
    let mut length = lane_len(seed);
    let mut best: (f64, Vec<LaneId>) = (length, vec![seed.clone()]);
    let mut visits = 1usize;

    while let Some(top) = stack.last_mut() {
        if length >= min_length {
            return stack.iter().map(|f| f.lane.clone()).collect();
        }
        match top.next.pop() {
            Some(next) if !on_path.contains(&next) && visits < DFS_BUDGET => {
                visits += 1;
                length += lane_len(&next);
                on_path.insert(next.clone());
                let children = shuffled(&next, rng);
                stack.push(Frame { lane: next, next: children });
                if length > best.0 {
                    best = (length, stack.iter().map(|f| f.lane.clone()).collect());
                }
            }
            Some(_) => {}
            None => {
                let done = stack.pop().expect("non-empty");
                on_path.remove(&done.lane);
                length -= lane_len(&done.lane);
            }
        }
    }
    best.1
}

/// Arc-length of the closest point on the path and the signed lateral offset
/// (positive to the left of the direction of travel).
pub fn project_to_path(pos: Point2, path: &ReferencePath) -> (f64, f64) {
    let pts = path.samples();
    let cum = path.cum_s();
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..pts.len() - 1 {
        let a = pts[i];
        let d = pts[i + 1] - a;
        let len2 = d.dot(&d);
        let u = if len2 <= MIN_VERTEX_SPACING * MIN_VERTEX_SPACING {
            0.0
        } else {
            ((pos - a).dot(&d) / len2).clamp(0.0, 1.0)
        };
        let foot = a.lerp(&pts[i + 1], u);
        let dist = pos.distance(&foot);
        if dist < best.0 {
            let side = d.cross(&(pos - a));
            let lateral = if side < 0.0 { -dist } else { dist };
            best = (dist, cum[i] + u * (cum[i + 1] - cum[i]), lateral);
        }
    }
    (best.1, best.2)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::map_model::{chain_map, fork_map, LaneSegment};

    fn straight_path(len: f64) -> ReferencePath {
        let line = Polyline::new(vec![Point2::new(0.0, 0.0), Point2::new(len, 0.0)]).unwrap();
        ReferencePath::from_polyline(&line, REFERENCE_SPACING).unwrap()
    }

    #[test]
    fn single_long_lane_gives_full_length_path() {
        let line = Polyline::new(vec![Point2::new(0.0, 0.0), Point2::new(200.0, 0.0)]).unwrap();
        let map = SceneMap::new("X", vec![LaneSegment::new("A", line)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let paths = build_reference_paths(&map, 100.0, REFERENCE_SPACING, &mut rng).unwrap();
        assert_eq!(paths.len(), 1);
        assert!((paths[0].length() - 200.0).abs() < 1e-9);
    }

    #[test]
    fn chain_walk_concatenates_until_long_enough() {
        // graph-walk oracle: only L1 → L2 → L3 reaches 100 m from L1
        let map = chain_map(3, 40.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let paths = build_reference_paths(&map, 100.0, REFERENCE_SPACING, &mut rng).unwrap();
        assert_eq!(paths.len(), 3);
        let ids: Vec<&str> = paths[0].lanes().iter().map(LaneId::as_str).collect();
        assert_eq!(ids, ["L1", "L2", "L3"]);
        assert!((paths[0].length() - 120.0).abs() < 1e-9);
        // exhausted graphs return the maximal walk
        assert!((paths[1].length() - 80.0).abs() < 1e-9);
        assert!((paths[2].length() - 40.0).abs() < 1e-9);
    }

    #[test]
    fn fork_choice_is_reproducible() {
        let map = fork_map(40.0);
        let pick = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            build_reference_paths(&map, 60.0, REFERENCE_SPACING, &mut rng).unwrap()[0]
                .lanes()
                .to_vec()
        };
        for seed in 0..8 {
            assert_eq!(pick(seed), pick(seed));
        }
        let seen: HashSet<Vec<LaneId>> = (0..32).map(pick).collect();
        assert_eq!(seen.len(), 2, "both branches are reachable");
    }

    #[test]
    fn empty_map_gives_no_paths() {
        let map = SceneMap::new("X", vec![]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(build_reference_paths(&map, 10.0, 1.0, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn path_invariants_hold() {
        let map = fork_map(40.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for path in build_reference_paths(&map, 60.0, REFERENCE_SPACING, &mut rng).unwrap() {
            assert_eq!(path.cum_s()[0], 0.0);
            let gaps: Vec<f64> = path.cum_s().windows(2).map(|w| w[1] - w[0]).collect();
            assert!(gaps.iter().all(|&g| g > 0.0));
            for g in &gaps[..gaps.len() - 1] {
                assert!((g - REFERENCE_SPACING).abs() < 1e-6);
            }
            assert!(path.kappa().iter().all(|k| k.is_finite()));
        }
    }

    #[test]
    fn projection_examples() {
        let path = straight_path(10.0);
        assert_eq!(project_to_path(path.samples()[2], &path), (path.cum_s()[2], 0.0));
        let (s, lat) = project_to_path(Point2::new(5.0, 2.0), &path);
        assert!((s - 5.0).abs() < 1e-12);
        assert!((lat - 2.0).abs() < 1e-12);
        let (_, lat) = project_to_path(Point2::new(5.0, -1.5), &path);
        assert!((lat + 1.5).abs() < 1e-12);
    }

    #[test]
    fn projection_matches_dense_oracle() {
        let map = fork_map(40.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let paths = build_reference_paths(&map, 60.0, REFERENCE_SPACING, &mut rng).unwrap();
        let path = paths.iter().find(|p| p.lanes().len() == 2 && p.lanes()[1].as_str() == "L3").unwrap_or(&paths[0]);
        // densified nearest-sample oracle
        let n = 10_000;
        let dense: Vec<(f64, Point2)> = (0..=n)
            .map(|i| {
                let s = path.length() * i as f64 / n as f64;
                (s, path.point_at(s).unwrap())
            })
            .collect();
        for _ in 0..200 {
            let pos = Point2::new(rng.gen_range(-10.0..80.0), rng.gen_range(-20.0..40.0));
            let (s, _) = project_to_path(pos, path);
            let oracle = dense
                .iter()
                .min_by(|a, b| a.1.distance(&pos).total_cmp(&b.1.distance(&pos)))
                .unwrap();
            let d_proj = path.point_at(s).unwrap().distance(&pos);
            assert!(d_proj <= oracle.1.distance(&pos) + 1e-9);
            // s is only pinned down when no distant part of the path is nearly as close
            let runner_up = dense
                .iter()
                .filter(|(si, _)| (si - oracle.0).abs() > 2.0 * REFERENCE_SPACING)
                .map(|(_, p)| p.distance(&pos))
                .fold(f64::INFINITY, f64::min);
            if runner_up - oracle.1.distance(&pos) > 1e-3 {
                assert!((oracle.0 - s).abs() <= REFERENCE_SPACING, "s={s} oracle={}", oracle.0);
            }
        }
    }

    #[test]
    fn point_at_is_exact_on_samples_and_rejects_overrun() {
        let path = straight_path(10.0);
        for (i, &s) in path.cum_s().iter().enumerate() {
            assert_eq!(path.point_at(s).unwrap(), path.samples()[i]);
        }
        assert!(path.point_at(10.5).is_err());
        assert!(path.point_at(-0.1).is_err());
    }
}
