//! Planar points, polylines, arc-length resampling and discrete curvature.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use super::MapError;

/// Minimum distance between consecutive polyline vertices.
pub const MIN_VERTEX_SPACING: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (*self - *other).norm()
    }

    pub fn dot(&self, other: &Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 2D cross product.
    pub fn cross(&self, other: &Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    /// Rotates counter-clockwise by `angle` radians about the origin.
    pub fn rotated(&self, angle: f64) -> Point2 {
        let (sin, cos) = angle.sin_cos();
        Point2::new(cos * self.x - sin * self.y, sin * self.x + cos * self.y)
    }

    pub fn lerp(&self, other: &Point2, u: f64) -> Point2 {
        Point2::new(self.x + u * (other.x - self.x), self.y + u * (other.y - self.y))
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

/// An ordered list of at least two finite, pairwise-distinct consecutive points.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Point2>,
}

impl Polyline {
    pub fn new(points: Vec<Point2>) -> Result<Self, MapError> {
        if points.len() < 2 {
            return Err(MapError::TooFewPoints { needed: 2, got: points.len() });
        }
        if let Some(idx) = points.iter().position(|p| !p.is_finite()) {
            return Err(MapError::NonFinite { index: idx });
        }
        for (i, w) in points.windows(2).enumerate() {
            if w[0].distance(&w[1]) <= MIN_VERTEX_SPACING {
                return Err(MapError::CoincidentPoints { index: i + 1 });
            }
        }
        Ok(Self { points })
    }

    /// Builds a polyline after dropping consecutive near-duplicates.
    pub fn from_points_dedup(points: Vec<Point2>) -> Result<Self, MapError> {
        let mut out: Vec<Point2> = Vec::with_capacity(points.len());
        for p in points {
            match out.last() {
                Some(last) if last.distance(&p) <= MIN_VERTEX_SPACING => {}
                _ => out.push(p),
            }
        }
        Self::new(out)
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> Point2 {
        self.points[0]
    }

    pub fn last(&self) -> Point2 {
        self.points[self.points.len() - 1]
    }

    pub fn into_points(self) -> Vec<Point2> {
        self.points
    }

    /// Cumulative chord length at each vertex, starting at 0.
    pub fn cumulative_length(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.points.len());
        out.push(0.0);
        for w in self.points.windows(2) {
            acc += w[0].distance(&w[1]);
            out.push(acc);
        }
        out
    }

    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(&w[1])).sum()
    }
}

/// Resamples `line` so consecutive output points are exactly `spacing` apart
/// (Euclidean), walking forward along the input. The last gap may be shorter.
///
/// Every output point lies on the input polyline and both endpoints are kept.
/// A polyline that never reaches `spacing` from its start collapses to its two
/// endpoints.
pub fn resample_polyline(line: &Polyline, spacing: f64) -> Result<Polyline, MapError> {
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(MapError::InvalidSpacing(spacing));
    }
    let pts = line.points();
    let start = pts[0];
    let end = pts[pts.len() - 1];
    // snap threshold for a final sample that lands on the endpoint
    let snap = 1e-6 * spacing;

    let mut out = vec![start];
    let mut current = start;
    let mut seg = 0usize;
    let mut u0 = 0.0f64;
    loop {
        match next_on_sphere(pts, current, spacing, seg, u0) {
            Some((s, u, p)) => {
                if p.distance(&end) <= snap && s == pts.len() - 2 {
                    break;
                }
                out.push(p);
                current = p;
                seg = s;
                u0 = u;
            }
            None => break,
        }
    }
    match out.last() {
        Some(last) if last.distance(&end) <= snap && out.len() > 1 => {
            let n = out.len();
            out[n - 1] = end;
        }
        _ => out.push(end),
    }
    Polyline::from_points_dedup(out)
}

/// Finds the first point after parameter (seg, u0) whose distance from
/// `center` equals `radius`, crossing from inside the circle.
fn next_on_sphere(
    pts: &[Point2],
    center: Point2,
    radius: f64,
    seg: usize,
    u0: f64,
) -> Option<(usize, f64, Point2)> {
    let r2 = radius * radius;
    for s in seg..pts.len() - 1 {
        let a = pts[s];
        let b = pts[s + 1];
        let lo = if s == seg { u0 } else { 0.0 };
        let f = a - center;
        if s > seg && f.dot(&f) >= r2 {
            // crossing landed on the shared vertex
            return Some((s, 0.0, a));
        }
        let d = b - a;
        let qa = d.dot(&d);
        let qb = 2.0 * f.dot(&d);
        let qc = f.dot(&f) - r2;
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            continue;
        }
        // the start of the segment is inside the disk, so the larger root is the exit
        let u = (-qb + disc.sqrt()) / (2.0 * qa);
        if u >= lo && u <= 1.0 {
            let p = if u == 1.0 { b } else { a.lerp(&b, u) };
            return Some((s, u, p));
        }
    }
    None
}

/// Signed Menger curvature of the triangle (a, b, c); left turns are positive.
pub fn menger_curvature(a: Point2, b: Point2, c: Point2) -> f64 {
    let ab = a.distance(&b);
    let bc = b.distance(&c);
    let ca = c.distance(&a);
    let denom = ab * bc * ca;
    if denom == 0.0 {
        return 0.0;
    }
    let cross = (b - a).cross(&(c - a));
    2.0 * cross / denom
}

/// Curvature per vertex: Menger curvature at interior vertices, endpoints copy
/// their neighbour.
pub fn curvature_profile(line: &Polyline) -> Result<Vec<f64>, MapError> {
    let pts = line.points();
    if pts.len() < 3 {
        return Err(MapError::TooFewPoints { needed: 3, got: pts.len() });
    }
    let mut kappa = vec![0.0; pts.len()];
    for i in 1..pts.len() - 1 {
        kappa[i] = menger_curvature(pts[i - 1], pts[i], pts[i + 1]);
    }
    let n = pts.len();
    kappa[0] = kappa[1];
    kappa[n - 1] = kappa[n - 2];
    Ok(kappa)
}
