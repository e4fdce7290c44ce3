//! Lateral warps that bend straight roads into one or two smooth turns.
//!
//! A scene point is expressed in an anchor frame (translated to the anchor,
//! rotated so the anchor heading is +x), displaced along y by
//! `f(x - b)`, and mapped back. `f` is zero for negative arguments, a
//! power-law ramp `q(x) = alpha1 * (x / s_t)^alpha2` over the turn length,
//! and the tangent line of that ramp beyond it, so the warp is C¹.
//! The double turn subtracts a copy shifted by `beta`, which bends the road
//! back to its original heading with a constant lateral offset.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::map_model::{MapError, Point2, ReferencePath, SceneMap};

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("s_x = {s_x} outside the turn domain [0, {s_t}]")]
    Domain { s_x: f64, s_t: f64 },
    #[error("double-turn evaluation requested for a {0:?} transform")]
    KindMismatch(TurnKind),
    #[error("invalid transform parameter: {0}")]
    InvalidParams(String),
    #[error("cannot anchor a transform on an empty path window")]
    NoAnchor,
    #[error(transparent)]
    Map(#[from] MapError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TurnKind {
    SingleTurn,
    DoubleTurn,
}

impl TurnKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TurnKind::SingleTurn => "SingleTurn",
            TurnKind::DoubleTurn => "DoubleTurn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "SingleTurn" | "single" => Some(TurnKind::SingleTurn),
            "DoubleTurn" | "double" => Some(TurnKind::DoubleTurn),
            _ => None,
        }
    }
}

/// Anchor pose of the warp frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub origin: Point2,
    pub heading: f64,
}

impl Frame {
    pub const IDENTITY: Frame = Frame { origin: Point2::new(0.0, 0.0), heading: 0.0 };

    pub fn to_local(&self, p: Point2) -> Point2 {
        (p - self.origin).rotated(-self.heading)
    }

    pub fn to_global(&self, p: Point2) -> Point2 {
        p.rotated(self.heading) + self.origin
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurnTransformParams {
    pub kind: TurnKind,
    /// Warp onset along the frame x-axis, meters.
    pub b: f64,
    /// Turn magnitude (lateral offset reached at the end of the ramp).
    pub alpha1: f64,
    /// Ramp exponent, controls sharpness.
    pub alpha2: f64,
    /// Turn length, meters.
    pub s_t: f64,
    /// Distance between the two turns of a double turn, meters.
    pub beta: f64,
    pub frame: Frame,
}

impl TurnTransformParams {
    pub fn validate(&self) -> Result<(), AugmentError> {
        let bad = |m: &str| Err(AugmentError::InvalidParams(m.to_owned()));
        if !(1.0..=10.0).contains(&self.alpha1) {
            return bad("alpha1 must lie in [1, 10]");
        }
        if !(self.alpha2 > 1.0 && self.alpha2.is_finite()) {
            return bad("alpha2 must be > 1");
        }
        if !(self.s_t > 0.0 && self.s_t.is_finite()) {
            return bad("s_t must be > 0");
        }
        if self.kind == TurnKind::DoubleTurn && !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be > 0 for a double turn");
        }
        if !self.b.is_finite() || !self.frame.heading.is_finite() || !self.frame.origin.is_finite() {
            return bad("b and frame must be finite");
        }
        Ok(())
    }

    /// Slope of the single-turn ramp at its end, `alpha1 * alpha2 / s_t`.
    pub fn exit_slope(&self) -> f64 {
        self.alpha1 * self.alpha2 / self.s_t
    }

    /// Lateral displacement for frame-local abscissa `x` (onset `b` applied).
    pub fn offset(&self, x: f64) -> f64 {
        let u = x - self.b;
        match self.kind {
            TurnKind::SingleTurn => f_single_turn(u, self),
            TurnKind::DoubleTurn => f_single_turn(u, self) - f_single_turn(u - self.beta, self),
        }
    }
}

/// Power-law ramp on `[0, s_t]`.
pub fn q_alpha(s_x: f64, alpha1: f64, alpha2: f64, s_t: f64) -> Result<f64, AugmentError> {
    if !(0.0..=s_t).contains(&s_x) {
        return Err(AugmentError::Domain { s_x, s_t });
    }
    Ok(ramp(s_x, alpha1, alpha2, s_t))
}

// alpha1 * (x / s_t)^alpha2 equals alpha1 / s_t^alpha2 * x^alpha2 but stays
// exact at x = s_t and avoids overflow for large exponents.
fn ramp(s_x: f64, alpha1: f64, alpha2: f64, s_t: f64) -> f64 {
    alpha1 * (s_x / s_t).powf(alpha2)
}

pub fn f_single_turn(s_x: f64, p: &TurnTransformParams) -> f64 {
    if s_x < 0.0 {
        0.0
    } else if s_x <= p.s_t {
        ramp(s_x, p.alpha1, p.alpha2, p.s_t)
    } else {
        (s_x - p.s_t) * p.exit_slope() + p.alpha1
    }
}

pub fn f_double_turn(s_x: f64, p: &TurnTransformParams) -> Result<f64, AugmentError> {
    if p.kind != TurnKind::DoubleTurn {
        return Err(AugmentError::KindMismatch(p.kind));
    }
    Ok(f_single_turn(s_x, p) - f_single_turn(s_x - p.beta, p))
}

/// Warps every lane point of `map`. Points with zero displacement are
/// returned bit-identical; ids, connectivity and point counts are unchanged.
pub fn apply_transform(map: &SceneMap, p: &TurnTransformParams) -> Result<SceneMap, AugmentError> {
    p.validate()?;
    let warped = map.map_points(|pt| {
        let local = p.frame.to_local(pt);
        let dy = p.offset(local.x);
        if dy == 0.0 {
            pt
        } else {
            p.frame.to_global(Point2::new(local.x, local.y + dy))
        }
    })?;
    Ok(warped)
}

/// Ranges the transform parameters are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub alpha1_min: f64,
    pub alpha1_max: f64,
    pub alpha2: f64,
    pub s_t: f64,
    pub beta: f64,
    pub b: f64,
    /// Caps the exit slope `alpha1 * alpha2 / s_t` by shrinking the alpha1
    /// range; `None` leaves it uncapped.
    pub max_slope: Option<f64>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { alpha1_min: 1.0, alpha1_max: 10.0, alpha2: 20.0, s_t: 10.0, beta: 20.0, b: 10.0, max_slope: None }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(1.0 <= self.alpha1_min && self.alpha1_min <= self.alpha1_max && self.alpha1_max <= 10.0) {
            return Err("augment.alpha1_min/alpha1_max must satisfy 1 <= min <= max <= 10".into());
        }
        if !(self.alpha2 > 1.0) {
            return Err("augment.alpha2 must be > 1".into());
        }
        if !(self.s_t > 0.0) {
            return Err("augment.s_t must be > 0".into());
        }
        if !(self.beta > 0.0) {
            return Err("augment.beta must be > 0".into());
        }
        if !self.b.is_finite() {
            return Err("augment.b must be finite".into());
        }
        if let Some(m) = self.max_slope {
            if !(m > 0.0) {
                return Err("augment.max_slope must be > 0".into());
            }
        }
        Ok(())
    }

    fn alpha1_range(&self) -> (f64, f64) {
        let hi = match self.max_slope {
            Some(m) => (m * self.s_t / self.alpha2).clamp(self.alpha1_min, self.alpha1_max),
            None => self.alpha1_max,
        };
        (self.alpha1_min, hi)
    }
}

/// Draws a transform: kind uniform, alpha1 uniform in its range, the other
/// shape parameters fixed, and the frame anchored at a uniformly chosen
/// sample of `path` among indices `window` (heading = local tangent).
pub fn sample_transform_params<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &AugmentConfig,
    path: &ReferencePath,
    window: std::ops::Range<usize>,
) -> Result<TurnTransformParams, AugmentError> {
    let n = path.samples().len();
    let window = window.start.min(n)..window.end.min(n);
    if window.is_empty() {
        return Err(AugmentError::NoAnchor);
    }
    let kind = if rng.gen_bool(0.5) { TurnKind::SingleTurn } else { TurnKind::DoubleTurn };
    let (lo, hi) = cfg.alpha1_range();
    let alpha1 = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    let idx = rng.gen_range(window);
    let frame = Frame { origin: path.samples()[idx], heading: path.heading_at_index(idx) };
    Ok(TurnTransformParams { kind, b: cfg.b, alpha1, alpha2: cfg.alpha2, s_t: cfg.s_t, beta: cfg.beta, frame })
}
