//! Uniform-cost A* over `(s, v, t)` nodes along a reference path.
//!
//! Each transition applies one constant acceleration for `dt` seconds and
//! costs `w1 a² + w2 κ(s') v'² + w3 (v' − v_d)²`. The search ends when the
//! first node with `t > t_g` is popped. All costs are nonnegative (with the
//! default `abs_curvature`), so the zero heuristic is admissible and the
//! popped plan is optimal over the explored state space.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::map_model::{MapError, Point2, ReferencePath};

/// Acceleration bounds of the action set, m/s².
pub const ACCEL_MIN: f64 = -2.0;
pub const ACCEL_MAX: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("invalid planner parameters: {0}")]
    InvalidParams(String),
    #[error("invalid initial node: {0}")]
    InvalidInit(String),
    #[error("no feasible plan reaches t > {t_g} s")]
    Infeasible { t_g: f64 },
    #[error("plan runs past the end of the reference path ({length:.2} m)")]
    PathOverrun { length: f64 },
    #[error(transparent)]
    Map(#[from] MapError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerNode {
    pub s: f64,
    pub v: f64,
    pub t: f64,
}

impl PlannerNode {
    pub fn new(s: f64, v: f64, t: f64) -> Self {
        Self { s, v, t }
    }
}

/// Duplicate detection for the closed set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ClosedSet {
    /// Nodes of the same step sharing an `(s, v)` bin are merged.
    Binned { ds: f64, dv: f64 },
    /// Only bit-identical `(s, v)` at the same step are merged; exact but
    /// exponential in the horizon.
    Exact,
}

impl Default for ClosedSet {
    fn default() -> Self {
        ClosedSet::Binned { ds: 0.5, dv: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerParams {
    pub action_set: Vec<f64>,
    pub dt: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub v_d: f64,
    pub t_g: f64,
    /// Use |κ| in the curvature term.
    pub abs_curvature: bool,
    pub closed_set: ClosedSet,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            action_set: vec![-2.0, -1.0, -0.5, 0.0, 0.5, 1.0],
            dt: 0.5,
            w1: 5.0,
            w2: 5.0,
            w3: 1.0,
            v_d: 10.0,
            t_g: 5.0,
            abs_curvature: true,
            closed_set: ClosedSet::default(),
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |m: &str| Err(PlanError::InvalidParams(m.to_owned()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be > 0");
        }
        if !(self.t_g > 0.0 && self.t_g.is_finite()) {
            return bad("t_g must be > 0");
        }
        if self.action_set.is_empty() {
            return bad("action_set must be nonempty");
        }
        if self.action_set.iter().any(|a| !(ACCEL_MIN..=ACCEL_MAX).contains(a)) {
            return bad("actions must lie in [-2, 1] m/s²");
        }
        if [self.w1, self.w2, self.w3].iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return bad("weights must be finite and >= 0");
        }
        if !(self.v_d >= 0.0 && self.v_d.is_finite()) {
            return bad("v_d must be finite and >= 0");
        }
        if let ClosedSet::Binned { ds, dv } = self.closed_set {
            if !(ds > 0.0 && dv > 0.0) {
                return bad("closed-set bins must be > 0");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarsePlan {
    pub nodes: Vec<PlannerNode>,
    pub actions: Vec<f64>,
    pub total_cost: f64,
}

impl CoarsePlan {
    pub fn start(&self) -> PlannerNode {
        self.nodes[0]
    }

    pub fn end(&self) -> PlannerNode {
        self.nodes[self.nodes.len() - 1]
    }

    /// Arc-length of the constant-acceleration motion at time `t`, clamped to
    /// the plan's time span.
    pub fn s_at(&self, t: f64) -> f64 {
        if self.actions.is_empty() || t <= self.nodes[0].t {
            return self.nodes[0].s;
        }
        let i = self.nodes.partition_point(|n| n.t <= t).saturating_sub(1).min(self.actions.len() - 1);
        let n = self.nodes[i];
        let tau = (t - n.t).min(self.nodes[i + 1].t - n.t);
        n.s + n.v * tau + 0.5 * self.actions[i] * tau * tau
    }
}

/// One transition with constant acceleration `a` over `dt`.
pub fn expand(n: PlannerNode, a: f64, dt: f64) -> PlannerNode {
    PlannerNode { s: n.s + n.v * dt + 0.5 * a * dt * dt, v: n.v + a * dt, t: n.t + dt }
}

pub fn transition_cost(
    next: PlannerNode,
    a: f64,
    path: &ReferencePath,
    p: &PlannerParams,
) -> Result<f64, PlanError> {
    let kappa = path.kappa_at(next.s).map_err(|e| match e {
        MapError::OutsidePath { length, .. } => PlanError::PathOverrun { length },
        other => PlanError::Map(other),
    })?;
    let kappa = if p.abs_curvature { kappa.abs() } else { kappa };
    let dv = next.v - p.v_d;
    Ok(p.w1 * a * a + p.w2 * kappa * next.v * next.v + p.w3 * dv * dv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum StateKey {
    Binned(usize, i64, i64),
    Exact(usize, u64, u64),
}

fn state_key(closed: ClosedSet, step: usize, n: &PlannerNode) -> StateKey {
    match closed {
        ClosedSet::Binned { ds, dv } => {
            StateKey::Binned(step, (n.s / ds).floor() as i64, (n.v / dv).floor() as i64)
        }
        ClosedSet::Exact => StateKey::Exact(step, n.s.to_bits(), n.v.to_bits()),
    }
}

struct Arena {
    node: PlannerNode,
    parent: usize,
    action: f64,
    step: usize,
}

struct Open {
    cost: f64,
    v: f64,
    s: f64,
    seq: u64,
    idx: usize,
}

impl Open {
    fn order(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then(self.v.total_cmp(&other.v))
            .then(self.s.total_cmp(&other.s))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.order(other) == Ordering::Equal
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Open {
    // BinaryHeap is a max-heap; reverse for lowest-first
    fn cmp(&self, other: &Self) -> Ordering {
        other.order(self)
    }
}

/// Minimum-cost action sequence from `init` to the first node past `t_g`.
///
/// Ties between equal-cost open nodes are broken by lower `v`, then lower
/// `s`, then insertion order, so results are deterministic.
pub fn astar_plan(
    path: &ReferencePath,
    init: PlannerNode,
    p: &PlannerParams,
) -> Result<CoarsePlan, PlanError> {
    p.validate()?;
    if !(init.v >= 0.0 && init.v.is_finite()) {
        return Err(PlanError::InvalidInit(format!("v = {} must be >= 0", init.v)));
    }
    if !(init.t >= 0.0 && init.t.is_finite()) {
        return Err(PlanError::InvalidInit(format!("t = {} must be >= 0", init.t)));
    }
    if !(0.0..=path.length()).contains(&init.s) {
        return Err(PlanError::InvalidInit(format!(
            "s = {} outside path [0, {}]",
            init.s,
            path.length()
        )));
    }

    let length = path.length();
    let mut arena = vec![Arena { node: init, parent: usize::MAX, action: 0.0, step: 0 }];
    let mut open = BinaryHeap::new();
    let mut closed: HashSet<StateKey> = HashSet::new();
    let mut seq = 0u64;
    let mut overran = false;
    open.push(Open { cost: 0.0, v: init.v, s: init.s, seq, idx: 0 });

    while let Some(entry) = open.pop() {
        let (node, step) = (arena[entry.idx].node, arena[entry.idx].step);
        if !closed.insert(state_key(p.closed_set, step, &node)) {
            continue;
        }
        if node.t > p.t_g {
            return Ok(reconstruct(&arena, entry.idx, path, p));
        }
        for &a in &p.action_set {
            let next = expand(node, a, p.dt);
            if next.v < 0.0 {
                continue;
            }
            if next.s > length {
                overran = true;
                continue;
            }
            let cost = entry.cost + transition_cost(next, a, path, p)?;
            arena.push(Arena { node: next, parent: entry.idx, action: a, step: step + 1 });
            seq += 1;
            open.push(Open { cost, v: next.v, s: next.s, seq, idx: arena.len() - 1 });
        }
    }
    if overran {
        Err(PlanError::PathOverrun { length })
    } else {
        Err(PlanError::Infeasible { t_g: p.t_g })
    }
}

fn reconstruct(arena: &[Arena], mut idx: usize, path: &ReferencePath, p: &PlannerParams) -> CoarsePlan {
    let mut nodes = Vec::new();
    let mut actions = Vec::new();
    loop {
        let a = &arena[idx];
        nodes.push(a.node);
        if a.parent == usize::MAX {
            break;
        }
        actions.push(a.action);
        idx = a.parent;
    }
    nodes.reverse();
    actions.reverse();
    let total_cost = nodes[1..]
        .iter()
        .zip(&actions)
        .map(|(n, &a)| transition_cost(*n, a, path, p).expect("costed during search"))
        .sum();
    CoarsePlan { nodes, actions, total_cost }
}

/// Maps each plan node to its global position on `path`.
pub fn plan_to_global(plan: &CoarsePlan, path: &ReferencePath) -> Result<Vec<(f64, Point2)>, PlanError> {
    plan.nodes
        .iter()
        .map(|n| {
            path.point_at(n.s).map(|pt| (n.t, pt)).map_err(|e| match e {
                MapError::OutsidePath { length, .. } => PlanError::PathOverrun { length },
                other => PlanError::Map(other),
            })
        })
        .collect()
}
