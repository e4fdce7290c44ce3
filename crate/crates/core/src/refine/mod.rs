//! Jerk-penalized smoothing of a coarse plan.
//!
//! The refined arc-length samples `x_0..x_N` on a grid of step `h` minimize
//!
//! ```text
//! ω1 Σ a_i² + ω2 Σ j_i² + ω3 Σ_tracked (x_i − s_c(T_i))²
//! a_i = (x_{i+1} − 2x_i + x_{i−1}) / h²            i = 1..N−1
//! j_i = (x_{i+2} − 3x_{i+1} + 3x_i − x_{i−1}) / h³  i = 1..N−2
//! ```
//!
//! subject to `x_0 = s0` and `(x_1 − x_0) / h = v0`. The stationarity
//! conditions form a symmetric indefinite KKT system; ordering the two
//! multipliers ahead of `x` keeps it banded with three diagonals on each
//! side, and it is solved by banded LU.

mod banded;

pub use banded::{BandedLu, BandedMatrix, SingularPivot};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::CoarsePlan;

#[derive(Debug, Error, PartialEq)]
pub enum RefineError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("invalid refinement parameters: {0}")]
    InvalidParams(String),
    #[error("coarse plan is empty")]
    EmptyPlan,
    #[error(
        "refinement system is singular at pivot {index} (|pivot| = {value:e}); \
         add tracking or acceleration/jerk weight, or set a regularization"
    )]
    Singular { index: usize, value: f64 },
}

/// Which fine samples carry the tracking penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tracking {
    /// Every `k`-th sample, i.e. the coarse plan's own knots.
    CoarseKnots,
    /// Every fine sample after the first.
    AllKnots,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefinementParams {
    pub omega1: f64,
    pub omega2: f64,
    pub omega3: f64,
    pub dt_fine: f64,
    pub k: usize,
    pub tracking: Tracking,
    /// Diagonal shift added to the objective Hessian when the plain system is
    /// singular. `None` reports the singularity instead.
    pub regularization: Option<f64>,
}

impl Default for RefinementParams {
    fn default() -> Self {
        Self {
            omega1: 1.0,
            omega2: 1.0,
            omega3: 10.0,
            dt_fine: 0.1,
            k: 5,
            tracking: Tracking::CoarseKnots,
            regularization: None,
        }
    }
}

impl RefinementParams {
    /// Checks weights and that `k * dt_fine` equals the coarse step `dt`.
    pub fn validate(&self, coarse_dt: f64) -> Result<(), RefineError> {
        let bad = |m: String| Err(RefineError::InvalidParams(m));
        if [self.omega1, self.omega2, self.omega3].iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return bad("weights must be finite and >= 0".into());
        }
        if !(self.omega3 > 0.0) {
            return bad("omega3 must be > 0".into());
        }
        if !(self.dt_fine > 0.0 && self.dt_fine.is_finite()) || self.k == 0 {
            return bad("dt_fine must be > 0 and k >= 1".into());
        }
        if (self.k as f64 * self.dt_fine - coarse_dt).abs() > 1e-12 {
            return bad(format!(
                "k * dt_fine = {} does not match the coarse step {coarse_dt}",
                self.k as f64 * self.dt_fine
            ));
        }
        if let Some(eps) = self.regularization {
            if !(eps > 0.0 && eps.is_finite()) {
                return bad("regularization must be > 0".into());
            }
        }
        Ok(())
    }
}

/// Central second difference; `s.len() - 2` values.
pub fn accel_of(s: &[f64], dt: f64) -> Result<Vec<f64>, RefineError> {
    if s.len() < 3 {
        return Err(RefineError::TooFewSamples { needed: 3, got: s.len() });
    }
    let h2 = dt * dt;
    Ok(s.windows(3).map(|w| (w[2] - 2.0 * w[1] + w[0]) / h2).collect())
}

/// Third difference `(s_{i+2} − 3s_{i+1} + 3s_i − s_{i−1}) / h³`; `s.len() - 3` values.
pub fn jerk_of(s: &[f64], dt: f64) -> Result<Vec<f64>, RefineError> {
    if s.len() < 4 {
        return Err(RefineError::TooFewSamples { needed: 4, got: s.len() });
    }
    let h3 = dt * dt * dt;
    Ok(s.windows(4).map(|w| (w[3] - 3.0 * w[2] + 3.0 * w[1] - w[0]) / h3).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinedTrajectory {
    pub timestamps: Vec<f64>,
    pub s_values: Vec<f64>,
    pub accel: Vec<f64>,
    pub jerk: Vec<f64>,
    /// The solve needed the regularization fallback.
    pub regularized: bool,
}

impl RefinedTrajectory {
    /// Forward-difference velocity at sample `i`.
    pub fn velocity(&self, i: usize, dt: f64) -> f64 {
        (self.s_values[i + 1] - self.s_values[i]) / dt
    }
}

/// The quadratic program for one plan, exposed for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementProblem {
    pub h: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub omega3: f64,
    /// Coarse-plan arc-length at every fine sample.
    pub reference: Vec<f64>,
    /// Whether sample `i` carries the tracking penalty.
    pub tracked: Vec<bool>,
    pub s0: f64,
    pub v0: f64,
    pub t0: f64,
}

/// Solution of the KKT system.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineSolution {
    pub x: Vec<f64>,
    /// Multipliers of the position and velocity constraints.
    pub lambda: [f64; 2],
    pub regularized: bool,
}

impl RefinementProblem {
    pub fn from_plan(coarse: &CoarsePlan, p: &RefinementParams, v0: f64, s0: f64) -> Result<Self, RefineError> {
        if coarse.nodes.len() < 2 {
            return Err(RefineError::EmptyPlan);
        }
        let coarse_dt = coarse.nodes[1].t - coarse.nodes[0].t;
        p.validate(coarse_dt)?;
        let n = coarse.actions.len() * p.k;
        let t0 = coarse.start().t;
        let reference: Vec<f64> = (0..=n)
            .map(|i| {
                if i % p.k == 0 {
                    coarse.nodes[i / p.k].s
                } else {
                    coarse.s_at(t0 + i as f64 * p.dt_fine)
                }
            })
            .collect();
        let tracked = (0..=n)
            .map(|i| {
                i > 0
                    && match p.tracking {
                        Tracking::CoarseKnots => i % p.k == 0,
                        Tracking::AllKnots => true,
                    }
            })
            .collect();
        Ok(Self { h: p.dt_fine, omega1: p.omega1, omega2: p.omega2, omega3: p.omega3, reference, tracked, s0, v0, t0 })
    }

    pub fn len(&self) -> usize {
        self.reference.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reference.is_empty()
    }

    fn accel_terms(&self, x: &[f64]) -> impl Iterator<Item = (usize, f64)> + '_ {
        let h2 = self.h * self.h;
        let n = x.len();
        let x = x.to_vec();
        (1..n.saturating_sub(1)).map(move |i| (i, (x[i + 1] - 2.0 * x[i] + x[i - 1]) / h2))
    }

    fn jerk_terms(&self, x: &[f64]) -> impl Iterator<Item = (usize, f64)> + '_ {
        let h3 = self.h * self.h * self.h;
        let n = x.len();
        let x = x.to_vec();
        (1..n.saturating_sub(2))
            .map(move |i| (i, (x[i + 2] - 3.0 * x[i + 1] + 3.0 * x[i] - x[i - 1]) / h3))
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let acc: f64 = self.accel_terms(x).map(|(_, a)| a * a).sum();
        let jerk: f64 = self.jerk_terms(x).map(|(_, j)| j * j).sum();
        let track: f64 = (0..x.len())
            .filter(|&i| self.tracked[i])
            .map(|i| (x[i] - self.reference[i]).powi(2))
            .sum();
        self.omega1 * acc + self.omega2 * jerk + self.omega3 * track
    }

    /// Analytic gradient of [`objective`](Self::objective), assembled by
    /// scattering each stencil's residual.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        let h2 = self.h * self.h;
        let h3 = h2 * self.h;
        for (i, a) in self.accel_terms(x) {
            let c = 2.0 * self.omega1 * a / h2;
            g[i - 1] += c;
            g[i] -= 2.0 * c;
            g[i + 1] += c;
        }
        for (i, j) in self.jerk_terms(x) {
            let c = 2.0 * self.omega2 * j / h3;
            g[i - 1] -= c;
            g[i] += 3.0 * c;
            g[i + 1] -= 3.0 * c;
            g[i + 2] += c;
        }
        for i in 0..x.len() {
            if self.tracked[i] {
                g[i] += 2.0 * self.omega3 * (x[i] - self.reference[i]);
            }
        }
        g
    }

    /// Constraint residuals `(x_0 − s0, (x_1 − x_0)/h − v0)`.
    pub fn constraint_residual(&self, x: &[f64]) -> [f64; 2] {
        [x[0] - self.s0, (x[1] - x[0]) / self.h - self.v0]
    }

    /// Hessian of the objective in band form (three diagonals each side).
    pub fn hessian(&self, shift: f64) -> BandedMatrix {
        let n = self.len();
        let mut hm = BandedMatrix::zeros(n, 3, 3);
        self.scatter_hessian(&mut hm, 0, shift);
        hm
    }

    fn scatter_hessian(&self, m: &mut BandedMatrix, off: usize, shift: f64) {
        let n = self.len();
        let h2 = self.h * self.h;
        let h3 = h2 * self.h;
        let mut stencil = |coef: &[f64], first: usize, weight: f64, scale: f64| {
            let w = 2.0 * weight / (scale * scale);
            for (a, ca) in coef.iter().enumerate() {
                for (b, cb) in coef.iter().enumerate() {
                    m.add(off + first + a, off + first + b, w * ca * cb);
                }
            }
        };
        if self.omega1 > 0.0 {
            for i in 1..n.saturating_sub(1) {
                stencil(&[1.0, -2.0, 1.0], i - 1, self.omega1, h2);
            }
        }
        if self.omega2 > 0.0 {
            for i in 1..n.saturating_sub(2) {
                stencil(&[-1.0, 3.0, -3.0, 1.0], i - 1, self.omega2, h3);
            }
        }
        for i in 0..n {
            let mut d = shift;
            if self.tracked[i] {
                d += 2.0 * self.omega3;
            }
            if d != 0.0 {
                m.add(off + i, off + i, d);
            }
        }
    }

    /// KKT matrix over `[λ_pos, λ_vel, x_0, …, x_N]` and its right-hand side.
    pub fn kkt_system(&self, shift: f64) -> (BandedMatrix, Vec<f64>) {
        let n = self.len();
        let mut m = BandedMatrix::zeros(n + 2, 3, 3);
        self.scatter_hessian(&mut m, 2, shift);
        let inv_h = 1.0 / self.h;
        // A = [[1, 0, ...], [-1/h, 1/h, 0, ...]] and its transpose
        m.add(0, 2, 1.0);
        m.add(2, 0, 1.0);
        m.add(1, 2, -inv_h);
        m.add(1, 3, inv_h);
        m.add(2, 1, -inv_h);
        m.add(3, 1, inv_h);
        let mut rhs = vec![0.0; n + 2];
        rhs[0] = self.s0;
        rhs[1] = self.v0;
        for i in 0..n {
            if self.tracked[i] {
                rhs[i + 2] = 2.0 * self.omega3 * self.reference[i];
            }
        }
        (m, rhs)
    }

    pub fn solve(&self, regularization: Option<f64>) -> Result<RefineSolution, RefineError> {
        if self.len() < 4 {
            return Err(RefineError::TooFewSamples { needed: 4, got: self.len() });
        }
        // solve for the offset from the reference to keep the right-hand side small
        let g = self.gradient(&self.reference);
        let [c0, c1] = self.constraint_residual(&self.reference);
        let mut rhs = vec![-c0, -c1];
        rhs.extend(g.iter().map(|v| -v));
        let attempt = |shift: f64| {
            let (m, _) = self.kkt_system(shift);
            let lu = m.clone().factorize(1e-13)?;
            // one step of iterative refinement
            let mut z = lu.solve(&rhs);
            let r: Vec<f64> = m.mul_vec(&z).iter().zip(&rhs).map(|(mz, b)| b - mz).collect();
            for (zi, dz) in z.iter_mut().zip(lu.solve(&r)) {
                *zi += dz;
            }
            Ok::<_, SingularPivot>(z)
        };
        let (z, regularized) = match attempt(0.0) {
            Ok(z) => (z, false),
            Err(pivot) => match regularization {
                Some(eps) => {
                    let z = attempt(eps).map_err(|p| RefineError::Singular { index: p.index, value: p.value })?;
                    (z, true)
                }
                None => return Err(RefineError::Singular { index: pivot.index, value: pivot.value }),
            },
        };
        let x = z[2..].iter().zip(&self.reference).map(|(d, r)| r + d).collect();
        Ok(RefineSolution { lambda: [z[0], z[1]], x, regularized })
    }

    /// Relative ∞-norm of `∇f(x) + Aᵀλ`.
    pub fn stationarity_residual(&self, sol: &RefineSolution) -> f64 {
        let mut r = self.gradient(&sol.x);
        let inv_h = 1.0 / self.h;
        r[0] += sol.lambda[0] - inv_h * sol.lambda[1];
        r[1] += inv_h * sol.lambda[1];
        let hm = self.hessian(0.0);
        let xmax = sol.x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let lmax = sol.lambda[0].abs().max(inv_h * sol.lambda[1].abs());
        let rhs_max = self
            .reference
            .iter()
            .zip(&self.tracked)
            .filter(|(_, &t)| t)
            .fold(0.0f64, |m, (r, _)| m.max(2.0 * self.omega3 * r.abs()));
        let scale = (hm.max_abs() * xmax + lmax + rhs_max).max(1.0);
        r.iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale
    }
}

/// Smooths `coarse` into a fine trajectory that starts exactly at `(s0, v0)`.
pub fn refine_trajectory(
    coarse: &CoarsePlan,
    p: &RefinementParams,
    v0: f64,
    s0: f64,
) -> Result<RefinedTrajectory, RefineError> {
    let problem = RefinementProblem::from_plan(coarse, p, v0, s0)?;
    let sol = problem.solve(p.regularization)?;
    let accel = accel_of(&sol.x, p.dt_fine)?;
    let jerk = jerk_of(&sol.x, p.dt_fine)?;
    let timestamps = (0..sol.x.len()).map(|i| problem.t0 + i as f64 * p.dt_fine).collect();
    Ok(RefinedTrajectory { timestamps, s_values: sol.x, accel, jerk, regularized: sol.regularized })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::PlannerNode;

    fn constant_speed_plan(v: f64, steps: usize) -> CoarsePlan {
        CoarsePlan {
            nodes: (0..=steps).map(|i| PlannerNode::new(v * 0.5 * i as f64, v, 0.5 * i as f64)).collect(),
            actions: vec![0.0; steps],
            total_cost: 0.0,
        }
    }

    fn accelerating_plan() -> CoarsePlan {
        let actions = vec![1.0, 1.0, 0.5, 0.0, -0.5, -1.0, 0.0, 0.0, 1.0, 0.0, -2.0];
        let mut nodes = vec![PlannerNode::new(3.0, 8.0, 0.0)];
        for &a in &actions {
            nodes.push(crate::planner::expand(*nodes.last().unwrap(), a, 0.5));
        }
        CoarsePlan { nodes, actions, total_cost: 0.0 }
    }

    #[test]
    fn difference_stencils() {
        let lin: Vec<f64> = (0..10).map(|i| 3.0 + 2.0 * i as f64 * 0.1).collect();
        assert!(accel_of(&lin, 0.1).unwrap().iter().all(|a| a.abs() < 1e-9));
        let quad: Vec<f64> = (0..10).map(|i| (i as f64 * 0.1).powi(2)).collect();
        assert!(accel_of(&quad, 0.1).unwrap().iter().all(|a| (a - 2.0).abs() < 1e-9));
        assert!(jerk_of(&quad, 0.1).unwrap().iter().all(|j| j.abs() < 1e-6));
        let cubic: Vec<f64> = (0..10).map(|i| (i as f64 * 0.1).powi(3)).collect();
        assert!(jerk_of(&cubic, 0.1).unwrap().iter().all(|j| (j - 6.0).abs() < 1e-6));
        assert_eq!(accel_of(&[0.0, 1.0], 0.1), Err(RefineError::TooFewSamples { needed: 3, got: 2 }));
        assert_eq!(jerk_of(&[0.0, 1.0, 2.0], 0.1), Err(RefineError::TooFewSamples { needed: 4, got: 3 }));
    }

    #[test]
    fn constant_speed_stays_linear() {
        let plan = constant_speed_plan(10.0, 11);
        let out = refine_trajectory(&plan, &RefinementParams::default(), 10.0, 0.0).unwrap();
        assert_eq!(out.s_values.len(), 56);
        for (i, s) in out.s_values.iter().enumerate() {
            assert!((s - i as f64).abs() < 1e-8, "{i}: {s}");
        }
        assert!(out.accel.iter().all(|a| a.abs() < 1e-8));
        assert!(out.jerk.iter().all(|j| j.abs() < 1e-6));
    }

    #[test]
    fn pure_tracking_reproduces_the_interpolant() {
        let plan = accelerating_plan();
        let p = RefinementParams { omega1: 0.0, omega2: 0.0, tracking: Tracking::AllKnots, ..Default::default() };
        let v0 = (plan.s_at(0.1) - plan.s_at(0.0)) / 0.1;
        let problem = RefinementProblem::from_plan(&plan, &p, v0, plan.nodes[0].s).unwrap();
        let out = refine_trajectory(&plan, &p, v0, plan.nodes[0].s).unwrap();
        for (i, s) in out.s_values.iter().enumerate() {
            assert!((s - problem.reference[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn constraints_and_stationarity_hold() {
        let plan = accelerating_plan();
        let p = RefinementParams::default();
        let problem = RefinementProblem::from_plan(&plan, &p, 7.0, 3.2).unwrap();
        let sol = problem.solve(None).unwrap();
        let [rs, rv] = problem.constraint_residual(&sol.x);
        assert!(rs.abs() < 1e-8 && rv.abs() < 1e-8, "{rs} {rv}");
        assert!(problem.stationarity_residual(&sol) < 1e-6);
    }

    #[test]
    fn untracked_pure_tracking_is_singular() {
        let plan = accelerating_plan();
        let p = RefinementParams { omega1: 0.0, omega2: 0.0, ..Default::default() };
        let err = refine_trajectory(&plan, &p, 8.0, 3.0).unwrap_err();
        assert!(matches!(err, RefineError::Singular { .. }), "{err:?}");
        let p = RefinementParams { regularization: Some(1e-6), ..p };
        let out = refine_trajectory(&plan, &p, 8.0, 3.0).unwrap();
        assert!(out.regularized);
        assert!((out.s_values[0] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn rejects_mismatched_step() {
        let plan = constant_speed_plan(5.0, 4);
        let p = RefinementParams { k: 4, ..Default::default() };
        assert!(matches!(refine_trajectory(&plan, &p, 5.0, 0.0), Err(RefineError::InvalidParams(_))));
        let p = RefinementParams { omega3: 0.0, ..Default::default() };
        assert!(matches!(refine_trajectory(&plan, &p, 5.0, 0.0), Err(RefineError::InvalidParams(_))));
    }

    #[test]
    fn kkt_matrix_bandwidth_is_seven() {
        let plan = accelerating_plan();
        let problem = RefinementProblem::from_plan(&plan, &RefinementParams::default(), 8.0, 3.0).unwrap();
        let (m, _) = problem.kkt_system(0.0);
        assert_eq!(m.lower_bandwidth() + m.upper_bandwidth() + 1, 7);
    }
}
