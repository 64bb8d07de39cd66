//! Smoothing of a center-line B-spline by minimizing a weighted sum of
//! elastic-band, waypoint, speed and boundary-state costs over its controls.

pub mod lbfgs;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::bspline::{knot_eval, knot_weights, SplineError, UniformBSpline};
use crate::state::BoundaryState;
use crate::Vec3;

pub use lbfgs::{LbfgsOptions, StopReason, TraceRow};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OptError {
    #[error("need at least {needed} control points, got {got}")]
    TooFewControls { needed: usize, got: usize },
    #[error("expected {expected} waypoints (one per knot), got {got}")]
    CountMismatch { expected: usize, got: usize },
    #[error("boundary state order {order} exceeds {max}")]
    BoundaryOrder { order: usize, max: usize },
    #[error("only cubic splines are supported, got degree {0}")]
    UnsupportedDegree(usize),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("optimizer diverged at iteration {iteration} (non-finite cost)")]
    Diverged { last: Vec<Vec3>, iteration: usize },
    #[error(transparent)]
    Spline(#[from] SplineError),
}

/// Cubic-spline stencil width used by every knot-based term.
const DEGREE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub lambda_s: f64,
    pub lambda_w: f64,
    pub lambda_v: f64,
    pub lambda_i: f64,
    pub lambda_e: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            lambda_s: 1.0,
            lambda_w: 0.02,
            lambda_v: 2.0,
            lambda_i: 100.0,
            lambda_e: 10.0,
        }
    }
}

impl CostWeights {
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            lambda_s: self.lambda_s * c,
            lambda_w: self.lambda_w * c,
            lambda_v: self.lambda_v * c,
            lambda_i: self.lambda_i * c,
            lambda_e: self.lambda_e * c,
        }
    }

    pub fn validate(&self) -> Result<(), OptError> {
        let all = [
            self.lambda_s,
            self.lambda_w,
            self.lambda_v,
            self.lambda_i,
            self.lambda_e,
        ];
        if all.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(OptError::BadParameter(format!(
                "weights must be finite and >= 0: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Value and per-control gradient of one cost term.
pub type CostGrad = (f64, Vec<Vec3>);

fn need_controls(q: &[Vec3], needed: usize) -> Result<(), OptError> {
    if q.len() < needed {
        return Err(OptError::TooFewControls {
            needed,
            got: q.len(),
        });
    }
    Ok(())
}

/// Sum of squared third differences `-Q_i + 3Q_{i+1} - 3Q_{i+2} + Q_{i+3}`.
pub fn cost_smoothness(q: &[Vec3]) -> Result<CostGrad, OptError> {
    need_controls(q, 4)?;
    let mut grad = vec![Vec3::zeros(); q.len()];
    let mut cost = 0.0;
    for i in 0..q.len() - 3 {
        let r = -q[i] + q[i + 1] * 3.0 - q[i + 2] * 3.0 + q[i + 3];
        cost += r.norm_squared();
        grad[i] -= r * 2.0;
        grad[i + 1] += r * 6.0;
        grad[i + 2] -= r * 6.0;
        grad[i + 3] += r * 2.0;
    }
    Ok((cost, grad))
}

/// Squared deviation of each knot position from its waypoint.
pub fn cost_waypoints(q: &[Vec3], w: &[Vec3]) -> Result<CostGrad, OptError> {
    need_controls(q, DEGREE + 1)?;
    let knots = q.len() - DEGREE + 1;
    if w.len() != knots {
        return Err(OptError::CountMismatch {
            expected: knots,
            got: w.len(),
        });
    }
    let weights = knot_weights(0, 1.0);
    let mut grad = vec![Vec3::zeros(); q.len()];
    let mut cost = 0.0;
    for (i, wi) in w.iter().enumerate() {
        let p = q[i] * weights[0] + q[i + 1] * weights[1] + q[i + 2] * weights[2];
        let r = p - wi;
        cost += r.norm_squared();
        for (j, c) in weights.iter().enumerate() {
            grad[i + j] += r * (2.0 * c);
        }
    }
    Ok((cost, grad))
}

/// Squared deviation of each control-polygon speed `|Q_{i+1} - Q_i| / dt`
/// from `v_des`.
pub fn cost_speed(q: &[Vec3], dt: f64, v_des: f64) -> Result<CostGrad, OptError> {
    need_controls(q, 2)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(OptError::BadParameter(format!(
            "dt must be positive, got {dt}"
        )));
    }
    if !(v_des > 0.0 && v_des.is_finite()) {
        return Err(OptError::BadParameter(format!(
            "v_des must be positive, got {v_des}"
        )));
    }
    let mut grad = vec![Vec3::zeros(); q.len()];
    let mut cost = 0.0;
    for i in 0..q.len() - 1 {
        let d = q[i + 1] - q[i];
        let len = d.norm();
        let r = len / dt - v_des;
        cost += r * r;
        if len > 0.0 {
            let g = d * (2.0 * r / (len * dt));
            grad[i + 1] += g;
            grad[i] -= g;
        }
    }
    Ok((cost, grad))
}

fn check_boundary(s: &BoundaryState) -> Result<(), OptError> {
    if s.order() > DEGREE - 1 {
        return Err(OptError::BoundaryOrder {
            order: s.order(),
            max: DEGREE - 1,
        });
    }
    Ok(())
}

fn boundary_term(
    q: &[Vec3],
    offset: usize,
    target: &BoundaryState,
    dt: f64,
    grad: &mut [Vec3],
) -> f64 {
    let ks = knot_eval(&q[offset], &q[offset + 1], &q[offset + 2], dt);
    let mut cost = 0.0;
    for (order, want) in target.derivatives().iter().enumerate() {
        let r = ks.derivative(order) - want;
        cost += r.norm_squared();
        for (j, c) in knot_weights(order, dt).iter().enumerate() {
            grad[offset + j] += r * (2.0 * c);
        }
    }
    cost
}

/// Start-knot mismatch against `start` and end-knot mismatch against `end`,
/// returned separately so they can carry different weights.
pub fn cost_boundary_split(
    q: &[Vec3],
    dt: f64,
    start: &BoundaryState,
    end: &BoundaryState,
) -> Result<(CostGrad, CostGrad), OptError> {
    need_controls(q, DEGREE + 1)?;
    check_boundary(start)?;
    check_boundary(end)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(OptError::BadParameter(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let mut gs = vec![Vec3::zeros(); q.len()];
    let mut ge = vec![Vec3::zeros(); q.len()];
    let cs = boundary_term(q, 0, start, dt, &mut gs);
    let ce = boundary_term(q, q.len() - DEGREE, end, dt, &mut ge);
    Ok(((cs, gs), (ce, ge)))
}

/// Unweighted sum of start and end boundary mismatches.
pub fn cost_boundary(
    q: &[Vec3],
    dt: f64,
    start: &BoundaryState,
    end: &BoundaryState,
) -> Result<CostGrad, OptError> {
    let ((cs, mut gs), (ce, ge)) = cost_boundary_split(q, dt, start, end)?;
    gs.iter_mut().zip(&ge).for_each(|(a, b)| *a += b);
    Ok((cs + ce, gs))
}

/// Per-term values of the total cost.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    pub smoothness: f64,
    pub waypoints: f64,
    pub speed: f64,
    pub start: f64,
    pub end: f64,
    pub total: f64,
}

/// Everything except the controls: the fixed data of one optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajProblem {
    pub waypoints: Vec<Vec3>,
    pub start: BoundaryState,
    pub end: BoundaryState,
    pub weights: CostWeights,
    pub v_des: f64,
    pub dt: f64,
}

impl TrajProblem {
    pub fn validate(&self, controls: usize) -> Result<(), OptError> {
        self.weights.validate()?;
        check_boundary(&self.start)?;
        check_boundary(&self.end)?;
        if controls < DEGREE + 1 {
            return Err(OptError::TooFewControls {
                needed: DEGREE + 1,
                got: controls,
            });
        }
        let knots = controls - DEGREE + 1;
        if self.waypoints.len() != knots {
            return Err(OptError::CountMismatch {
                expected: knots,
                got: self.waypoints.len(),
            });
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(OptError::BadParameter(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.v_des > 0.0 && self.v_des.is_finite()) {
            return Err(OptError::BadParameter(format!(
                "v_des must be positive, got {}",
                self.v_des
            )));
        }
        Ok(())
    }

    /// Weighted total cost and gradient.
    pub fn evaluate(&self, q: &[Vec3]) -> Result<(CostBreakdown, Vec<Vec3>), OptError> {
        let w = &self.weights;
        let (fs, gs) = cost_smoothness(q)?;
        let (fw, gw) = cost_waypoints(q, &self.waypoints)?;
        let (fv, gv) = cost_speed(q, self.dt, self.v_des)?;
        let ((fi, gi), (fe, ge)) = cost_boundary_split(q, self.dt, &self.start, &self.end)?;
        let mut grad = vec![Vec3::zeros(); q.len()];
        for k in 0..q.len() {
            grad[k] = gs[k] * w.lambda_s
                + gw[k] * w.lambda_w
                + gv[k] * w.lambda_v
                + gi[k] * w.lambda_i
                + ge[k] * w.lambda_e;
        }
        let total =
            w.lambda_s * fs + w.lambda_w * fw + w.lambda_v * fv + w.lambda_i * fi + w.lambda_e * fe;
        Ok((
            CostBreakdown {
                smoothness: fs,
                waypoints: fw,
                speed: fv,
                start: fi,
                end: fe,
                total,
            },
            grad,
        ))
    }

    pub fn total_cost(&self, q: &[Vec3]) -> Result<CostGrad, OptError> {
        let (b, g) = self.evaluate(q)?;
        Ok((b.total, g))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub spline: UniformBSpline,
    pub initial: CostBreakdown,
    pub fin: CostBreakdown,
    pub reason: StopReason,
    pub trace: Vec<TraceRow>,
}

impl OptResult {
    pub fn iterations(&self) -> usize {
        self.trace.last().map_or(0, |r| r.iteration)
    }

    /// CSV rows `iteration,cost,gradient_norm`.
    pub fn trace_csv(&self) -> String {
        trace_csv(&self.trace)
    }
}

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut s = String::from("iteration,cost,gradient_norm\n");
    for r in trace {
        let _ = writeln!(
            s,
            "{},{:.12e},{:.12e}",
            r.iteration, r.cost, r.gradient_norm
        );
    }
    s
}

/// Cholesky factor of a fixed Hessian estimate over the flattened controls:
/// exact for the quadratic terms, Gauss-Newton for the speed term with edge
/// directions taken from `q`.
fn preconditioner(
    problem: &TrajProblem,
    q: &[Vec3],
) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let n = q.len();
    let w = &problem.weights;
    let mut h = DMatrix::<f64>::zeros(3 * n, 3 * n);
    let mut add = |offset: usize, a: &[f64], scale: f64| {
        for (j, aj) in a.iter().enumerate() {
            for (k, ak) in a.iter().enumerate() {
                for ax in 0..3 {
                    h[(3 * (offset + j) + ax, 3 * (offset + k) + ax)] += 2.0 * scale * aj * ak;
                }
            }
        }
    };
    for i in 0..n - 3 {
        add(i, &[-1.0, 3.0, -3.0, 1.0], w.lambda_s);
    }
    let c = knot_weights(0, 1.0);
    for i in 0..problem.waypoints.len() {
        add(i, &c, w.lambda_w);
    }
    for order in 0..=problem.start.order() {
        add(0, &knot_weights(order, problem.dt), w.lambda_i);
    }
    for order in 0..=problem.end.order() {
        add(n - DEGREE, &knot_weights(order, problem.dt), w.lambda_e);
    }
    let s = 2.0 * w.lambda_v / (problem.dt * problem.dt);
    for i in 0..n - 1 {
        let d = q[i + 1] - q[i];
        let p = if d.norm() > 0.0 {
            let u = d.normalize();
            u * u.transpose()
        } else {
            nalgebra::Matrix3::identity()
        } * s;
        for (r, c, sign) in [
            (i, i, 1.0),
            (i + 1, i + 1, 1.0),
            (i, i + 1, -1.0),
            (i + 1, i, -1.0),
        ] {
            for a in 0..3 {
                for b in 0..3 {
                    h[(3 * r + a, 3 * c + b)] += sign * p[(a, b)];
                }
            }
        }
    }
    let ridge = 1e-10 * (0..3 * n).map(|i| h[(i, i)]).fold(0.0, f64::max) + 1e-12;
    for i in 0..3 * n {
        h[(i, i)] += ridge;
    }
    h.cholesky()
}

fn flatten(q: &[Vec3]) -> Vec<f64> {
    q.iter().flat_map(|v| [v.x, v.y, v.z]).collect()
}

fn unflatten(x: &[f64]) -> Vec<Vec3> {
    x.chunks_exact(3)
        .map(|c| Vec3::new(c[0], c[1], c[2]))
        .collect()
}

/// Minimizes the weighted cost over all controls of `init`, starting from
/// `init`. The knot interval of `init` must equal `problem.dt`.
pub fn optimize(
    init: &UniformBSpline,
    problem: &TrajProblem,
    opts: &LbfgsOptions,
) -> Result<OptResult, OptError> {
    if init.degree() != DEGREE {
        return Err(OptError::UnsupportedDegree(init.degree()));
    }
    if (init.dt() - problem.dt).abs() > 1e-12 * problem.dt.max(1.0) {
        return Err(OptError::BadParameter(format!(
            "spline dt {} differs from problem dt {}",
            init.dt(),
            problem.dt
        )));
    }
    problem.validate(init.controls().len())?;
    let (initial, _) = problem.evaluate(init.controls())?;
    let f = |x: &[f64], g: &mut [f64]| -> f64 {
        let q = unflatten(x);
        match problem.evaluate(&q) {
            Ok((b, grad)) => {
                for (k, v) in grad.iter().enumerate() {
                    g[3 * k] = v.x;
                    g[3 * k + 1] = v.y;
                    g[3 * k + 2] = v.z;
                }
                b.total
            }
            Err(_) => f64::NAN,
        }
    };
    let chol = preconditioner(problem, init.controls());
    let apply = |d: &mut [f64]| {
        if let Some(chol) = &chol {
            let mut v = DVector::from_column_slice(d);
            chol.solve_mut(&mut v);
            d.copy_from_slice(v.as_slice());
        }
    };
    let min = lbfgs::minimize_preconditioned(f, flatten(init.controls()), opts, Some(&apply))
        .map_err(|d| OptError::Diverged {
            last: unflatten(&d.last),
            iteration: d.iteration,
        })?;
    let controls = unflatten(&min.x);
    let (fin, _) = problem.evaluate(&controls)?;
    Ok(OptResult {
        spline: init.with_controls(controls)?,
        initial,
        fin,
        reason: min.reason,
        trace: min.trace,
    })
}

/// Resamples a polyline to `count` points equally spaced in arc length,
/// keeping both end points.
pub fn resample_arc_length(points: &[Vec3], count: usize) -> Result<Vec<Vec3>, OptError> {
    if points.len() < 2 || count < 2 {
        return Err(OptError::BadParameter(format!(
            "resampling needs >= 2 points and count >= 2, got {} and {count}",
            points.len()
        )));
    }
    let mut cum = Vec::with_capacity(points.len());
    cum.push(0.0);
    for w in points.windows(2) {
        cum.push(cum.last().unwrap() + (w[1] - w[0]).norm());
    }
    let total = *cum.last().unwrap();
    if total <= 0.0 {
        return Ok(vec![points[0]; count]);
    }
    let mut out = Vec::with_capacity(count);
    let mut seg = 0;
    for k in 0..count {
        let s = total * k as f64 / (count - 1) as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let a = if len > 0.0 {
            ((s - cum[seg]) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(points[seg] + (points[seg + 1] - points[seg]) * a);
    }
    *out.last_mut().unwrap() = *points.last().unwrap();
    Ok(out)
}

/// Polyline length.
pub fn path_length(points: &[Vec3]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}
