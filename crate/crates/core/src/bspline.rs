//! Uniform B-splines over 3-D control points.

use crate::Vec3;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SplineError {
    #[error("degree must be >= 1, got {0}")]
    BadDegree(usize),
    #[error("need at least {needed} control points for degree {degree}, got {got}")]
    TooFewControls {
        needed: usize,
        degree: usize,
        got: usize,
    },
    #[error("knot interval must be positive and finite, got {0}")]
    BadInterval(f64),
    #[error("t = {t} outside domain [{start}, {end}]")]
    OutOfDomain { t: f64, start: f64, end: f64 },
    #[error("derivative order {deriv} exceeds degree {degree}")]
    DerivativeTooHigh { deriv: usize, degree: usize },
}

/// Uniform B-spline with control points `Q_0..Q_{N-1}`, polynomial degree
/// `p` and knot interval `dt`.
///
/// Knot `j` sits at `t0 + (j - p) * dt`, so the evaluation domain is
/// `[t0, t0 + (N - p) * dt]` and the `k`-th domain knot is influenced by
/// `Q_k..Q_{k+p}`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformBSpline {
    controls: Vec<Vec3>,
    degree: usize,
    dt: f64,
    t0: f64,
}

/// Position, velocity and acceleration at one knot of a cubic spline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnotState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
}

impl KnotState {
    pub fn derivative(&self, order: usize) -> Vec3 {
        match order {
            0 => self.position,
            1 => self.velocity,
            2 => self.acceleration,
            _ => Vec3::zeros(),
        }
    }
}

/// Closed-form state at a knot of a cubic uniform B-spline, which depends
/// only on the three surrounding controls.
pub fn knot_eval(q0: &Vec3, q1: &Vec3, q2: &Vec3, dt: f64) -> KnotState {
    KnotState {
        position: (q0 + q1 * 4.0 + q2) / 6.0,
        velocity: (q2 - q0) / (2.0 * dt),
        acceleration: (q0 - q1 * 2.0 + q2) / (dt * dt),
    }
}

/// Weights of `(Q_i, Q_{i+1}, Q_{i+2})` in the knot derivative of the given
/// order (cubic case). Used for gradient back-propagation.
pub fn knot_weights(order: usize, dt: f64) -> [f64; 3] {
    match order {
        0 => [1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0],
        1 => [-0.5 / dt, 0.0, 0.5 / dt],
        2 => {
            let s = 1.0 / (dt * dt);
            [s, -2.0 * s, s]
        }
        _ => [0.0; 3],
    }
}

impl UniformBSpline {
    pub fn new(controls: Vec<Vec3>, degree: usize, dt: f64) -> Result<Self, SplineError> {
        Self::with_start(controls, degree, dt, 0.0)
    }

    pub fn with_start(
        controls: Vec<Vec3>,
        degree: usize,
        dt: f64,
        t0: f64,
    ) -> Result<Self, SplineError> {
        if degree == 0 {
            return Err(SplineError::BadDegree(degree));
        }
        if controls.len() < degree + 1 {
            return Err(SplineError::TooFewControls {
                needed: degree + 1,
                degree,
                got: controls.len(),
            });
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SplineError::BadInterval(dt));
        }
        Ok(Self {
            controls,
            degree,
            dt,
            t0,
        })
    }

    pub fn controls(&self) -> &[Vec3] {
        &self.controls
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn start_time(&self) -> f64 {
        self.t0
    }

    /// Same knots and degree, new control points.
    pub fn with_controls(&self, controls: Vec<Vec3>) -> Result<Self, SplineError> {
        Self::with_start(controls, self.degree, self.dt, self.t0)
    }

    /// Number of domain knots, `N - p + 1`.
    pub fn knot_count(&self) -> usize {
        self.controls.len() - self.degree + 1
    }

    pub fn knot_time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.t0, self.t0 + self.duration())
    }

    pub fn duration(&self) -> f64 {
        (self.controls.len() - self.degree) as f64 * self.dt
    }

    /// `deriv`-th derivative at `t` by de Boor's algorithm.
    pub fn eval(&self, t: f64, deriv: usize) -> Result<Vec3, SplineError> {
        let (start, end) = self.domain();
        if !(t >= start - 1e-12 && t <= end + 1e-12) {
            return Err(SplineError::OutOfDomain { t, start, end });
        }
        if deriv > self.degree {
            return Err(SplineError::DerivativeTooHigh {
                deriv,
                degree: self.degree,
            });
        }
        let mut ctrl = self.controls.clone();
        for _ in 0..deriv {
            ctrl = ctrl.windows(2).map(|w| (w[1] - w[0]) / self.dt).collect();
        }
        Ok(de_boor(&ctrl, self.degree - deriv, self.dt, self.t0, t))
    }

    pub fn position(&self, t: f64) -> Result<Vec3, SplineError> {
        self.eval(t, 0)
    }

    /// Closed-form state at domain knot `k` (cubic splines).
    pub fn knot_state(&self, k: usize) -> KnotState {
        debug_assert_eq!(self.degree, 3);
        let q = &self.controls;
        knot_eval(&q[k], &q[k + 1], &q[k + 2], self.dt)
    }
}

fn de_boor(ctrl: &[Vec3], p: usize, dt: f64, t0: f64, t: f64) -> Vec3 {
    let spans = ctrl.len() - p;
    let s = (((t - t0) / dt).floor().max(0.0) as usize).min(spans - 1);
    if p == 0 {
        return ctrl[s];
    }
    // knot j at t0 + (j - p) dt; active span l = s + p
    let knot = |j: usize| t0 + (j as f64 - p as f64) * dt;
    let l = s + p;
    let mut d: Vec<Vec3> = (0..=p).map(|j| ctrl[j + l - p]).collect();
    for r in 1..=p {
        for j in (r..=p).rev() {
            let lo = knot(j + l - p);
            let hi = knot(j + 1 + l - r);
            let alpha = (t - lo) / (hi - lo);
            d[j] = d[j - 1] * (1.0 - alpha) + d[j] * alpha;
        }
    }
    d[p]
}
