//! Piecewise-quintic minimum-jerk trajectories.
//!
//! Each segment is a quintic in local time `tau in [0, T_j]`. The minimizer
//! of the integrated squared jerk through fixed waypoints is C4 at every
//! interior waypoint, which closes the linear system: 6 unknowns per
//! segment per axis against 3 + 3 boundary rows and 6 rows per junction.

mod banded;

use std::fmt::Write as _;

use crate::bspline::UniformBSpline;
use crate::state::BoundaryState;
use crate::Vec3;

use banded::BandMatrix;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MinJerkError {
    #[error("need at least 2 waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("expected {expected} durations, got {got}")]
    CountMismatch { expected: usize, got: usize },
    #[error("segment {index} has invalid duration {duration}")]
    BadDuration { index: usize, duration: f64 },
    #[error("{which} state position is {distance:.3e} m from the matching waypoint")]
    BoundaryMismatch { which: &'static str, distance: f64 },
    #[error("boundary state carries derivative order {0}; at most 2 is supported")]
    BoundaryOrder(usize),
    #[error("singular junction system")]
    Singular,
    #[error("spline domain {domain} s shorter than two samples of {sample_dt} s")]
    DomainTooShort { domain: f64, sample_dt: f64 },
    #[error("sample interval {sample_dt} must be >= the spline knot interval {dt}")]
    SampleTooFine { sample_dt: f64, dt: f64 },
    #[error("invalid parameter: {0}")]
    BadParameter(String),
}

/// One quintic piece; `coeffs[axis][k]` multiplies `tau^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolySegment {
    pub duration: f64,
    pub coeffs: [[f64; 6]; 3],
}

/// `d^m/dtau^m tau^k = FALLING[m][k] * tau^(k-m)`.
const FALLING: [[f64; 6]; 6] = [
    [1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
    [0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
    [0.0, 0.0, 2.0, 6.0, 12.0, 20.0],
    [0.0, 0.0, 0.0, 6.0, 24.0, 60.0],
    [0.0, 0.0, 0.0, 0.0, 24.0, 120.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 120.0],
];

/// Row of `d^m/dtau^m [1, tau, .., tau^5]` at `tau`.
fn basis_row(m: usize, tau: f64) -> [f64; 6] {
    let mut row = [0.0; 6];
    for k in m..6 {
        row[k] = FALLING[m][k] * tau.powi((k - m) as i32);
    }
    row
}

impl PolySegment {
    /// `deriv`-th derivative at local time `tau` (Horner).
    pub fn eval(&self, tau: f64, deriv: usize) -> Vec3 {
        if deriv > 5 {
            return Vec3::zeros();
        }
        let mut out = Vec3::zeros();
        for a in 0..3 {
            let c = &self.coeffs[a];
            let mut acc = 0.0;
            for k in (deriv..6).rev() {
                acc = acc * tau + FALLING[deriv][k] * c[k];
            }
            out[a] = acc;
        }
        out
    }

    /// Closed-form integral of squared jerk over the segment.
    pub fn jerk_cost(&self) -> f64 {
        let t = self.duration;
        let mut total = 0.0;
        for c in &self.coeffs {
            // jerk = a + b tau + e tau^2
            let (a, b, e) = (6.0 * c[3], 24.0 * c[4], 60.0 * c[5]);
            total += a * a * t
                + a * b * t.powi(2)
                + (b * b + 2.0 * a * e) * t.powi(3) / 3.0
                + b * e * t.powi(4) / 2.0
                + e * e * t.powi(5) / 5.0;
        }
        total
    }
}

/// Result of sampling a trajectory; `clamped` is set when `t` fell outside
/// the trajectory and the nearest end state was returned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajSample {
    pub value: Vec3,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePolyTrajectory {
    segments: Vec<PolySegment>,
    start_time: f64,
    /// Cumulative segment start offsets from `start_time`.
    offsets: Vec<f64>,
}

impl PiecewisePolyTrajectory {
    pub fn new(segments: Vec<PolySegment>, start_time: f64) -> Result<Self, MinJerkError> {
        if segments.is_empty() {
            return Err(MinJerkError::TooFewWaypoints(1));
        }
        for (index, s) in segments.iter().enumerate() {
            if !(s.duration > 0.0 && s.duration.is_finite()) {
                return Err(MinJerkError::BadDuration {
                    index,
                    duration: s.duration,
                });
            }
        }
        let mut offsets = Vec::with_capacity(segments.len());
        let mut acc = 0.0;
        for s in &segments {
            offsets.push(acc);
            acc += s.duration;
        }
        Ok(Self {
            segments,
            start_time,
            offsets,
        })
    }

    pub fn segments(&self) -> &[PolySegment] {
        &self.segments
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn duration(&self) -> f64 {
        let last = self.segments.len() - 1;
        self.offsets[last] + self.segments[last].duration
    }

    pub fn end_time(&self) -> f64 {
        self.start_time + self.duration()
    }

    /// Absolute start time of segment `i`.
    pub fn segment_start(&self, i: usize) -> f64 {
        self.start_time + self.offsets[i]
    }

    /// Same trajectory re-anchored at `start_time`.
    pub fn with_start_time(mut self, start_time: f64) -> Self {
        self.start_time = start_time;
        self
    }

    /// `deriv`-th derivative at absolute time `t`. Outside the time span the
    /// nearest end state is held and the sample is flagged.
    pub fn eval(&self, t: f64, deriv: usize) -> TrajSample {
        let local = t - self.start_time;
        if local < 0.0 {
            return TrajSample {
                value: self.segments[0].eval(0.0, deriv),
                clamped: true,
            };
        }
        let total = self.duration();
        if local > total {
            let last = self.segments.last().unwrap();
            return TrajSample {
                value: last.eval(last.duration, deriv),
                clamped: true,
            };
        }
        let i = self
            .offsets
            .partition_point(|&o| o <= local)
            .saturating_sub(1);
        let tau = (local - self.offsets[i]).min(self.segments[i].duration);
        TrajSample {
            value: self.segments[i].eval(tau, deriv),
            clamped: false,
        }
    }

    /// Position, velocity and acceleration at `t` (clamped).
    pub fn state(&self, t: f64) -> BoundaryState {
        BoundaryState::new(
            self.eval(t, 0).value,
            self.eval(t, 1).value,
            self.eval(t, 2).value,
        )
    }

    pub fn start_state(&self) -> BoundaryState {
        self.state(self.start_time)
    }

    pub fn end_state(&self) -> BoundaryState {
        self.state(self.end_time())
    }

    /// Integral of squared jerk over the whole trajectory.
    pub fn jerk_cost(&self) -> f64 {
        self.segments.iter().map(PolySegment::jerk_cost).sum()
    }

    /// CSV with columns `t,px,py,pz,vx,vy,vz,ax,ay,az,jx,jy,jz`, sampled at
    /// `rate` Hz from start to end inclusive.
    pub fn to_csv(&self, rate: f64) -> String {
        let mut s = String::from("t,px,py,pz,vx,vy,vz,ax,ay,az,jx,jy,jz\n");
        let steps = (self.duration() * rate + 1e-9).floor() as usize;
        for k in 0..=steps {
            let t = self.start_time + k as f64 / rate;
            let _ = write!(s, "{t:.6}");
            for d in 0..4 {
                let v = self.eval(t, d).value;
                let _ = write!(s, ",{:.9},{:.9},{:.9}", v.x, v.y, v.z);
            }
            s.push('\n');
        }
        s
    }
}

fn check_order(s: &BoundaryState) -> Result<(), MinJerkError> {
    if s.order() > 2 {
        return Err(MinJerkError::BoundaryOrder(s.order()));
    }
    Ok(())
}

/// Minimum-jerk trajectory through `waypoints` with segment `durations`,
/// exact start and end states (derivatives the states do not carry are
/// pinned to zero). The first and last waypoints must equal the start and
/// end positions. The trajectory starts at time 0.
pub fn min_jerk(
    waypoints: &[Vec3],
    durations: &[f64],
    start: &BoundaryState,
    end: &BoundaryState,
) -> Result<PiecewisePolyTrajectory, MinJerkError> {
    let m = waypoints.len();
    if m < 2 {
        return Err(MinJerkError::TooFewWaypoints(m));
    }
    if durations.len() != m - 1 {
        return Err(MinJerkError::CountMismatch {
            expected: m - 1,
            got: durations.len(),
        });
    }
    for (index, &duration) in durations.iter().enumerate() {
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(MinJerkError::BadDuration { index, duration });
        }
    }
    check_order(start)?;
    check_order(end)?;
    let scale = waypoints.iter().fold(1.0f64, |a, w| a.max(w.amax()));
    let tol = 1e-9 * scale;
    let ds = (start.position() - waypoints[0]).norm();
    if ds > tol {
        return Err(MinJerkError::BoundaryMismatch {
            which: "start",
            distance: ds,
        });
    }
    let de = (end.position() - waypoints[m - 1]).norm();
    if de > tol {
        return Err(MinJerkError::BoundaryMismatch {
            which: "end",
            distance: de,
        });
    }

    let segs = m - 1;
    let n = 6 * segs;
    let mut a = BandMatrix::zeros(n, 8, 8);
    let mut rhs = vec![0.0; n * 3];
    let set_row = |a: &mut BandMatrix, row: usize, seg: usize, coeffs: [f64; 6], sign: f64| {
        for (k, c) in coeffs.iter().enumerate() {
            if *c != 0.0 {
                a.set(row, 6 * seg + k, sign * c);
            }
        }
    };
    let put_rhs = |rhs: &mut [f64], row: usize, v: &Vec3| {
        rhs[3 * row..3 * row + 3].copy_from_slice(v.as_slice());
    };

    for d in 0..3 {
        set_row(&mut a, d, 0, basis_row(d, 0.0), 1.0);
        put_rhs(&mut rhs, d, &start.derivative(d));
    }
    for j in 0..segs - 1 {
        let base = 3 + 6 * j;
        let t = durations[j];
        set_row(&mut a, base, j, basis_row(0, t), 1.0);
        put_rhs(&mut rhs, base, &waypoints[j + 1]);
        set_row(&mut a, base + 1, j + 1, basis_row(0, 0.0), 1.0);
        put_rhs(&mut rhs, base + 1, &waypoints[j + 1]);
        for d in 1..=4 {
            let row = base + 1 + d;
            set_row(&mut a, row, j, basis_row(d, t), 1.0);
            set_row(&mut a, row, j + 1, basis_row(d, 0.0), -1.0);
        }
    }
    let last = segs - 1;
    for d in 0..3 {
        let row = n - 3 + d;
        set_row(&mut a, row, last, basis_row(d, durations[last]), 1.0);
        put_rhs(&mut rhs, row, &end.derivative(d));
    }
    if !a.solve(&mut rhs, 3) {
        return Err(MinJerkError::Singular);
    }
    let segments = (0..segs)
        .map(|j| {
            let mut coeffs = [[0.0; 6]; 3];
            for k in 0..6 {
                for (ax, c) in coeffs.iter_mut().enumerate() {
                    c[k] = rhs[3 * (6 * j + k) + ax];
                }
            }
            PolySegment {
                duration: durations[j],
                coeffs,
            }
        })
        .collect();
    PiecewisePolyTrajectory::new(segments, 0.0)
}

/// Samples `spline` every `sample_dt` after its start and fits a minimum-jerk
/// trajectory through the samples that starts exactly at `hard_start` and
/// ends in the spline state at the last sample. The result starts at the
/// spline's start time.
pub fn from_bspline(
    spline: &UniformBSpline,
    sample_dt: f64,
    hard_start: &BoundaryState,
) -> Result<PiecewisePolyTrajectory, MinJerkError> {
    if !(sample_dt > 0.0 && sample_dt.is_finite()) {
        return Err(MinJerkError::BadParameter(format!(
            "sample_dt must be positive, got {sample_dt}"
        )));
    }
    if sample_dt < spline.dt() * (1.0 - 1e-9) {
        return Err(MinJerkError::SampleTooFine {
            sample_dt,
            dt: spline.dt(),
        });
    }
    let domain = spline.duration();
    let k = (domain / sample_dt + 1e-9).floor() as usize;
    if k < 2 {
        return Err(MinJerkError::DomainTooShort { domain, sample_dt });
    }
    let t0 = spline.start_time();
    let at = |i: usize, d: usize| -> Vec3 {
        let t = (t0 + i as f64 * sample_dt).min(spline.domain().1);
        spline.eval(t, d).expect("sample inside spline domain")
    };
    let mut waypoints = Vec::with_capacity(k + 1);
    waypoints.push(hard_start.position());
    waypoints.extend((1..=k).map(|i| at(i, 0)));
    let end = BoundaryState::new(at(k, 0), at(k, 1), at(k, 2));
    let start = BoundaryState::new(
        hard_start.position(),
        hard_start.velocity(),
        hard_start.acceleration(),
    );
    Ok(min_jerk(&waypoints, &vec![sample_dt; k], &start, &end)?.with_start_time(t0))
}

/// Single segment from `state` to rest along the current velocity, covering
/// `v^2 / (2 a_max)` in `v / a_max` seconds. Below 1 mm/s the trajectory
/// simply holds position for `hold` seconds.
pub fn stop_trajectory(
    state: &BoundaryState,
    a_max: f64,
    start_time: f64,
    hold: f64,
) -> Result<PiecewisePolyTrajectory, MinJerkError> {
    if !(a_max > 0.0 && a_max.is_finite()) {
        return Err(MinJerkError::BadParameter(format!(
            "a_max must be positive, got {a_max}"
        )));
    }
    let v = state.velocity();
    let speed = v.norm();
    let p = state.position();
    let (end, duration) = if speed < 1e-3 {
        (p, hold)
    } else {
        (
            p + v.normalize() * (speed * speed / (2.0 * a_max)),
            speed / a_max,
        )
    };
    let start = BoundaryState::new(p, v, state.acceleration());
    let traj = min_jerk(&[p, end], &[duration], &start, &BoundaryState::at_rest(end))?;
    Ok(traj.with_start_time(start_time))
}

#[cfg(test)]
mod tests;
