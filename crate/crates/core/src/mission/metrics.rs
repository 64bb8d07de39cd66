//! Tracking metrics in the tunnel frame.

use serde::{Deserialize, Serialize};

use super::sim::{SimLog, SimSample};
use super::Phase;
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub rmse_longitudinal: f64,
    pub rmse_lateral: f64,
    pub rmse_vertical: f64,
    pub min_clearance: f64,
    pub traversal_time: f64,
    /// Integral of squared executed jerk (m^2/s^5).
    pub jerk_integral: f64,
    pub collision_count: usize,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("log has fewer than {0} samples")]
    TooFewSamples(usize),
    #[error("reference path needs at least 2 distinct points")]
    BadReference,
    #[error("timestamps must be strictly increasing (row {0})")]
    Timestamps(usize),
}

/// Local frame at `p`: tangent of the nearest reference segment, world up
/// with the tangent removed, and their completion to a right-handed frame.
pub fn tunnel_frame(reference: &[Vec3], p: &Vec3) -> [Vec3; 3] {
    let mut best = (f64::INFINITY, Vec3::x());
    for w in reference.windows(2) {
        let d = w[1] - w[0];
        let len2 = d.norm_squared();
        if len2 < 1e-18 {
            continue;
        }
        let s = ((p - w[0]).dot(&d) / len2).clamp(0.0, 1.0);
        let dist = (w[0] + d * s - p).norm_squared();
        if dist < best.0 {
            best = (dist, d / len2.sqrt());
        }
    }
    let t = best.1;
    let up = if t.z.abs() > 0.999 {
        Vec3::x()
    } else {
        Vec3::z()
    };
    let v = (up - t * up.dot(&t)).normalize();
    let l = v.cross(&t);
    [t, l, v]
}

/// Per-axis RMSE of executed minus commanded position in the tunnel frame,
/// over intra-tunnel samples (all samples when none are intra-tunnel).
pub fn tracking_rmse(samples: &[SimSample], reference: &[Vec3]) -> [f64; 3] {
    let intra: Vec<&SimSample> = samples
        .iter()
        .filter(|s| s.phase == Phase::IntraTunnel)
        .collect();
    let set: Vec<&SimSample> = if intra.is_empty() {
        samples.iter().collect()
    } else {
        intra
    };
    let mut acc = [0.0; 3];
    for s in &set {
        let e = s.exec_position - s.cmd_position;
        let f = tunnel_frame(reference, &s.cmd_position);
        for a in 0..3 {
            acc[a] += e.dot(&f[a]).powi(2);
        }
    }
    let n = set.len().max(1) as f64;
    acc.map(|x| (x / n).sqrt())
}

/// Integral of squared jerk of the executed positions from third finite
/// differences.
pub fn jerk_integral(samples: &[SimSample]) -> f64 {
    samples
        .windows(4)
        .map(|w| {
            let h = (w[3].t - w[0].t) / 3.0;
            let j = (w[3].exec_position - w[2].exec_position * 3.0 + w[1].exec_position * 3.0
                - w[0].exec_position)
                / (h * h * h);
            j.norm_squared() * h
        })
        .sum()
}

pub fn compute_metrics(
    samples: &[SimSample],
    reference: &[Vec3],
    vehicle_radius: f64,
) -> Result<RunMetrics, MetricsError> {
    if samples.len() < 4 {
        return Err(MetricsError::TooFewSamples(4));
    }
    if !reference.windows(2).any(|w| (w[1] - w[0]).norm() > 1e-9) {
        return Err(MetricsError::BadReference);
    }
    if let Some(i) = samples.windows(2).position(|w| !(w[1].t > w[0].t)) {
        return Err(MetricsError::Timestamps(i + 1));
    }
    let [lon, lat, ver] = tracking_rmse(samples, reference);
    let intra: Vec<f64> = samples
        .iter()
        .filter(|s| s.phase == Phase::IntraTunnel)
        .map(|s| s.t)
        .collect();
    let traversal_time = match (intra.first(), intra.last()) {
        (Some(a), Some(b)) => b - a,
        _ => 0.0,
    };
    Ok(RunMetrics {
        rmse_longitudinal: lon,
        rmse_lateral: lat,
        rmse_vertical: ver,
        min_clearance: samples
            .iter()
            .map(|s| s.clearance)
            .fold(f64::INFINITY, f64::min),
        traversal_time,
        jerk_integral: jerk_integral(samples),
        collision_count: samples
            .iter()
            .filter(|s| s.clearance < vehicle_radius)
            .count()
            .min(1),
    })
}

/// Metrics of a finished simulation against `reference`.
pub fn log_metrics(
    log: &SimLog,
    reference: &[Vec3],
    vehicle_radius: f64,
) -> Result<RunMetrics, MetricsError> {
    compute_metrics(&log.samples, reference, vehicle_radius)
}
