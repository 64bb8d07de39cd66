//! Entrance pose from repeated marker detections.

use std::collections::BTreeMap;

use crate::geometry::{fit_plane, PlaneFitError};
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkerDetection {
    pub id: u32,
    pub position: Vec3,
    pub timestamp: f64,
    /// Camera position the detection was made from.
    pub viewpoint: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntranceEstimate {
    pub position: Vec3,
    /// Unit vector pointing into the tunnel.
    pub direction: Vec3,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EntranceError {
    #[error("need at least 3 marker ids with >= 3 detections each, got {0}")]
    TooFewMarkers(usize),
    #[error("marker layout is degenerate: {0}")]
    Degenerate(#[from] PlaneFitError),
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn coordinate_median(points: &[Vec3]) -> Vec3 {
    let mut out = Vec3::zeros();
    let mut buf = Vec::with_capacity(points.len());
    for a in 0..3 {
        buf.clear();
        buf.extend(points.iter().map(|p| p[a]));
        out[a] = median(&mut buf);
    }
    out
}

/// Coordinate-wise median after dropping detections more than 3 MAD from
/// the median on any axis.
pub fn robust_marker_position(points: &[Vec3]) -> Vec3 {
    let m = coordinate_median(points);
    let mut mad = Vec3::zeros();
    let mut buf = Vec::with_capacity(points.len());
    for a in 0..3 {
        buf.clear();
        buf.extend(points.iter().map(|p| (p[a] - m[a]).abs()));
        mad[a] = median(&mut buf);
    }
    let kept: Vec<Vec3> = points
        .iter()
        .filter(|p| (0..3).all(|a| (p[a] - m[a]).abs() <= 3.0 * mad[a] + 1e-12))
        .copied()
        .collect();
    if kept.is_empty() {
        m
    } else {
        coordinate_median(&kept)
    }
}

/// Entrance at the mean of the robust marker positions, facing along the
/// normal of their least-squares plane, oriented away from the cameras.
pub fn estimate_entrance(
    detections: &[MarkerDetection],
) -> Result<EntranceEstimate, EntranceError> {
    let mut by_id: BTreeMap<u32, Vec<Vec3>> = BTreeMap::new();
    for d in detections {
        by_id.entry(d.id).or_default().push(d.position);
    }
    let markers: Vec<Vec3> = by_id
        .values()
        .filter(|v| v.len() >= 3)
        .map(|v| robust_marker_position(v))
        .collect();
    if markers.len() < 3 {
        return Err(EntranceError::TooFewMarkers(markers.len()));
    }
    let fit = fit_plane(&markers)?;
    let position = markers.iter().sum::<Vec3>() / markers.len() as f64;
    let view = detections.iter().map(|d| d.viewpoint).sum::<Vec3>() / detections.len() as f64;
    let mut direction = fit.normal;
    if direction.dot(&(position - view)) < 0.0 {
        direction = -direction;
    }
    Ok(EntranceEstimate {
        position,
        direction,
    })
}
