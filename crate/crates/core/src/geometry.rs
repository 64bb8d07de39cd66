//! Least-squares plane fitting shared by the center-line walker and the
//! entrance estimator.

use nalgebra::DMatrix;

use crate::Vec3;

/// Singular-value ratio below which a point set is treated as collinear.
pub const MIN_CONDITIONING: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneFit {
    pub centroid: Vec3,
    /// Unit normal, the smallest-singular direction of the centered points.
    pub normal: Vec3,
    /// Singular values, descending.
    pub singular_values: [f64; 3],
}

impl PlaneFit {
    /// `sigma_2 / sigma_1`; near zero for collinear input.
    pub fn conditioning(&self) -> f64 {
        if self.singular_values[0] <= 0.0 {
            0.0
        } else {
            self.singular_values[1] / self.singular_values[0]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum PlaneFitError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("points are (nearly) collinear: sigma2/sigma1 = {0:e}")]
    Degenerate(f64),
}

/// SVD plane fit through the centroid. The returned normal has no sign
/// convention; see [`fit_plane_oriented`].
pub fn fit_plane(points: &[Vec3]) -> Result<PlaneFit, PlaneFitError> {
    if points.len() < 3 {
        return Err(PlaneFitError::TooFewPoints(points.len()));
    }
    let centroid = points.iter().sum::<Vec3>() / points.len() as f64;
    let m = DMatrix::from_fn(points.len(), 3, |r, c| points[r][c] - centroid[c]);
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv = order.map(|i| svd.singular_values[i]);
    let row = v_t.row(order[2]);
    let normal = Vec3::new(row[0], row[1], row[2]).normalize();
    let fit = PlaneFit {
        centroid,
        normal,
        singular_values: sv,
    };
    if !(fit.conditioning() >= MIN_CONDITIONING) {
        return Err(PlaneFitError::Degenerate(fit.conditioning()));
    }
    Ok(fit)
}

/// Plane fit with the normal flipped to satisfy `normal · reference > 0`.
pub fn fit_plane_oriented(points: &[Vec3], reference: &Vec3) -> Result<PlaneFit, PlaneFitError> {
    let mut fit = fit_plane(points)?;
    if fit.normal.dot(reference) < 0.0 {
        fit.normal = -fit.normal;
    }
    Ok(fit)
}
