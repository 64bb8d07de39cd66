//! Synthetic tunnel worlds: a wall shell swept along a polyline, open at both
//! ends, surrounded by free space.

use nalgebra::{Rotation3, Unit};
use serde::{Deserialize, Serialize};

use super::{GridError, OccupancyGrid};
use crate::Vec3;

/// Spacing used when sampling arcs into polyline knots (m).
const ARC_SAMPLE_STEP: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum CrossSection {
    Circle { diameter: f64 },
    Square { side: f64 },
}

impl CrossSection {
    /// Diameter or side length (m).
    pub fn size(&self) -> f64 {
        match *self {
            CrossSection::Circle { diameter } => diameter,
            CrossSection::Square { side } => side,
        }
    }

    /// Inscribed radius: half the diameter or half the side.
    pub fn half_size(&self) -> f64 {
        0.5 * self.size()
    }

    /// Radius of the smallest circle containing the cross-section.
    pub fn circumradius(&self) -> f64 {
        match *self {
            CrossSection::Circle { diameter } => 0.5 * diameter,
            CrossSection::Square { side } => 0.5 * side * std::f64::consts::SQRT_2,
        }
    }
}

/// Geometry of one synthetic tunnel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunnelSpec {
    pub cross_section: CrossSection,
    /// Axis polyline, entrance first (m).
    pub path: Vec<Vec3>,
    /// Wall shell thickness in voxels.
    pub wall_thickness: usize,
    /// Free space kept beyond each open end (m).
    pub apron: f64,
}

/// Builds polylines out of straight runs and circular arcs.
#[derive(Debug, Clone)]
pub struct PathBuilder {
    points: Vec<Vec3>,
    heading: Vec3,
}

impl PathBuilder {
    pub fn new(start: Vec3, heading: Vec3) -> Self {
        Self {
            points: vec![start],
            heading: heading.normalize(),
        }
    }

    fn tip(&self) -> Vec3 {
        *self.points.last().unwrap()
    }

    pub fn straight(mut self, length: f64) -> Self {
        if length > 0.0 {
            let p = self.tip() + self.heading * length;
            self.points.push(p);
        }
        self
    }

    /// Circular arc of `radius` turning by `angle` (rad, right-handed) about
    /// `axis`.
    pub fn arc(mut self, radius: f64, angle: f64, axis: Vec3) -> Self {
        let axis = axis.normalize();
        let towards_center = axis.cross(&self.heading).normalize() * angle.signum();
        let center = self.tip() + towards_center * radius;
        let arm = self.tip() - center;
        let steps = ((radius * angle.abs()) / ARC_SAMPLE_STEP).ceil().max(1.0) as usize;
        let unit_axis = Unit::new_normalize(axis);
        for s in 1..=steps {
            let theta = angle * s as f64 / steps as f64;
            self.points
                .push(center + Rotation3::from_axis_angle(&unit_axis, theta) * arm);
        }
        self.heading = (Rotation3::from_axis_angle(&unit_axis, angle) * self.heading).normalize();
        self
    }

    pub fn build(self) -> Vec<Vec3> {
        self.points
    }
}

impl TunnelSpec {
    pub fn new(cross_section: CrossSection, path: Vec<Vec3>) -> Self {
        Self {
            cross_section,
            path,
            wall_thickness: 2,
            apron: 1.5,
        }
    }

    /// Straight tunnel along +x starting at the origin.
    pub fn straight(cross_section: CrossSection, length: f64) -> Self {
        let path = PathBuilder::new(Vec3::zeros(), Vec3::x())
            .straight(length)
            .build();
        Self::new(cross_section, path)
    }

    /// Horizontal bend: `lead` m straight, an arc turning left by `angle`,
    /// then `tail` m straight.
    pub fn yaw_bend(
        cross_section: CrossSection,
        lead: f64,
        radius: f64,
        angle: f64,
        tail: f64,
    ) -> Self {
        let path = PathBuilder::new(Vec3::zeros(), Vec3::x())
            .straight(lead)
            .arc(radius, angle, Vec3::z())
            .straight(tail)
            .build();
        Self::new(cross_section, path)
    }

    /// Vertical bend: the same as [`Self::yaw_bend`] but pitching upward.
    pub fn vertical_bend(
        cross_section: CrossSection,
        lead: f64,
        radius: f64,
        angle: f64,
        tail: f64,
    ) -> Self {
        let path = PathBuilder::new(Vec3::zeros(), Vec3::x())
            .straight(lead)
            .arc(radius, angle, -Vec3::y())
            .straight(tail)
            .build();
        Self::new(cross_section, path)
    }

    /// Left turn followed by an equal right turn.
    pub fn s_bend(
        cross_section: CrossSection,
        lead: f64,
        radius: f64,
        angle: f64,
        tail: f64,
    ) -> Self {
        let path = PathBuilder::new(Vec3::zeros(), Vec3::x())
            .straight(lead)
            .arc(radius, angle, Vec3::z())
            .arc(radius, -angle, Vec3::z())
            .straight(tail)
            .build();
        Self::new(cross_section, path)
    }

    pub fn length(&self) -> f64 {
        self.path.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    pub fn entrance(&self) -> Vec3 {
        self.path[0]
    }

    /// Unit axis direction at the entrance, pointing into the tunnel.
    pub fn entrance_direction(&self) -> Vec3 {
        (self.path[1] - self.path[0]).normalize()
    }

    pub fn exit(&self) -> Vec3 {
        *self.path.last().unwrap()
    }

    pub fn exit_direction(&self) -> Vec3 {
        let n = self.path.len();
        (self.path[n - 1] - self.path[n - 2]).normalize()
    }

    /// Distance from `p` to the axis polyline.
    pub fn distance_to_axis(&self, p: &Vec3) -> f64 {
        self.path
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                let ab = b - a;
                let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
                (p - (a + ab * t)).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Distance from `p` to the axis polyline with its end segments extended
    /// into rays, so points in the aprons measure lateral offset only.
    pub fn distance_to_extended_axis(&self, p: &Vec3) -> f64 {
        let n = self.path.len() - 1;
        self.path
            .windows(2)
            .enumerate()
            .map(|(s, w)| {
                let (a, b) = (w[0], w[1]);
                let ab = b - a;
                let raw = (p - a).dot(&ab) / ab.norm_squared();
                let lo = if s == 0 { f64::NEG_INFINITY } else { 0.0 };
                let hi = if s + 1 == n { f64::INFINITY } else { 1.0 };
                (p - (a + ab * raw.clamp(lo, hi))).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Unit axis tangent at the polyline point nearest to `p`.
    pub fn tangent_near(&self, p: &Vec3) -> Vec3 {
        let mut best = (f64::INFINITY, Vec3::x());
        for w in self.path.windows(2) {
            let ab = w[1] - w[0];
            let t = ((p - w[0]).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            let d = (p - (w[0] + ab * t)).norm();
            if d < best.0 {
                best = (d, ab.normalize());
            }
        }
        best.1
    }

    pub fn validate(&self, resolution: f64) -> Result<(), GridError> {
        let size = self.cross_section.size();
        if !(size.is_finite() && size > 0.0) {
            return Err(GridError::InvalidTunnel(format!(
                "cross-section size {size}"
            )));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(GridError::BadResolution(resolution));
        }
        if size <= 2.0 * resolution || resolution > size / 6.0 {
            return Err(GridError::TooCoarse { resolution, size });
        }
        if self.wall_thickness == 0 {
            return Err(GridError::InvalidTunnel(
                "wall thickness must be >= 1 voxel".into(),
            ));
        }
        if !(self.apron >= 1.0) {
            return Err(GridError::InvalidTunnel(format!(
                "apron must be at least 1 m, got {}",
                self.apron
            )));
        }
        if self.path.len() < 2 || self.length() <= 0.0 {
            return Err(GridError::InvalidTunnel("path has zero length".into()));
        }
        for (i, a) in self.path.iter().enumerate() {
            if !a.iter().all(|c| c.is_finite()) {
                return Err(GridError::InvalidTunnel(format!(
                    "path knot {i} is not finite"
                )));
            }
            for (j, b) in self.path.iter().enumerate().skip(i + 1) {
                if (a - b).norm() < 1e-9 {
                    return Err(GridError::InvalidTunnel(format!(
                        "path knots {i} and {j} coincide"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Lateral/vertical completion of a tangent, world up preferred.
pub(crate) fn cross_frame(tangent: &Vec3) -> (Vec3, Vec3) {
    let up = Vec3::z();
    let mut lateral = up.cross(tangent);
    if lateral.norm() < 1e-6 {
        lateral = tangent.cross(&Vec3::x());
    }
    let lateral = lateral.normalize();
    let vertical = tangent.cross(&lateral).normalize();
    (lateral, vertical)
}

/// Rasterizes `spec` at `resolution`.
///
/// Free space inside the swept cross-section, a closed wall shell of
/// `wall_thickness` voxels around it, and free space everywhere else
/// including the aprons past both open ends. The entrance knot lands on a
/// voxel center.
pub fn gen_tunnel_map(spec: &TunnelSpec, resolution: f64) -> Result<OccupancyGrid, GridError> {
    spec.validate(resolution)?;
    let inner = spec.cross_section.half_size();
    let shell = inner + spec.wall_thickness as f64 * resolution;
    let reach = match spec.cross_section {
        CrossSection::Circle { .. } => shell,
        CrossSection::Square { .. } => shell * std::f64::consts::SQRT_2,
    } + resolution;

    let start = spec.entrance();
    let mut lo = start;
    let mut hi = start;
    let mut grow = |p: Vec3| {
        lo = lo.inf(&p);
        hi = hi.sup(&p);
    };
    for p in &spec.path {
        grow(*p);
    }
    grow(start - spec.entrance_direction() * spec.apron);
    grow(spec.exit() + spec.exit_direction() * spec.apron);
    let margin = Vec3::repeat(reach + 2.0 * resolution);
    lo -= margin;
    hi += margin;

    let mut origin = Vec3::zeros();
    let mut dims = [0usize; 3];
    for a in 0..3 {
        let k = ((start[a] - lo[a]) / resolution).ceil();
        origin[a] = start[a] - (k + 0.5) * resolution;
        dims[a] = ((hi[a] - origin[a]) / resolution).ceil() as usize + 1;
    }
    let mut grid = OccupancyGrid::new(origin, resolution, dims)?;
    let geometry = *grid.geometry();

    // Per voxel: (euclidean distance to nearest axis point, cross-section
    // distance measured in that segment's frame, beyond an open end).
    let mut best: Vec<(f64, f64, bool)> =
        vec![(f64::INFINITY, f64::INFINITY, true); geometry.len()];
    let nseg = spec.path.len() - 1;
    for (s, w) in spec.path.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let ab = b - a;
        let len2 = ab.norm_squared();
        let tangent = ab / len2.sqrt();
        let (lat, vert) = cross_frame(&tangent);
        let seg_lo = a.inf(&b) - Vec3::repeat(reach);
        let seg_hi = a.sup(&b) + Vec3::repeat(reach);
        let mut range = [(0usize, 0usize); 3];
        for ax in 0..3 {
            let l = ((seg_lo[ax] - origin[ax]) / resolution - 0.5)
                .floor()
                .max(0.0) as usize;
            let h = (((seg_hi[ax] - origin[ax]) / resolution - 0.5)
                .ceil()
                .max(0.0) as usize)
                .min(dims[ax] - 1);
            range[ax] = (l, h);
        }
        for k in range[2].0..=range[2].1 {
            for j in range[1].0..=range[1].1 {
                for i in range[0].0..=range[0].1 {
                    let c = geometry.center([i, j, k]);
                    let raw_t = (c - a).dot(&ab) / len2;
                    let t = raw_t.clamp(0.0, 1.0);
                    let off = c - (a + ab * t);
                    let dist = off.norm();
                    let idx = geometry.index([i, j, k]);
                    if dist < best[idx].0 {
                        let cross = match spec.cross_section {
                            CrossSection::Circle { .. } => dist,
                            CrossSection::Square { .. } => {
                                off.dot(&lat).abs().max(off.dot(&vert).abs())
                            }
                        };
                        let beyond = (s == 0 && raw_t < 0.0) || (s + 1 == nseg && raw_t > 1.0);
                        best[idx] = (dist, cross, beyond);
                    }
                }
            }
        }
    }
    for (idx, &(_, cross, beyond)) in best.iter().enumerate() {
        if !beyond && cross >= inner - 1e-9 && cross < shell - 1e-9 {
            let v = geometry.voxel_of_index(idx);
            grid.set(v, true);
        }
    }
    Ok(grid)
}
