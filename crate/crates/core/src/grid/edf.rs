use super::{out_of_bounds, GridError, GridGeometry, OccupancyGrid};
use crate::Vec3;

/// Per-voxel Euclidean distance (m) from each voxel center to the nearest
/// occupied voxel center. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    geometry: GridGeometry,
    distance: Vec<f64>,
}

/// Exact Euclidean distance transform of `grid`.
///
/// Separable lower-envelope-of-parabolas transform run once per axis on
/// squared voxel distances, so every value is an exact integer before the
/// final square root.
pub fn compute_edf(grid: &OccupancyGrid) -> Result<DistanceField, GridError> {
    let geometry = *grid.geometry();
    if !grid.cells().iter().any(|&o| o) {
        return Err(GridError::NoObstacles);
    }
    let [nx, ny, nz] = geometry.dims;
    let mut sq: Vec<f64> = grid
        .cells()
        .iter()
        .map(|&o| if o { 0.0 } else { f64::INFINITY })
        .collect();

    let longest = nx.max(ny).max(nz);
    let mut line = vec![0.0; longest];
    let mut out = vec![0.0; longest];
    let mut scratch = Envelope::with_capacity(longest);

    // x lines
    for k in 0..nz {
        for j in 0..ny {
            let base = nx * (j + ny * k);
            line[..nx].copy_from_slice(&sq[base..base + nx]);
            scratch.transform(&line[..nx], &mut out[..nx]);
            sq[base..base + nx].copy_from_slice(&out[..nx]);
        }
    }
    // y lines
    for k in 0..nz {
        for i in 0..nx {
            for j in 0..ny {
                line[j] = sq[i + nx * (j + ny * k)];
            }
            scratch.transform(&line[..ny], &mut out[..ny]);
            for j in 0..ny {
                sq[i + nx * (j + ny * k)] = out[j];
            }
        }
    }
    // z lines
    for j in 0..ny {
        for i in 0..nx {
            for k in 0..nz {
                line[k] = sq[i + nx * (j + ny * k)];
            }
            scratch.transform(&line[..nz], &mut out[..nz]);
            for k in 0..nz {
                sq[i + nx * (j + ny * k)] = out[k];
            }
        }
    }

    let res = geometry.resolution;
    let distance = sq.into_iter().map(|s| s.sqrt() * res).collect();
    Ok(DistanceField { geometry, distance })
}

/// Reusable buffers for the 1-D squared distance transform.
struct Envelope {
    sites: Vec<usize>,
    bounds: Vec<f64>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Self {
            sites: Vec::with_capacity(n),
            bounds: Vec::with_capacity(n + 1),
        }
    }

    /// `out[q] = min_p (q - p)^2 + f[p]` over finite `f[p]`.
    fn transform(&mut self, f: &[f64], out: &mut [f64]) {
        self.sites.clear();
        self.bounds.clear();
        for (q, &fq) in f.iter().enumerate() {
            if !fq.is_finite() {
                continue;
            }
            let q_f = q as f64;
            loop {
                match self.sites.last() {
                    None => {
                        self.sites.push(q);
                        self.bounds.push(f64::NEG_INFINITY);
                        break;
                    }
                    Some(&p) => {
                        let p_f = p as f64;
                        let s = ((fq + q_f * q_f) - (f[p] + p_f * p_f)) / (2.0 * (q_f - p_f));
                        if s <= *self.bounds.last().unwrap() {
                            self.sites.pop();
                            self.bounds.pop();
                        } else {
                            self.sites.push(q);
                            self.bounds.push(s);
                            break;
                        }
                    }
                }
            }
        }
        if self.sites.is_empty() {
            out.fill(f64::INFINITY);
            return;
        }
        let mut k = 0;
        for (q, o) in out.iter_mut().enumerate() {
            let q_f = q as f64;
            while k + 1 < self.sites.len() && self.bounds[k + 1] < q_f {
                k += 1;
            }
            let p = self.sites[k];
            let dq = q_f - p as f64;
            *o = dq * dq + f[p];
        }
    }
}

impl DistanceField {
    /// Wraps precomputed distances. Intended for tests and tooling.
    pub fn from_raw(geometry: GridGeometry, distance: Vec<f64>) -> Result<Self, GridError> {
        if distance.len() != geometry.len() {
            return Err(GridError::SizeMismatch {
                expected: geometry.len(),
                got: distance.len(),
            });
        }
        Ok(Self { geometry, distance })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn resolution(&self) -> f64 {
        self.geometry.resolution
    }

    pub fn values(&self) -> &[f64] {
        &self.distance
    }

    /// Stored distance at a voxel.
    pub fn at_voxel(&self, v: [usize; 3]) -> f64 {
        self.distance[self.geometry.index(v)]
    }

    /// Continuous coordinate in voxel-center units.
    fn lattice_coord(&self, p: &Vec3) -> Option<[(usize, f64); 3]> {
        let g = &self.geometry;
        let mut out = [(0usize, 0.0f64); 3];
        for a in 0..3 {
            let u = (p[a] - g.origin[a]) / g.resolution - 0.5;
            let n = g.dims[a];
            if !u.is_finite() {
                return None;
            }
            if n == 1 {
                if u.abs() > 0.5 {
                    return None;
                }
                out[a] = (0, 0.0);
                continue;
            }
            let hi = (n - 1) as f64;
            if u < 0.0 || u > hi {
                return None;
            }
            let i0 = (u.floor() as usize).min(n - 2);
            out[a] = (i0, u - i0 as f64);
        }
        Some(out)
    }

    /// True when `p` lies in the interpolation domain (between the outermost
    /// voxel centers).
    pub fn contains(&self, p: &Vec3) -> bool {
        self.lattice_coord(p).is_some()
    }

    /// Trilinear interpolation of the stored distances.
    pub fn edf_at(&self, p: &Vec3) -> Result<f64, GridError> {
        let c = self.lattice_coord(p).ok_or_else(|| out_of_bounds(p))?;
        Ok(self.interpolate(c))
    }

    fn interpolate(&self, c: [(usize, f64); 3]) -> f64 {
        let g = &self.geometry;
        let step = |a: usize| usize::from(g.dims[a] > 1);
        let [(i, fx), (j, fy), (k, fz)] = c;
        let (sx, sy, sz) = (step(0), step(1), step(2));
        let d = |di: usize, dj: usize, dk: usize| {
            self.distance[g.index([i + di * sx, j + dj * sy, k + dk * sz])]
        };
        let c00 = d(0, 0, 0) * (1.0 - fx) + d(1, 0, 0) * fx;
        let c10 = d(0, 1, 0) * (1.0 - fx) + d(1, 1, 0) * fx;
        let c01 = d(0, 0, 1) * (1.0 - fx) + d(1, 0, 1) * fx;
        let c11 = d(0, 1, 1) * (1.0 - fx) + d(1, 1, 1) * fx;
        let c0 = c00 * (1.0 - fy) + c10 * fy;
        let c1 = c01 * (1.0 - fy) + c11 * fy;
        c0 * (1.0 - fz) + c1 * fz
    }

    /// Central-difference gradient of [`Self::edf_at`] with step
    /// `resolution / 2` per axis.
    pub fn edf_gradient(&self, p: &Vec3) -> Result<Vec3, GridError> {
        let h = 0.5 * self.geometry.resolution;
        let mut g = Vec3::zeros();
        for a in 0..3 {
            if self.geometry.dims[a] == 1 {
                continue;
            }
            let mut fwd = *p;
            let mut back = *p;
            fwd[a] += h;
            back[a] -= h;
            let hi = self.edf_at(&fwd).map_err(|_| out_of_bounds(p))?;
            let lo = self.edf_at(&back).map_err(|_| out_of_bounds(p))?;
            g[a] = (hi - lo) / (2.0 * h);
        }
        Ok(g)
    }

    /// Value and gradient together; errors if the stencil leaves the grid.
    pub fn value_and_gradient(&self, p: &Vec3) -> Result<(f64, Vec3), GridError> {
        let g = self.edf_gradient(p)?;
        Ok((self.edf_at(p)?, g))
    }

    /// `p` projected into the interpolation domain.
    pub fn clamp_point(&self, p: &Vec3) -> Vec3 {
        let g = &self.geometry;
        let mut q = *p;
        for a in 0..3 {
            let lo = g.origin[a] + 0.5 * g.resolution;
            let hi = g.origin[a] + (g.dims[a] as f64 - 0.5) * g.resolution;
            q[a] = q[a].clamp(lo, hi);
        }
        q
    }
}
