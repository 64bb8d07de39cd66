//! Voxel occupancy maps and their Euclidean distance fields.
//!
//! Voxel `(i, j, k)` covers the axis-aligned box starting at
//! `origin + (i, j, k) * resolution`; its center sits half a voxel further in.
//! Storage is x-fastest: `index = i + nx * (j + ny * k)`.

mod edf;
pub mod io;
pub mod tunnel;

pub use edf::{compute_edf, DistanceField};
pub use tunnel::{gen_tunnel_map, CrossSection, PathBuilder, TunnelSpec};

use crate::Vec3;

/// Errors raised by map construction and distance-field queries.
#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GridError {
    #[error("resolution must be positive and finite, got {0}")]
    BadResolution(f64),
    #[error("grid dimensions must all be >= 1, got {0:?}")]
    BadDims([usize; 3]),
    #[error("occupancy length {got} does not match dims (expected {expected})")]
    SizeMismatch { expected: usize, got: usize },
    #[error("distance field undefined: grid has no occupied voxel")]
    NoObstacles,
    #[error("query point ({x:.4}, {y:.4}, {z:.4}) lies outside the interpolation domain")]
    OutOfBounds { x: f64, y: f64, z: f64 },
    #[error("invalid tunnel spec: {0}")]
    InvalidTunnel(String),
    #[error("resolution {resolution} too coarse for cross-section {size} (need <= size/6)")]
    TooCoarse { resolution: f64, size: f64 },
    #[error("map parse error: {0}")]
    Parse(String),
}

pub(crate) fn out_of_bounds(p: &Vec3) -> GridError {
    GridError::OutOfBounds {
        x: p.x,
        y: p.y,
        z: p.z,
    }
}

/// Shared placement of a voxel lattice in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    pub origin: Vec3,
    pub resolution: f64,
    pub dims: [usize; 3],
}

impl GridGeometry {
    pub fn new(origin: Vec3, resolution: f64, dims: [usize; 3]) -> Result<Self, GridError> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(GridError::BadResolution(resolution));
        }
        if dims.contains(&0) {
            return Err(GridError::BadDims(dims));
        }
        Ok(Self {
            origin,
            resolution,
            dims,
        })
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, v: [usize; 3]) -> usize {
        v[0] + self.dims[0] * (v[1] + self.dims[1] * v[2])
    }

    #[inline]
    pub fn voxel_of_index(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    /// World position of a voxel center.
    #[inline]
    pub fn center(&self, v: [usize; 3]) -> Vec3 {
        self.origin
            + Vec3::new(
                (v[0] as f64 + 0.5) * self.resolution,
                (v[1] as f64 + 0.5) * self.resolution,
                (v[2] as f64 + 0.5) * self.resolution,
            )
    }

    /// Voxel containing `p`, or `None` outside the grid.
    pub fn voxel(&self, p: &Vec3) -> Option<[usize; 3]> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let u = ((p[a] - self.origin[a]) / self.resolution).floor();
            if !(u >= 0.0 && u < self.dims[a] as f64) {
                return None;
            }
            out[a] = u as usize;
        }
        Some(out)
    }

    /// Upper corner of the grid box.
    pub fn max_corner(&self) -> Vec3 {
        self.origin
            + Vec3::new(
                self.dims[0] as f64 * self.resolution,
                self.dims[1] as f64 * self.resolution,
                self.dims[2] as f64 * self.resolution,
            )
    }
}

/// Boolean voxel occupancy over a [`GridGeometry`].
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    geometry: GridGeometry,
    occupied: Vec<bool>,
}

impl OccupancyGrid {
    /// All-free grid.
    pub fn new(origin: Vec3, resolution: f64, dims: [usize; 3]) -> Result<Self, GridError> {
        let geometry = GridGeometry::new(origin, resolution, dims)?;
        Ok(Self {
            occupied: vec![false; geometry.len()],
            geometry,
        })
    }

    pub fn from_cells(
        origin: Vec3,
        resolution: f64,
        dims: [usize; 3],
        occupied: Vec<bool>,
    ) -> Result<Self, GridError> {
        let geometry = GridGeometry::new(origin, resolution, dims)?;
        if occupied.len() != geometry.len() {
            return Err(GridError::SizeMismatch {
                expected: geometry.len(),
                got: occupied.len(),
            });
        }
        Ok(Self { geometry, occupied })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn origin(&self) -> Vec3 {
        self.geometry.origin
    }

    pub fn resolution(&self) -> f64 {
        self.geometry.resolution
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn cells(&self) -> &[bool] {
        &self.occupied
    }

    pub fn is_occupied(&self, v: [usize; 3]) -> bool {
        self.occupied[self.geometry.index(v)]
    }

    pub fn set(&mut self, v: [usize; 3], occupied: bool) {
        let i = self.geometry.index(v);
        self.occupied[i] = occupied;
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }
}
