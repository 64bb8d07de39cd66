//! Motion planning for quadrotor flight through narrow tunnels.
//!
//! The planner walks the ridge of a Euclidean distance field to extract the
//! tunnel center line, smooths it as a uniform B-spline, and hands the result
//! to a minimum-jerk generator that pins the start state exactly. A kinematic
//! simulator closes the loop with 10 Hz replanning.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bspline;
pub mod centerline;
pub mod geometry;
pub mod grid;
pub mod minjerk;
pub mod mission;
pub mod state;
pub mod traj_opt;

/// World-frame vector in meters (or m/s, m/s², depending on context).
pub type Vec3 = nalgebra::Vector3<f64>;

pub use bspline::UniformBSpline;
pub use centerline::{extract_centerline, Centerline, CenterlineConfig};
pub use grid::{
    compute_edf, gen_tunnel_map, CrossSection, DistanceField, OccupancyGrid, TunnelSpec,
};
pub use minjerk::PiecewisePolyTrajectory;
pub use mission::{EntranceEstimate, MissionConfig, Phase, RunMetrics, SimConfig, SimLog};
pub use state::BoundaryState;
pub use traj_opt::CostWeights;
