//! Center-line extraction by walking the ridge of the distance field.
//!
//! Each step re-centers the current point in the plane normal to the travel
//! direction, probes the wall with eight sphere samples (one per octant of a
//! local frame), pushes them onto the wall, and takes the normal of the
//! least-squares plane through the wall points as the next travel direction.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::bspline::{SplineError, UniformBSpline};
use crate::geometry::{fit_plane_oriented, PlaneFitError};
use crate::grid::{DistanceField, GridError};
use crate::Vec3;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CenterlineError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error("direction must be a unit vector (norm {0})")]
    NonUnitDirection(f64),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("seed point is not in free space (edf {0})")]
    SeedNotFree(f64),
    #[error("start velocity is zero")]
    ZeroVelocity,
    #[error("sphere radius {radius} does not exceed wall epsilon {epsilon}")]
    DegenerateSphere { radius: f64, epsilon: f64 },
    #[error("wall descent did not converge after {0} iterations")]
    DescentNotConverged(usize),
    #[error("plane fit failed: {0}")]
    PlaneFit(#[from] PlaneFitError),
    #[error("direction refit failed twice in a row at waypoint {0}")]
    Aborted(usize),
    #[error("need at least 2 waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("desired speed must be positive, got {0}")]
    BadSpeed(f64),
    #[error("only cubic center lines are supported, got degree {0}")]
    UnsupportedDegree(usize),
}

/// How sphere probes are placed inside their octants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OctantSampling {
    /// One seeded random direction per octant.
    Random,
    /// The octant bisectors `(±1, ±1, ±1) / √3`; fully deterministic.
    Bisector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CenterlineConfig {
    /// Tunnel dimension `D` (m).
    pub tunnel_dim: f64,
    /// Search step `S` (m).
    pub step: f64,
    /// Plan range `R_p` (m).
    pub plan_range: f64,
    /// Stop ascent once the in-plane gradient norm falls below this.
    pub ascent_tolerance: f64,
    pub max_ascent_iters: usize,
    pub max_descent_iters: usize,
    /// A descended probe counts as on the wall once its EDF is at most this (m).
    pub wall_epsilon: f64,
    /// Slack added to `D / 2` in the exit test, absorbing voxelization (m).
    pub exit_margin: f64,
    /// Refit directions turning more than this (rad) are discarded.
    pub max_turn: f64,
    /// Re-center the seed point before it becomes the first waypoint.
    pub center_seed: bool,
    pub sampling: OctantSampling,
    pub seed: u64,
    /// Speed used to time-parameterize the extracted spline (m/s).
    pub desired_speed: f64,
    pub degree: usize,
}

impl Default for CenterlineConfig {
    fn default() -> Self {
        Self {
            tunnel_dim: 0.6,
            step: 0.1,
            plan_range: 2.0,
            ascent_tolerance: 1e-3,
            max_ascent_iters: 50,
            max_descent_iters: 60,
            wall_epsilon: 0.02,
            exit_margin: 0.05,
            max_turn: 25f64.to_radians(),
            center_seed: true,
            sampling: OctantSampling::Random,
            seed: 0,
            desired_speed: 1.0,
            degree: 3,
        }
    }
}

impl CenterlineConfig {
    pub fn validate(&self, resolution: f64) -> Result<(), CenterlineError> {
        let bad = |m: &str| Err(CenterlineError::Config(m.to_string()));
        if !(self.step > 0.0 && self.step < self.tunnel_dim) {
            return bad("need 0 < step < tunnel_dim");
        }
        if !(self.plan_range > self.step) {
            return bad("need plan_range > step");
        }
        if !(self.wall_epsilon > 0.0 && self.wall_epsilon < resolution) {
            return bad("need 0 < wall_epsilon < resolution");
        }
        if !(self.desired_speed > 0.0) {
            return Err(CenterlineError::BadSpeed(self.desired_speed));
        }
        if self.degree != 3 {
            return Err(CenterlineError::UnsupportedDegree(self.degree));
        }
        if self.max_ascent_iters == 0 || self.max_descent_iters == 0 {
            return bad("iteration limits must be positive");
        }
        Ok(())
    }

    /// EDF above which a point counts as outside the tunnel.
    pub fn exit_threshold(&self) -> f64 {
        0.5 * self.tunnel_dim + self.exit_margin
    }
}

/// Why the walk stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// The next point's EDF exceeded half the tunnel dimension.
    ExitedTunnel,
    /// Accumulated distance exceeded the plan range.
    RangeReached,
    /// The next step would leave the map; the walk was truncated.
    LeftGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Centerline {
    pub waypoints: Vec<Vec3>,
    /// EDF at each waypoint (m).
    pub clearance: Vec<f64>,
    /// Travel direction used to step away from each waypoint.
    pub directions: Vec<Vec3>,
    /// Through the waypoints; through the seed and the exit point when the
    /// walk exits after the seed.
    pub spline: UniformBSpline,
    pub termination: Termination,
    /// The first ridge point found outside the tunnel, if the walk exited.
    pub exit_point: Option<Vec3>,
}

fn check_unit(dir: &Vec3) -> Result<(), CenterlineError> {
    let n = dir.norm();
    if (n - 1.0).abs() > 1e-9 {
        return Err(CenterlineError::NonUnitDirection(n));
    }
    Ok(())
}

/// Projected-gradient ascent of the EDF in the plane through `start` normal
/// to `dir`.
pub fn gradient_ascend(
    field: &DistanceField,
    start: &Vec3,
    dir: &Vec3,
    cfg: &CenterlineConfig,
) -> Result<Vec3, CenterlineError> {
    check_unit(dir)?;
    let res = field.resolution();
    let mut x = *start;
    let mut f = field.edf_at(&x)?;
    let mut step = res;
    let min_step = 1e-4 * res;
    for _ in 0..cfg.max_ascent_iters {
        let Ok(g) = field.edf_gradient(&x) else { break };
        let gp = g - dir * g.dot(dir);
        let gn = gp.norm();
        if gn < cfg.ascent_tolerance {
            break;
        }
        let u = gp / gn;
        let mut accepted = false;
        while step >= min_step {
            let cand = x + u * step;
            match field.edf_at(&cand) {
                Ok(fc) if fc > f => {
                    x = cand;
                    f = fc;
                    accepted = true;
                    break;
                }
                _ => step *= 0.5,
            }
        }
        if !accepted {
            break;
        }
    }
    Ok(x)
}

/// Local frame for octant sampling: x along `dir`, y = dir × up (world x
/// when `dir` is vertical), z = x × y.
pub fn octant_frame(dir: &Vec3) -> [Vec3; 3] {
    let mut y = dir.cross(&Vec3::z());
    if y.norm() < 1e-6 {
        y = Vec3::x();
    }
    let y = y.normalize();
    let z = dir.cross(&y).normalize();
    [*dir, y, z]
}

/// Sign pattern of octant `k`: bit 0 → x, bit 1 → y, bit 2 → z.
pub fn octant_signs(k: usize) -> [f64; 3] {
    [0, 1, 2].map(|b| if (k >> b) & 1 == 1 { -1.0 } else { 1.0 })
}

fn octant_direction(
    frame: &[Vec3; 3],
    k: usize,
    sampling: OctantSampling,
    rng: &mut ChaCha8Rng,
) -> Vec3 {
    let signs = octant_signs(k);
    let local = match sampling {
        OctantSampling::Bisector => Vec3::repeat(1.0),
        OctantSampling::Random => loop {
            let v = Vec3::new(
                rng.sample::<f64, _>(StandardNormal).abs(),
                rng.sample::<f64, _>(StandardNormal).abs(),
                rng.sample::<f64, _>(StandardNormal).abs(),
            );
            if v.norm() > 1e-9 {
                break v;
            }
        },
    };
    let local = local.normalize();
    (frame[0] * (signs[0] * local.x)
        + frame[1] * (signs[1] * local.y)
        + frame[2] * (signs[2] * local.z))
        .normalize()
}

/// Eight points on the sphere of radius `EDF(p)` around `p`, one per octant
/// of [`octant_frame`], in octant order.
pub fn sphere_sample(
    field: &DistanceField,
    p: &Vec3,
    dir: &Vec3,
    cfg: &CenterlineConfig,
    rng: &mut ChaCha8Rng,
) -> Result<[Vec3; 8], CenterlineError> {
    check_unit(dir)?;
    let radius = field.edf_at(p)?;
    if radius <= cfg.wall_epsilon {
        return Err(CenterlineError::DegenerateSphere {
            radius,
            epsilon: cfg.wall_epsilon,
        });
    }
    let frame = octant_frame(dir);
    let mut out = [Vec3::zeros(); 8];
    for (k, o) in out.iter_mut().enumerate() {
        *o = p + octant_direction(&frame, k, cfg.sampling, rng) * radius;
    }
    Ok(out)
}

/// Backtracking descent of the EDF until `EDF <= wall_epsilon`.
///
/// `tie_break` is the nudge direction used when the start sits on a ridge
/// where the gradient vanishes.
pub fn descend_to_wall(
    field: &DistanceField,
    q: &Vec3,
    tie_break: &Vec3,
    cfg: &CenterlineConfig,
) -> Result<Vec3, CenterlineError> {
    let res = field.resolution();
    let mut x = *q;
    let mut f = field.edf_at(&x)?;
    if f <= cfg.wall_epsilon {
        return Ok(x);
    }
    if field.edf_gradient(&x)?.norm() < 1e-6 && tie_break.norm() > 0.0 {
        let nudged = x + tie_break.normalize() * (0.1 * res);
        f = field.edf_at(&nudged)?;
        x = nudged;
    }
    for _ in 0..cfg.max_descent_iters {
        if f <= cfg.wall_epsilon {
            return Ok(x);
        }
        let g = field.edf_gradient(&x)?;
        let gn = g.norm();
        if gn < 1e-12 {
            break;
        }
        let u = -g / gn;
        let mut step = f.max(cfg.wall_epsilon);
        let mut moved = false;
        for _ in 0..30 {
            let cand = x + u * step;
            match field.edf_at(&cand) {
                Ok(fc) if fc < f => {
                    x = cand;
                    f = fc;
                    moved = true;
                    break;
                }
                _ => step *= 0.5,
            }
        }
        if !moved {
            break;
        }
    }
    if f <= cfg.wall_epsilon {
        Ok(x)
    } else {
        Err(CenterlineError::DescentNotConverged(cfg.max_descent_iters))
    }
}

/// Descent of the EDF restricted to the sphere of `radius` around `center`.
///
/// For a sphere inscribed in the tunnel the minimizers form the ring where
/// the sphere touches the wall, which lies in the tunnel's cross-section
/// plane. Runs to a stationary point: stopping early at a small EDF would
/// leave probes spread around the ring and tilt the fitted plane.
pub fn descend_on_sphere(
    field: &DistanceField,
    q: &Vec3,
    center: &Vec3,
    radius: f64,
    cfg: &CenterlineConfig,
) -> Result<Vec3, CenterlineError> {
    let res = field.resolution();
    let project = |x: Vec3| center + (x - center).normalize() * radius;
    let mut x = project(*q);
    let mut f = field.edf_at(&x)?;
    let min_step = 1e-3 * res;
    let mut step = 0.5 * radius;
    for _ in 0..cfg.max_descent_iters {
        let g = field.edf_gradient(&x)?;
        let n = (x - center) / radius;
        let gt = g - n * g.dot(&n);
        let gn = gt.norm();
        if gn < 1e-9 {
            return Ok(x);
        }
        let u = -gt / gn;
        let mut moved = false;
        while step >= min_step {
            let cand = project(x + u * step);
            match field.edf_at(&cand) {
                Ok(fc) if fc < f => {
                    x = cand;
                    f = fc;
                    moved = true;
                    step = (step * 2.0).min(0.5 * radius);
                    break;
                }
                _ => step *= 0.5,
            }
        }
        if !moved {
            return Ok(x);
        }
    }
    Err(CenterlineError::DescentNotConverged(cfg.max_descent_iters))
}

/// Plane-fit normal of wall points, oriented along `dir`.
pub fn fit_plane_normal(points: &[Vec3], dir: &Vec3) -> Result<Vec3, CenterlineError> {
    Ok(fit_plane_oriented(points, dir)?.normal)
}

/// Probes the wall around `p` and refits the travel direction. Probes
/// descend on the inscribed sphere; failed octants are resampled once and at
/// least six wall points are required.
pub fn refit_direction(
    field: &DistanceField,
    p: &Vec3,
    dir: &Vec3,
    cfg: &CenterlineConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec3, CenterlineError> {
    let samples = sphere_sample(field, p, dir, cfg, rng)?;
    let radius = field.edf_at(p)?;
    let frame = octant_frame(dir);
    let mut wall = Vec::with_capacity(8);
    for (k, s) in samples.iter().enumerate() {
        match descend_on_sphere(field, s, p, radius, cfg) {
            Ok(w) => wall.push(w),
            Err(_) => {
                let retry = p + octant_direction(&frame, k, cfg.sampling, rng) * radius;
                if let Ok(w) = descend_on_sphere(field, &retry, p, radius, cfg) {
                    wall.push(w);
                }
            }
        }
    }
    if wall.len() < 6 {
        return Err(CenterlineError::DescentNotConverged(cfg.max_descent_iters));
    }
    fit_plane_normal(&wall, dir)
}

/// Walks the tunnel ridge from seed `start` with initial velocity `velocity`.
pub fn extract_centerline(
    field: &DistanceField,
    start: &Vec3,
    velocity: &Vec3,
    cfg: &CenterlineConfig,
) -> Result<Centerline, CenterlineError> {
    cfg.validate(field.resolution())?;
    let speed = velocity.norm();
    if !(speed > 0.0) {
        return Err(CenterlineError::ZeroVelocity);
    }
    let seed_edf = field.edf_at(start)?;
    if seed_edf <= 0.0 {
        return Err(CenterlineError::SeedNotFree(seed_edf));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dir = velocity / speed;
    let first = if cfg.center_seed {
        gradient_ascend(field, start, &dir, cfg)?
    } else {
        *start
    };

    let mut waypoints = vec![first];
    let mut clearance = vec![field.edf_at(&first)?];
    let mut directions = vec![dir];
    let mut exit_point = None;
    let mut failures = 0usize;
    let exit_threshold = cfg.exit_threshold();
    let max_steps = (cfg.plan_range / (0.2 * cfg.step)).ceil() as usize + 8;

    let mut distance = 0.0;
    let mut termination = Termination::LeftGrid;
    let mut p = match field.edf_at(&(first + dir * cfg.step)) {
        Ok(_) => Some(gradient_ascend(
            field,
            &(first + dir * cfg.step),
            &dir,
            cfg,
        )?),
        Err(_) => None,
    };
    for _ in 0..max_steps {
        let Some(cur) = p else {
            termination = Termination::LeftGrid;
            break;
        };
        let d = field.edf_at(&cur)?;
        if d > exit_threshold {
            termination = Termination::ExitedTunnel;
            exit_point = Some(cur);
            break;
        }
        if distance > cfg.plan_range {
            termination = Termination::RangeReached;
            break;
        }
        waypoints.push(cur);
        clearance.push(d);

        match refit_direction(field, &cur, &dir, cfg, &mut rng) {
            Ok(n) if n.dot(&dir).clamp(-1.0, 1.0).acos() <= cfg.max_turn => {
                dir = n;
                failures = 0;
            }
            Ok(_) => {}
            Err(_) => {
                failures += 1;
                if failures >= 2 {
                    return Err(CenterlineError::Aborted(waypoints.len() - 1));
                }
            }
        }
        directions.push(dir);

        let ahead = cur + dir * cfg.step;
        p = if field.contains(&ahead) && field.edf_gradient(&ahead).is_ok() {
            let next = gradient_ascend(field, &ahead, &dir, cfg)?;
            distance += (next - cur).norm();
            Some(next)
        } else {
            None
        };
        termination = Termination::RangeReached;
    }

    // a walk that exits after the seed still yields a two-point spline
    let spline = match (waypoints.len(), exit_point) {
        (1, Some(x)) => parameterize_bspline(
            &[waypoints[0], x],
            (x - waypoints[0]).norm(),
            cfg.desired_speed,
        )?,
        _ => parameterize_bspline(&waypoints, cfg.step, cfg.desired_speed)?,
    };
    Ok(Centerline {
        waypoints,
        clearance,
        directions,
        spline,
        termination,
        exit_point,
    })
}

/// Cubic uniform B-spline whose knots interpolate `waypoints`, with knot
/// interval `spacing / speed` and zero curvature at both ends.
pub fn parameterize_bspline(
    waypoints: &[Vec3],
    spacing: f64,
    speed: f64,
) -> Result<UniformBSpline, CenterlineError> {
    if !(speed > 0.0) {
        return Err(CenterlineError::BadSpeed(speed));
    }
    let m = waypoints.len();
    if m < 2 {
        return Err(CenterlineError::TooFewWaypoints(m));
    }
    // Q_1 = W_0, Q_m = W_{m-1}; Q_k + 4 Q_{k+1} + Q_{k+2} = 6 W_k inside.
    let mut q = vec![Vec3::zeros(); m + 2];
    q[1] = waypoints[0];
    q[m] = waypoints[m - 1];
    let unknowns = m.saturating_sub(2);
    if unknowns > 0 {
        let mut rhs: Vec<Vec3> = (1..=unknowns).map(|k| waypoints[k] * 6.0).collect();
        rhs[0] -= q[1];
        rhs[unknowns - 1] -= q[m];
        let sol = solve_tridiagonal(1.0, 4.0, 1.0, &rhs);
        q[2..2 + unknowns].copy_from_slice(&sol);
    }
    q[0] = q[1] * 2.0 - q[2];
    q[m + 1] = q[m] * 2.0 - q[m - 1];
    Ok(UniformBSpline::new(q, 3, spacing / speed)?)
}

/// Thomas algorithm for a constant-coefficient tridiagonal system.
fn solve_tridiagonal(sub: f64, diag: f64, sup: f64, rhs: &[Vec3]) -> Vec<Vec3> {
    let n = rhs.len();
    let mut c = vec![0.0; n];
    let mut d = vec![Vec3::zeros(); n];
    c[0] = sup / diag;
    d[0] = rhs[0] / diag;
    for i in 1..n {
        let m = diag - sub * c[i - 1];
        c[i] = sup / m;
        d[i] = (rhs[i] - d[i - 1] * sub) / m;
    }
    let mut x = vec![Vec3::zeros(); n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - x[i + 1] * c[i];
    }
    x
}

/// CSV rows `index,x,y,z,edf`.
pub fn waypoints_csv(waypoints: &[Vec3], clearance: &[f64]) -> String {
    let mut s = String::from("index,x,y,z,edf\n");
    for (i, (w, d)) in waypoints.iter().zip(clearance).enumerate() {
        let _ = writeln!(s, "{i},{:.9},{:.9},{:.9},{:.9}", w.x, w.y, w.z, d);
    }
    s
}

/// Parses the output of [`waypoints_csv`] back into points.
pub fn parse_waypoints_csv(text: &str) -> Result<Vec<Vec3>, String> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 4 {
            return Err(format!("line {}: expected index,x,y,z,edf", ln + 1));
        }
        let v: Result<Vec<f64>, _> = cols[1..4].iter().map(|c| c.trim().parse::<f64>()).collect();
        let v = v.map_err(|e| format!("line {}: {e}", ln + 1))?;
        out.push(Vec3::new(v[0], v[1], v[2]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{compute_edf, gen_tunnel_map, CrossSection, TunnelSpec};
    use std::sync::OnceLock;

    fn straight_field() -> &'static (TunnelSpec, DistanceField) {
        static FIELD: OnceLock<(TunnelSpec, DistanceField)> = OnceLock::new();
        FIELD.get_or_init(|| {
            let spec = TunnelSpec::straight(CrossSection::Circle { diameter: 0.6 }, 6.0);
            let grid = gen_tunnel_map(&spec, 0.05).unwrap();
            let field = compute_edf(&grid).unwrap();
            (spec, field)
        })
    }

    #[test]
    fn ascent_from_axis_stays_put() {
        let (_, field) = straight_field();
        let cfg = CenterlineConfig::default();
        let p = Vec3::new(2.0, 0.0, 0.0);
        let q = gradient_ascend(field, &p, &Vec3::x(), &cfg).unwrap();
        assert!((q - p).norm() < 0.05);
    }

    #[test]
    fn ascent_recenters_offset_start_in_plane() {
        let (_, field) = straight_field();
        let cfg = CenterlineConfig::default();
        for offset in [
            Vec3::new(0.0, 0.1, 0.0),
            Vec3::new(0.0, -0.07, 0.07),
            Vec3::new(0.0, 0.0, -0.1),
        ] {
            let start = Vec3::new(2.0, 0.0, 0.0) + offset;
            let q = gradient_ascend(field, &start, &Vec3::x(), &cfg).unwrap();
            assert!((q - start).dot(&Vec3::x()).abs() < 1e-12);
            assert!((q.y * q.y + q.z * q.z).sqrt() <= 0.05, "{q:?}");
            assert!(field.edf_at(&q).unwrap() >= field.edf_at(&start).unwrap() - 1e-9);
        }
    }

    #[test]
    fn ascent_matches_dense_disc_search() {
        let (_, field) = straight_field();
        let cfg = CenterlineConfig::default();
        let start = Vec3::new(3.02, 0.1, 0.0);
        let q = gradient_ascend(field, &start, &Vec3::x(), &cfg).unwrap();
        // brute force over the normal-plane disc
        let mut best = (f64::NEG_INFINITY, start);
        for i in -60..=60 {
            for j in -60..=60 {
                let c = Vec3::new(start.x, i as f64 * 0.005, j as f64 * 0.005);
                if c.y * c.y + c.z * c.z > 0.09 {
                    continue;
                }
                let d = field.edf_at(&c).unwrap();
                if d > best.0 {
                    best = (d, c);
                }
            }
        }
        assert!((q - best.1).norm() <= 0.05 + 1e-9, "{q:?} vs {:?}", best.1);
    }

    #[test]
    fn ascent_rejects_non_unit_direction() {
        let (_, field) = straight_field();
        let cfg = CenterlineConfig::default();
        let r = gradient_ascend(
            field,
            &Vec3::new(1.0, 0.0, 0.0),
            &Vec3::new(2.0, 0.0, 0.0),
            &cfg,
        );
        assert!(matches!(r, Err(CenterlineError::NonUnitDirection(_))));
    }

    #[test]
    fn sphere_samples_cover_octants() {
        let (_, field) = straight_field();
        let cfg = CenterlineConfig::default();
        let p = Vec3::new(2.0, 0.03, -0.02);
        let dir = Vec3::new(1.0, 0.2, 0.1).normalize();
        let r = field.edf_at(&p).unwrap();
        let frame = octant_frame(&dir);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts = sphere_sample(field, &p, &dir, &cfg, &mut rng).unwrap();
        let mut seen = [false; 8];
        for q in &pts {
            assert!(((q - p).norm() - r).abs() < 1e-9);
            let local = [0, 1, 2].map(|a| (q - p).dot(&frame[a]));
            let k = (0..3)
                .map(|a| usize::from(local[a] < 0.0) << a)
                .sum::<usize>();
            assert!(!seen[k]);
            seen[k] = true;
        }
        assert!(seen.iter().all(|&s| s));
        let mut rng2 = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(
            pts,
            sphere_sample(field, &p, &dir, &cfg, &mut rng2).unwrap()
        );
    }

    #[test]
    fn octant_frame_is_orthonormal() {
        for dir in [
            Vec3::x(),
            Vec3::z(),
            -Vec3::z(),
            Vec3::new(0.3, -0.4, 0.5).normalize(),
        ] {
            let f = octant_frame(&dir);
            for a in 0..3 {
                assert!((f[a].norm() - 1.0).abs() < 1e-12);
                for b in a + 1..3 {
                    assert!(f[a].dot(&f[b]).abs() < 1e-12);
                }
            }
            assert!((f[0].cross(&f[1]) - f[2]).norm() < 1e-12);
        }
    }

    #[test]
    fn sphere_rejects_points_on_wall() {
        let (_, field) = straight_field();
        let cfg = CenterlineConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let on_wall = Vec3::new(2.0, 0.3, 0.0);
        assert!(matches!(
            sphere_sample(field, &on_wall, &Vec3::x(), &cfg, &mut rng),
            Err(CenterlineError::DegenerateSphere { .. })
        ));
    }

    #[test]
    fn descent_reaches_cylinder_surface() {
        let (_, field) = straight_field();
        let cfg = CenterlineConfig::default();
        let wall_fixed = Vec3::new(2.0, 0.3, 0.0);
        assert_eq!(
            descend_to_wall(field, &wall_fixed, &Vec3::y(), &cfg).unwrap(),
            wall_fixed
        );
        for (y, z) in [(0.1, 0.05), (-0.2, 0.1), (0.0, -0.15), (0.12, 0.12)] {
            let q = Vec3::new(2.5, y, z);
            let w = descend_to_wall(field, &q, &Vec3::y(), &cfg).unwrap();
            let r = (w.y * w.y + w.z * w.z).sqrt();
            assert!((r - 0.3).abs() <= 0.05 + 1e-9, "radius {r}");
            // near side: same angular sector as the start
            let cos = Vec3::new(0.0, y, z)
                .normalize()
                .dot(&Vec3::new(0.0, w.y, w.z).normalize());
            assert!(cos > 0.9, "cos {cos}");
        }
    }

    #[test]
    fn descent_from_axis_uses_tie_break() {
        let (_, field) = straight_field();
        let cfg = CenterlineConfig::default();
        let q = Vec3::new(2.0, 0.0, 0.0);
        assert!(field.edf_gradient(&q).unwrap().norm() < 1e-6);
        let w = descend_to_wall(field, &q, &Vec3::new(0.0, 1.0, 1.0), &cfg).unwrap();
        let r = (w.y * w.y + w.z * w.z).sqrt();
        assert!((r - 0.3).abs() <= 0.05 + 1e-9, "radius {r}");
    }

    #[test]
    fn plane_normal_sign_and_noise() {
        use rand_distr::Normal;
        let pts: Vec<Vec3> = (0..8)
            .map(|k| {
                let a = k as f64 * std::f64::consts::TAU / 8.0;
                Vec3::new(a.cos(), a.sin() * 0.5, 3.0)
            })
            .collect();
        assert!((fit_plane_normal(&pts, &Vec3::z()).unwrap() - Vec3::z()).norm() < 1e-12);
        assert!((fit_plane_normal(&pts, &-Vec3::z()).unwrap() + Vec3::z()).norm() < 1e-12);

        // noisy samples: compare with an exhaustive search over small tilts
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noise = Normal::new(0.0, 0.01).unwrap();
        for _ in 0..20 {
            let noisy: Vec<Vec3> = (0..8)
                .map(|_| {
                    Vec3::new(
                        rng.random_range(-0.3..0.3),
                        rng.random_range(-0.3..0.3),
                        rng.sample(noise),
                    )
                })
                .collect();
            let n = fit_plane_normal(&noisy, &Vec3::z()).unwrap();
            let centroid = noisy.iter().sum::<Vec3>() / 8.0;
            let mut best = (f64::INFINITY, Vec3::z());
            for i in -40..=40 {
                for j in -40..=40 {
                    let cand = Vec3::new(i as f64 * 0.002, j as f64 * 0.002, 1.0).normalize();
                    let sse: f64 = noisy
                        .iter()
                        .map(|p| (p - centroid).dot(&cand).powi(2))
                        .sum();
                    if sse < best.0 {
                        best = (sse, cand);
                    }
                }
            }
            let angle = n.dot(&best.1).clamp(-1.0, 1.0).acos().to_degrees();
            assert!(angle < 2.0, "{angle}");
            let truth = n.dot(&Vec3::z()).acos().to_degrees();
            assert!(truth < 10.0);
        }
    }

    #[test]
    fn straight_tunnel_walk_stays_on_axis_and_exits() {
        let (spec, field) = straight_field();
        let cfg = CenterlineConfig {
            plan_range: 10.0,
            ..CenterlineConfig::default()
        };
        let cl = extract_centerline(field, &Vec3::new(0.3, 0.0, 0.0), &Vec3::x(), &cfg).unwrap();
        assert_eq!(cl.termination, Termination::ExitedTunnel);
        for w in &cl.waypoints {
            assert!(spec.distance_to_extended_axis(w) <= 0.075, "{w:?}");
        }
        let exit = cl.exit_point.unwrap();
        assert!(exit.x > 5.9, "{exit:?}");
        for (a, b) in cl.waypoints.iter().zip(cl.waypoints.iter().skip(1)) {
            let sep = (b - a).norm();
            assert!(sep > 0.2 * cfg.step && sep < 2.0 * cfg.step, "{a:?} {b:?}");
        }
    }

    #[test]
    fn short_range_caps_waypoints() {
        let (_, field) = straight_field();
        let cfg = CenterlineConfig {
            plan_range: 0.15,
            ..CenterlineConfig::default()
        };
        let cl = extract_centerline(field, &Vec3::new(2.0, 0.0, 0.0), &Vec3::x(), &cfg).unwrap();
        assert!(
            (2..=3).contains(&cl.waypoints.len()),
            "{}",
            cl.waypoints.len()
        );
        assert_eq!(cl.termination, Termination::RangeReached);
    }

    #[test]
    fn bisector_mode_is_bit_identical() {
        let (_, field) = straight_field();
        let cfg = CenterlineConfig {
            sampling: OctantSampling::Bisector,
            ..CenterlineConfig::default()
        };
        let a = extract_centerline(field, &Vec3::new(1.0, 0.02, 0.0), &Vec3::x(), &cfg).unwrap();
        let b = extract_centerline(field, &Vec3::new(1.0, 0.02, 0.0), &Vec3::x(), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn seed_errors() {
        let (_, field) = straight_field();
        let cfg = CenterlineConfig::default();
        assert!(matches!(
            extract_centerline(field, &Vec3::new(2.0, 0.0, 0.0), &Vec3::zeros(), &cfg),
            Err(CenterlineError::ZeroVelocity)
        ));
        assert!(matches!(
            extract_centerline(field, &Vec3::new(2.0, 0.325, 0.0), &Vec3::x(), &cfg),
            Err(CenterlineError::SeedNotFree(_))
        ));
        assert!(extract_centerline(field, &Vec3::new(100.0, 0.0, 0.0), &Vec3::x(), &cfg).is_err());
    }

    #[test]
    fn parameterization_examples() {
        let s = 0.1;
        let v = 1.3;
        let line: Vec<Vec3> = (0..12)
            .map(|i| {
                Vec3::new(0.2, 0.4, -0.1) + Vec3::new(1.0, 1.0, 0.5).normalize() * s * i as f64
            })
            .collect();
        let spline = parameterize_bspline(&line, s, v).unwrap();
        assert!((spline.dt() - s / v).abs() < 1e-15);
        let (a, b) = spline.domain();
        for i in 1..100 {
            let t = a + (b - a) * i as f64 / 100.0;
            assert!((spline.eval(t, 1).unwrap().norm() - v).abs() < 1e-6);
        }

        let two = parameterize_bspline(&line[..2], s, v).unwrap();
        assert_eq!(two.controls().len(), 4);
        assert!((two.duration() - s / v).abs() < 1e-15);

        assert!(matches!(
            parameterize_bspline(&line, s, 0.0),
            Err(CenterlineError::BadSpeed(_))
        ));
        assert!(matches!(
            parameterize_bspline(&line[..1], s, 1.0),
            Err(CenterlineError::TooFewWaypoints(1))
        ));
    }

    #[test]
    fn parameterization_interpolates_waypoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let n = rng.random_range(3..30);
            let mut p = Vec3::zeros();
            let mut heading = 0.0f64;
            let pts: Vec<Vec3> = (0..n)
                .map(|_| {
                    heading += rng.random_range(-0.3..0.3);
                    p += Vec3::new(heading.cos(), heading.sin(), rng.random_range(-0.2..0.2)) * 0.1;
                    p
                })
                .collect();
            let spline = parameterize_bspline(&pts, 0.1, 0.8).unwrap();
            for (k, w) in pts.iter().enumerate() {
                assert!((spline.knot_state(k).position - w).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let pts = vec![Vec3::new(0.0, 1.0, 2.0), Vec3::new(-0.5, 0.25, 1e-3)];
        let text = waypoints_csv(&pts, &[0.3, 0.29]);
        assert!(text.starts_with("index,x,y,z,edf\n0,"));
        assert_eq!(parse_waypoints_csv(&text).unwrap(), pts);
    }
}
