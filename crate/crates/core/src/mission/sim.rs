//! Fixed-step closed-loop kinematic simulator around [`MissionState`].

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{
    estimate_entrance, EntranceEstimate, MarkerDetection, MissionConfig, MissionError,
    MissionState, Phase, ReplanEvent,
};
use crate::grid::{compute_edf, DistanceField, OccupancyGrid};
use crate::state::BoundaryState;
use crate::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// First-order tracking lag time constant (s); 0 tracks instantly.
    pub lag: f64,
    /// Per-axis standard deviation of the command perturbation (m).
    pub sigma: f64,
    /// When set, the planner only sees obstacles within this radius of the
    /// vehicle's past positions; unseen space is treated as free.
    pub reveal_radius: Option<f64>,
    pub seed: u64,
    /// Loop rate (Hz).
    pub rate: f64,
    /// Collision when the distance field at the executed position drops
    /// below this (m).
    pub vehicle_radius: f64,
    /// Per-axis marker detection noise (m).
    pub marker_noise: f64,
    pub detections_per_marker: usize,
    /// Start distance before the entrance along the tunnel axis (m).
    pub start_offset: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            lag: 0.15,
            sigma: 0.02,
            reveal_radius: None,
            seed: 0,
            rate: 100.0,
            vehicle_radius: 0.2,
            marker_noise: 0.005,
            detections_per_marker: 10,
            start_offset: 1.2,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), MissionError> {
        let bad = |m: String| Err(MissionError::Config(m));
        if !(self.lag >= 0.0 && self.lag.is_finite()) {
            return bad(format!("lag must be >= 0, got {}", self.lag));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be >= 0, got {}", self.sigma));
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return bad(format!("rate must be positive, got {}", self.rate));
        }
        if !(self.vehicle_radius >= 0.0) {
            return bad(format!(
                "vehicle radius must be >= 0, got {}",
                self.vehicle_radius
            ));
        }
        if !(self.marker_noise >= 0.0) {
            return bad(format!(
                "marker noise must be >= 0, got {}",
                self.marker_noise
            ));
        }
        if self.detections_per_marker < 3 {
            return bad("need at least 3 detections per marker".into());
        }
        if let Some(r) = self.reveal_radius {
            if !(r > 0.0) {
                return bad(format!("reveal radius must be positive, got {r}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSample {
    pub t: f64,
    pub phase: Phase,
    pub cmd_position: Vec3,
    pub cmd_velocity: Vec3,
    pub exec_position: Vec3,
    /// Distance field at the executed position (m).
    pub clearance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimStatus {
    Completed,
    Collision {
        t: f64,
        position: Vec3,
        clearance: f64,
    },
    Aborted(String),
    Watchdog(f64),
}

impl SimStatus {
    pub fn is_success(&self) -> bool {
        matches!(self, SimStatus::Completed)
    }

    pub fn label(&self) -> &'static str {
        match self {
            SimStatus::Completed => "completed",
            SimStatus::Collision { .. } => "collision",
            SimStatus::Aborted(_) => "aborted",
            SimStatus::Watchdog(_) => "watchdog",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub samples: Vec<SimSample>,
    pub replans: Vec<ReplanEvent>,
    pub failed_replans: Vec<(f64, String)>,
    pub transitions: Vec<(f64, Phase)>,
    pub entrance: EntranceEstimate,
    pub status: SimStatus,
}

pub const SIM_LOG_HEADER: &str =
    "t,phase,cmd_x,cmd_y,cmd_z,cmd_vx,cmd_vy,cmd_vz,exec_x,exec_y,exec_z,clearance";

impl SimLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.samples.len() * 120);
        s.push_str(SIM_LOG_HEADER);
        s.push('\n');
        for r in &self.samples {
            let _ = writeln!(
                s,
                "{:.4},{},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}",
                r.t,
                r.phase.name(),
                r.cmd_position.x,
                r.cmd_position.y,
                r.cmd_position.z,
                r.cmd_velocity.x,
                r.cmd_velocity.y,
                r.cmd_velocity.z,
                r.exec_position.x,
                r.exec_position.y,
                r.exec_position.z,
                r.clearance
            );
        }
        s
    }

    pub fn min_clearance(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.clearance)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn phases(&self) -> Vec<Phase> {
        self.transitions.iter().map(|&(_, p)| p).collect()
    }

    /// Time from entering the tunnel to the exit transition (s).
    pub fn traversal_time(&self) -> Option<f64> {
        let at = |p| {
            self.transitions
                .iter()
                .find(|(_, q)| *q == p)
                .map(|(t, _)| *t)
        };
        Some(at(Phase::PostTunnel)? - at(Phase::IntraTunnel)?)
    }
}

/// Parses a log written by [`SimLog::to_csv`] back into samples.
pub fn parse_sim_log(text: &str) -> Result<Vec<SimSample>, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == SIM_LOG_HEADER => {}
        Some(h) => return Err(format!("unexpected header `{h}`")),
        None => return Err("empty log".into()),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 12 {
            return Err(format!(
                "row {}: expected 12 fields, got {}",
                i + 1,
                f.len()
            ));
        }
        let num = |k: usize| -> Result<f64, String> {
            f[k].parse()
                .map_err(|_| format!("row {}: bad number `{}`", i + 1, f[k]))
        };
        let v =
            |k: usize| -> Result<Vec3, String> { Ok(Vec3::new(num(k)?, num(k + 1)?, num(k + 2)?)) };
        out.push(SimSample {
            t: num(0)?,
            phase: Phase::parse(f[1])
                .ok_or_else(|| format!("row {}: bad phase `{}`", i + 1, f[1]))?,
            cmd_position: v(2)?,
            cmd_velocity: v(5)?,
            exec_position: v(8)?,
            clearance: num(11)?,
        });
    }
    if out.is_empty() {
        return Err("log has no samples".into());
    }
    Ok(out)
}

/// Four markers on the entrance rim, each seen `per` times with noise from
/// `viewpoint`.
pub fn synthetic_detections(
    truth: &EntranceEstimate,
    rim: f64,
    viewpoint: &Vec3,
    per: usize,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<MarkerDetection> {
    let d = truth.direction;
    let helper = if d.z.abs() < 0.9 {
        Vec3::z()
    } else {
        Vec3::x()
    };
    let u = d.cross(&helper).normalize();
    let w = d.cross(&u);
    let n = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).unwrap();
    let mut out = Vec::with_capacity(4 * per);
    for (id, (a, b)) in [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)]
        .into_iter()
        .enumerate()
    {
        let m = truth.position + (u * a + w * b) * (rim / std::f64::consts::SQRT_2);
        for k in 0..per {
            let e = if noise > 0.0 {
                Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng))
            } else {
                Vec3::zeros()
            };
            out.push(MarkerDetection {
                id: id as u32 + 1,
                position: m + e,
                timestamp: k as f64 * 0.05,
                viewpoint: *viewpoint,
            });
        }
    }
    out
}

struct RevealMap {
    truth: OccupancyGrid,
    known: OccupancyGrid,
    radius: f64,
    dirty: bool,
}

impl RevealMap {
    fn reveal(&mut self, p: &Vec3) {
        let g = *self.truth.geometry();
        let r = self.radius;
        let lo = g.voxel(&g_clamp(&g, &(p - Vec3::repeat(r))));
        let hi = g.voxel(&g_clamp(&g, &(p + Vec3::repeat(r))));
        let (Some(lo), Some(hi)) = (lo, hi) else {
            return;
        };
        for k in lo[2]..=hi[2] {
            for j in lo[1]..=hi[1] {
                for i in lo[0]..=hi[0] {
                    let v = [i, j, k];
                    if self.truth.is_occupied(v)
                        && !self.known.is_occupied(v)
                        && (g.center(v) - p).norm() <= r
                    {
                        self.known.set(v, true);
                        self.dirty = true;
                    }
                }
            }
        }
    }
}

fn g_clamp(g: &crate::grid::GridGeometry, p: &Vec3) -> Vec3 {
    let lo = g.origin;
    let hi = g.max_corner();
    let eps = 1e-9 * g.resolution;
    Vec3::new(
        p.x.clamp(lo.x + eps, hi.x - eps),
        p.y.clamp(lo.y + eps, hi.y - eps),
        p.z.clamp(lo.z + eps, hi.z - eps),
    )
}

/// Watchdog derived from the map extent: three map diagonals at the
/// desired speed plus ten seconds.
pub fn default_max_time(world: &OccupancyGrid, v_des: f64) -> f64 {
    let diag = (world.geometry().max_corner() - world.origin()).norm();
    3.0 * diag / v_des + 10.0
}

/// Flies the full mission in `world` against the true entrance pose. The
/// vehicle starts at rest `start_offset` before the entrance and estimates
/// the entrance from synthetic marker detections.
pub fn simulate(
    world: &OccupancyGrid,
    truth: &EntranceEstimate,
    mission: &MissionConfig,
    sim: &SimConfig,
) -> Result<SimLog, MissionError> {
    sim.validate()?;
    mission.validate(world.resolution())?;
    let true_field = compute_edf(world)?;
    simulate_with_field(world, &true_field, truth, mission, sim)
}

/// [`simulate`] with a precomputed distance field of `world`.
pub fn simulate_with_field(
    world: &OccupancyGrid,
    true_field: &DistanceField,
    truth: &EntranceEstimate,
    mission: &MissionConfig,
    sim: &SimConfig,
) -> Result<SimLog, MissionError> {
    sim.validate()?;
    mission.validate(world.resolution())?;
    let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
    let start = truth.position - truth.direction * sim.start_offset;
    if !true_field.contains(&start) {
        return Err(MissionError::Config(format!(
            "start point {:?} lies outside the map",
            start.as_slice()
        )));
    }
    let rim = 0.5 * mission.centerline.tunnel_dim;
    let detections = synthetic_detections(
        truth,
        rim,
        &start,
        sim.detections_per_marker,
        sim.marker_noise,
        &mut rng,
    );
    let entrance = estimate_entrance(&detections)?;

    let max_time = mission
        .max_time
        .unwrap_or_else(|| default_max_time(world, mission.v_des));
    let mut state = MissionState::new(
        &BoundaryState::at_rest(start),
        entrance,
        mission.clone(),
        0.0,
        max_time,
    )?;

    let mut reveal = sim.reveal_radius.map(|radius| RevealMap {
        truth: world.clone(),
        known: OccupancyGrid::new(world.origin(), world.resolution(), world.dims())
            .expect("same geometry"),
        radius,
        dirty: false,
    });
    let mut known_field: Option<DistanceField> = None;

    let noise = Normal::new(0.0, sim.sigma.max(f64::MIN_POSITIVE)).unwrap();
    let dt = 1.0 / sim.rate;
    let alpha = if sim.lag > 0.0 {
        1.0 - (-dt / sim.lag).exp()
    } else {
        1.0
    };
    let mut filtered = start;
    let mut samples = Vec::new();
    let mut status = SimStatus::Completed;

    for k in 0.. {
        let t = k as f64 * dt;
        if let Some(map) = reveal.as_mut() {
            map.reveal(&filtered);
            if map.dirty || known_field.is_none() {
                known_field = Some(compute_edf(&map.known)?);
                map.dirty = false;
            }
        }
        let field = known_field.as_ref().unwrap_or(true_field);
        let cmd = match state.step(field, t) {
            Ok(c) => c,
            Err(MissionError::Watchdog(limit)) => {
                status = SimStatus::Watchdog(limit);
                break;
            }
            Err(e @ MissionError::Aborted { .. }) => {
                status = SimStatus::Aborted(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        let p = cmd.state.position();
        let perturbed = if sim.sigma > 0.0 {
            p + Vec3::new(
                noise.sample(&mut rng),
                noise.sample(&mut rng),
                noise.sample(&mut rng),
            )
        } else {
            p
        };
        filtered = if k == 0 {
            start
        } else {
            filtered + (perturbed - filtered) * alpha
        };
        let exec = if sim.lag > 0.0 { filtered } else { perturbed };
        let clearance = true_field.edf_at(&true_field.clamp_point(&exec))?;
        samples.push(SimSample {
            t,
            phase: cmd.phase,
            cmd_position: p,
            cmd_velocity: cmd.state.velocity(),
            exec_position: exec,
            clearance,
        });
        if clearance < sim.vehicle_radius {
            status = SimStatus::Collision {
                t,
                position: exec,
                clearance,
            };
            break;
        }
        if cmd.phase == Phase::Done {
            break;
        }
    }
    Ok(SimLog {
        samples,
        replans: state.replans().to_vec(),
        failed_replans: state.failed_replans().to_vec(),
        transitions: state.transitions().to_vec(),
        entrance,
        status,
    })
}
