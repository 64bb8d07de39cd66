//! Approach, intra-tunnel replanning, exit detection and stop, as a
//! time-stepped state machine over a distance field.

pub mod config;
pub mod entrance;
pub mod metrics;
pub mod sim;
pub mod sweep;

use crate::centerline::{
    extract_centerline, parameterize_bspline, Centerline, CenterlineConfig, CenterlineError,
    Termination,
};
use crate::grid::{DistanceField, GridError};
use crate::minjerk::{
    from_bspline, min_jerk, stop_trajectory, MinJerkError, PiecewisePolyTrajectory,
};
use crate::state::BoundaryState;
use crate::traj_opt::{
    optimize, path_length, resample_arc_length, CostWeights, LbfgsOptions, OptError, OptResult,
    TrajProblem,
};
use crate::Vec3;

pub use config::{parse_mission_config, MissionFile};
pub use entrance::{estimate_entrance, EntranceError, EntranceEstimate, MarkerDetection};
pub use metrics::{compute_metrics, MetricsError, RunMetrics};
pub use sim::{simulate, SimConfig, SimLog, SimStatus};
pub use sweep::{sweep, SweepPlan, SweepResult, SweepRow};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MissionError {
    #[error(transparent)]
    Centerline(#[from] CenterlineError),
    #[error(transparent)]
    Optimization(#[from] OptError),
    #[error(transparent)]
    MinJerk(#[from] MinJerkError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Entrance(#[from] EntranceError),
    #[error("mission aborted after {failures} consecutive replanning failures (last: {last})")]
    Aborted { failures: usize, last: String },
    #[error("watchdog: exit not reached within {0:.1} s")]
    Watchdog(f64),
    #[error("invalid mission config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionConfig {
    /// Desired speed inside the tunnel (m/s).
    pub v_des: f64,
    /// Intra-tunnel replanning period (s).
    pub replan_period: f64,
    /// Walker settings; carries `D`, `S`, `R_p` and the octant seed.
    pub centerline: CenterlineConfig,
    pub weights: CostWeights,
    pub optimizer: LbfgsOptions,
    /// Mini-jerk sample interval as a multiple of the spline knot interval.
    pub sample_dt_factor: f64,
    /// Deceleration used to size the stop trajectory (m/s^2).
    pub a_max: f64,
    /// Distance to the entrance that switches to intra-tunnel mode (m).
    pub arrival_tolerance: f64,
    /// Commanded path length inside the tunnel required before an exit
    /// counts (m).
    pub exit_progress: f64,
    /// Speed below which the post-tunnel stop is complete (m/s).
    pub stop_speed: f64,
    pub approach_time_factor: f64,
    pub approach_min_time: f64,
    pub max_failures: usize,
    /// Watchdog on mission time (s); `None` derives one from the map size.
    pub max_time: Option<f64>,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            v_des: 1.0,
            replan_period: 0.1,
            centerline: CenterlineConfig::default(),
            weights: CostWeights::default(),
            optimizer: LbfgsOptions::default(),
            sample_dt_factor: 4.0,
            a_max: 3.0,
            arrival_tolerance: 0.1,
            exit_progress: 1.0,
            stop_speed: 0.01,
            approach_time_factor: 1.5,
            approach_min_time: 1.0,
            max_failures: 3,
            max_time: None,
        }
    }
}

impl MissionConfig {
    pub fn with_speed(mut self, v: f64) -> Self {
        self.v_des = v;
        self
    }

    pub fn validate(&self, resolution: f64) -> Result<(), MissionError> {
        let bad = |m: String| Err(MissionError::Config(m));
        if !(self.v_des > 0.0 && self.v_des.is_finite()) {
            return bad(format!("v_des must be positive, got {}", self.v_des));
        }
        if !(self.replan_period > 0.0) {
            return bad(format!(
                "replan period must be positive, got {}",
                self.replan_period
            ));
        }
        if !(self.sample_dt_factor >= 1.0) {
            return bad(format!(
                "sample_dt_factor must be >= 1, got {}",
                self.sample_dt_factor
            ));
        }
        if !(self.a_max > 0.0) {
            return bad(format!("a_max must be positive, got {}", self.a_max));
        }
        if self.max_failures == 0 {
            return bad("max_failures must be >= 1".into());
        }
        self.weights.validate()?;
        self.centerline.validate(resolution)?;
        Ok(())
    }

    fn centerline_for(&self, replan: usize) -> CenterlineConfig {
        CenterlineConfig {
            desired_speed: self.v_des,
            seed: self.centerline.seed.wrapping_add(replan as u64),
            ..self.centerline.clone()
        }
    }
}

/// Approach trajectory ending at the entrance with velocity
/// `v_des * direction` and zero acceleration, over
/// `max(factor * distance / v_des, min_time)` seconds. When the vehicle is
/// already within the arrival tolerance, the target moves through the
/// entrance along its direction so the segment is not forced to reverse.
pub fn plan_approach(
    current: &BoundaryState,
    entrance: &EntranceEstimate,
    cfg: &MissionConfig,
    start_time: f64,
) -> Result<PiecewisePolyTrajectory, MissionError> {
    if !(cfg.v_des > 0.0) {
        return Err(MissionError::Config(format!(
            "v_des must be positive, got {}",
            cfg.v_des
        )));
    }
    let p = current.position();
    let dist = (entrance.position - p).norm();
    let (target, duration) = if dist < cfg.arrival_tolerance {
        let t = cfg.approach_min_time;
        (entrance.position + entrance.direction * (cfg.v_des * t), t)
    } else {
        (
            entrance.position,
            (cfg.approach_time_factor * dist / cfg.v_des).max(cfg.approach_min_time),
        )
    };
    let start = BoundaryState::new(p, current.velocity(), current.acceleration());
    let end = BoundaryState::new(target, entrance.direction * cfg.v_des, Vec3::zeros());
    Ok(min_jerk(&[p, target], &[duration], &start, &end)?.with_start_time(start_time))
}

/// Everything one intra-tunnel replan produced.
#[derive(Debug, Clone)]
pub struct Plan {
    pub trajectory: PiecewisePolyTrajectory,
    pub centerline: Centerline,
    /// Waypoints handed to the optimizer (resampled, possibly extended).
    pub waypoints: Vec<Vec3>,
    pub optimization: OptResult,
}

#[derive(Debug, Clone)]
pub enum ReplanOutcome {
    /// The command position is already outside the tunnel; nothing planned.
    Exited,
    Planned(Box<Plan>),
}

/// Center line from the command state, smoothed and re-timed with the
/// command state as a hard start. `heading` is used when the command speed
/// is too low to define a travel direction. The result starts at `t`.
/// Near the exit the waypoints continue straight out to the plan range.
pub fn replan_step(
    field: &DistanceField,
    command: &BoundaryState,
    heading: &Vec3,
    t: f64,
    replan_index: usize,
    cfg: &MissionConfig,
) -> Result<ReplanOutcome, MissionError> {
    plan_from(field, command, heading, t, replan_index, cfg, true)
}

/// [`replan_step`] with the straight run-out past the exit optional; without
/// it the plan ends at the exit point.
pub fn plan_from(
    field: &DistanceField,
    command: &BoundaryState,
    heading: &Vec3,
    t: f64,
    replan_index: usize,
    cfg: &MissionConfig,
    extend_past_exit: bool,
) -> Result<ReplanOutcome, MissionError> {
    let p = command.position();
    let exit_threshold = cfg.centerline.exit_threshold();
    if field.edf_at(&field.clamp_point(&p))? > exit_threshold {
        return Ok(ReplanOutcome::Exited);
    }
    let v = command.velocity();
    let dir = if v.norm() > 0.05 * cfg.v_des {
        v.normalize()
    } else {
        heading.normalize()
    };
    let cl_cfg = cfg.centerline_for(replan_index);
    let centerline = extract_centerline(field, &p, &(dir * cfg.v_des), &cl_cfg)?;

    let step = cl_cfg.step;
    let mut raw = centerline.waypoints.clone();
    let mut end_dir = *centerline.directions.last().unwrap();
    if let (Termination::ExitedTunnel, Some(x)) = (centerline.termination, centerline.exit_point) {
        let last = *raw.last().unwrap();
        if (x - last).norm() > 1e-9 {
            end_dir = (x - last).normalize();
        }
        raw.push(x);
    }
    if extend_past_exit && centerline.termination != Termination::RangeReached {
        // past the exit (or the map edge) the flight continues straight
        while path_length(&raw) < cl_cfg.plan_range {
            let last = *raw.last().unwrap();
            raw.push(last + end_dir * step);
        }
    }
    let length = path_length(&raw);
    let count = ((length / step).round() as usize).max(2) + 1;
    let waypoints = resample_arc_length(&raw, count)?;
    let spacing = length / (count - 1) as f64;

    let init = parameterize_bspline(&waypoints, spacing, cfg.v_des)?;
    let end_tangent = (waypoints[count - 1] - waypoints[count - 2]).normalize();
    let problem = TrajProblem {
        waypoints: waypoints.clone(),
        start: BoundaryState::new(p, v, command.acceleration()),
        end: BoundaryState::new(waypoints[count - 1], end_tangent * cfg.v_des, Vec3::zeros()),
        weights: cfg.weights,
        v_des: cfg.v_des,
        dt: init.dt(),
    };
    let optimization = optimize(&init, &problem, &cfg.optimizer)?;
    let spline = crate::bspline::UniformBSpline::with_start(
        optimization.spline.controls().to_vec(),
        3,
        optimization.spline.dt(),
        t,
    )
    .map_err(OptError::from)?;
    let trajectory = from_bspline(&spline, cfg.sample_dt_factor * spline.dt(), command)?;
    Ok(ReplanOutcome::Planned(Box::new(Plan {
        trajectory,
        centerline,
        waypoints,
        optimization,
    })))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    PreTunnel,
    IntraTunnel,
    PostTunnel,
    Done,
}

impl Phase {
    pub fn name(&self) -> &'static str {
        match self {
            Phase::PreTunnel => "PreTunnel",
            Phase::IntraTunnel => "IntraTunnel",
            Phase::PostTunnel => "PostTunnel",
            Phase::Done => "Done",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "PreTunnel" => Some(Phase::PreTunnel),
            "IntraTunnel" => Some(Phase::IntraTunnel),
            "PostTunnel" => Some(Phase::PostTunnel),
            "Done" => Some(Phase::Done),
            _ => None,
        }
    }
}

/// One trajectory swap, with the state mismatch at the hand-off instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplanEvent {
    pub t: f64,
    /// Max over derivatives 0..2 of `|new(t) - old(t)|`.
    pub mismatch: f64,
    pub waypoints: usize,
    pub iterations: usize,
}

/// Commanded state returned by each [`MissionState::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct Command {
    pub t: f64,
    pub phase: Phase,
    pub state: BoundaryState,
}

#[derive(Debug, Clone)]
pub struct MissionState {
    phase: Phase,
    active: PiecewisePolyTrajectory,
    entrance: EntranceEstimate,
    config: MissionConfig,
    start_time: f64,
    max_time: f64,
    last_replan: Option<f64>,
    failures: usize,
    replans: Vec<ReplanEvent>,
    failed_replans: Vec<(f64, String)>,
    progress: f64,
    last_position: Vec3,
    heading: Vec3,
    last_plan: Option<Box<Plan>>,
    transitions: Vec<(f64, Phase)>,
}

fn state_mismatch(a: &BoundaryState, b: &BoundaryState) -> f64 {
    (0..3)
        .map(|d| (a.derivative(d) - b.derivative(d)).norm())
        .fold(0.0, f64::max)
}

impl MissionState {
    /// Starts in the pre-tunnel phase with an approach from `current`.
    pub fn new(
        current: &BoundaryState,
        entrance: EntranceEstimate,
        config: MissionConfig,
        start_time: f64,
        max_time: f64,
    ) -> Result<Self, MissionError> {
        let active = plan_approach(current, &entrance, &config, start_time)?;
        Ok(Self {
            phase: Phase::PreTunnel,
            active,
            entrance,
            heading: entrance.direction,
            config,
            start_time,
            max_time,
            last_replan: None,
            failures: 0,
            replans: Vec::new(),
            failed_replans: Vec::new(),
            progress: 0.0,
            last_position: current.position(),
            last_plan: None,
            transitions: vec![(start_time, Phase::PreTunnel)],
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn active(&self) -> &PiecewisePolyTrajectory {
        &self.active
    }

    pub fn entrance(&self) -> &EntranceEstimate {
        &self.entrance
    }

    pub fn config(&self) -> &MissionConfig {
        &self.config
    }

    pub fn replans(&self) -> &[ReplanEvent] {
        &self.replans
    }

    /// Times and messages of replans that kept the previous trajectory.
    pub fn failed_replans(&self) -> &[(f64, String)] {
        &self.failed_replans
    }

    /// Phase entries with their times, in order.
    pub fn transitions(&self) -> &[(f64, Phase)] {
        &self.transitions
    }

    pub fn last_plan(&self) -> Option<&Plan> {
        self.last_plan.as_deref()
    }

    /// Commanded path length since entering the tunnel (m).
    pub fn progress(&self) -> f64 {
        self.progress
    }

    fn enter(&mut self, phase: Phase, t: f64) {
        debug_assert!(phase > self.phase);
        self.phase = phase;
        self.transitions.push((t, phase));
    }

    fn replan(
        &mut self,
        field: &DistanceField,
        cmd: &BoundaryState,
        t: f64,
    ) -> Result<(), MissionError> {
        self.last_replan = Some(t);
        let outcome = replan_step(
            field,
            cmd,
            &self.heading,
            t,
            self.replans.len() + self.failed_replans.len(),
            &self.config,
        );
        match outcome {
            Ok(ReplanOutcome::Exited) => Ok(()),
            Ok(ReplanOutcome::Planned(plan)) => {
                let new_state = plan.trajectory.state(t);
                self.replans.push(ReplanEvent {
                    t,
                    mismatch: state_mismatch(&new_state, cmd),
                    waypoints: plan.waypoints.len(),
                    iterations: plan.optimization.iterations(),
                });
                self.active = plan.trajectory.clone();
                self.last_plan = Some(plan);
                self.failures = 0;
                Ok(())
            }
            Err(e) => {
                self.failures += 1;
                self.failed_replans.push((t, e.to_string()));
                if self.failures >= self.config.max_failures {
                    return Err(MissionError::Aborted {
                        failures: self.failures,
                        last: e.to_string(),
                    });
                }
                Ok(())
            }
        }
    }

    /// Advances the state machine to time `t` and returns the command.
    pub fn step(&mut self, field: &DistanceField, t: f64) -> Result<Command, MissionError> {
        if t - self.start_time > self.max_time && self.phase != Phase::Done {
            return Err(MissionError::Watchdog(self.max_time));
        }
        let mut cmd = self.active.state(t);
        let pos = cmd.position();
        if self.phase == Phase::IntraTunnel {
            self.progress += (pos - self.last_position).norm();
        }
        self.last_position = pos;
        if cmd.velocity().norm() > 0.05 * self.config.v_des {
            self.heading = cmd.velocity().normalize();
        }

        match self.phase {
            Phase::PreTunnel => {
                if (pos - self.entrance.position).norm() < self.config.arrival_tolerance {
                    self.enter(Phase::IntraTunnel, t);
                    self.replan(field, &cmd, t)?;
                }
            }
            Phase::IntraTunnel => {
                let outside = field.edf_at(&field.clamp_point(&pos))?
                    > self.config.centerline.exit_threshold();
                if outside && self.progress > self.config.exit_progress {
                    self.enter(Phase::PostTunnel, t);
                    self.active = stop_trajectory(&cmd, self.config.a_max, t, 0.5)?;
                } else if self
                    .last_replan
                    .is_none_or(|last| t - last >= self.config.replan_period - 1e-9)
                {
                    self.replan(field, &cmd, t)?;
                }
            }
            Phase::PostTunnel => {
                if cmd.velocity().norm() < self.config.stop_speed {
                    self.enter(Phase::Done, t);
                }
            }
            Phase::Done => {}
        }
        // the active trajectory may have been swapped; report its state
        cmd = self.active.state(t);
        Ok(Command {
            t,
            phase: self.phase,
            state: cmd,
        })
    }
}
