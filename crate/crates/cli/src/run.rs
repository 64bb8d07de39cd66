use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use tunnelplan::centerline::{parse_waypoints_csv, waypoints_csv};
use tunnelplan::grid::io::{read_vxg, write_vxg, MapJson};
use tunnelplan::grid::{compute_edf, gen_tunnel_map, CrossSection, OccupancyGrid, TunnelSpec};
use tunnelplan::mission::config::{apply_mission_config, MissionFile};
use tunnelplan::mission::metrics::compute_metrics;
use tunnelplan::mission::sim::{parse_sim_log, simulate_with_field};
use tunnelplan::mission::sweep::{speed_range, sweep, table_csv, thread_cap, SweepPlan};
use tunnelplan::mission::{plan_from, EntranceEstimate, ReplanOutcome};
use tunnelplan::{BoundaryState, Vec3};

use crate::{Bend, GenMapArgs, MetricsArgs, PlanArgs, Shape, SimulateArgs, WorldArgs};

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or unreadable inputs.
    Usage(String),
    /// The run itself failed (collision, abort, planning error).
    Run(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Run(m) => f.write_str(m),
        }
    }
}

fn usage(m: impl fmt::Display) -> CliError {
    CliError::Usage(m.to_string())
}

fn failure(m: impl fmt::Display) -> CliError {
    CliError::Run(m.to_string())
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| failure(format!("{}: {e}", path.display())))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".tunnel.json");
    PathBuf::from(s)
}

fn is_json(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn tunnel_spec(a: &GenMapArgs) -> Result<TunnelSpec, CliError> {
    if !(a.diameter > 0.0 && a.diameter.is_finite()) {
        return Err(usage(format!(
            "--diameter must be positive, got {}",
            a.diameter
        )));
    }
    if !(a.length > 0.0 && a.length.is_finite()) {
        return Err(usage(format!(
            "--length must be positive, got {}",
            a.length
        )));
    }
    let cs = match a.shape {
        Shape::Circle => CrossSection::Circle {
            diameter: a.diameter,
        },
        Shape::Square => CrossSection::Square { side: a.diameter },
    };
    let angle = a.bend_angle.to_radians();
    let arcs = match a.bend {
        Bend::None => 0.0,
        Bend::Yaw | Bend::Vertical => a.bend_radius * angle.abs(),
        Bend::S => 2.0 * a.bend_radius * angle.abs(),
    };
    let straight = 0.5 * (a.length - arcs);
    if a.bend != Bend::None && !(straight > 0.0 && a.bend_radius > 0.0) {
        return Err(usage(format!(
            "bend of radius {} and angle {} deg does not fit in length {}",
            a.bend_radius, a.bend_angle, a.length
        )));
    }
    Ok(match a.bend {
        Bend::None => TunnelSpec::straight(cs, a.length),
        Bend::Yaw => TunnelSpec::yaw_bend(cs, straight, a.bend_radius, angle, straight),
        Bend::Vertical => TunnelSpec::vertical_bend(cs, straight, a.bend_radius, angle, straight),
        Bend::S => TunnelSpec::s_bend(cs, straight, a.bend_radius, angle, straight),
    })
}

pub fn gen_map(a: GenMapArgs) -> Result<(), CliError> {
    let spec = tunnel_spec(&a)?;
    let grid = gen_tunnel_map(&spec, a.resolution).map_err(usage)?;
    if is_json(&a.out) {
        let json =
            serde_json::to_string(&MapJson::from_grid(&grid, Some(&spec))).map_err(failure)?;
        write(&a.out, &json)?;
    } else {
        write(&a.out, &write_vxg(&grid))?;
        let side = serde_json::to_string_pretty(&spec).map_err(failure)?;
        write(&sidecar(&a.out), &side)?;
    }
    let d = grid.dims();
    eprintln!(
        "wrote {} ({}x{}x{} voxels, {} occupied)",
        a.out.display(),
        d[0],
        d[1],
        d[2],
        grid.occupied_count()
    );
    Ok(())
}

struct World {
    grid: OccupancyGrid,
    tunnel: Option<TunnelSpec>,
    entrance: EntranceEstimate,
    settings: MissionFile,
}

fn load_world(a: &WorldArgs) -> Result<World, CliError> {
    let text = read(&a.map)?;
    let (grid, tunnel) = if is_json(&a.map) {
        let m: MapJson =
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", a.map.display())))?;
        (m.to_grid().map_err(usage)?, m.tunnel)
    } else {
        let grid = read_vxg(&text).map_err(|e| usage(format!("{}: {e}", a.map.display())))?;
        let side = sidecar(&a.map);
        let tunnel = if side.exists() {
            Some(
                serde_json::from_str(&read(&side)?)
                    .map_err(|e| usage(format!("{}: {e}", side.display())))?,
            )
        } else {
            None
        };
        (grid, tunnel)
    };
    let position = match (a.entrance, &tunnel) {
        (Some(p), _) => Vec3::from(p),
        (None, Some(t)) => t.entrance(),
        (None, None) => {
            return Err(usage(
                "no tunnel sidecar for this map; pass --entrance and --direction",
            ))
        }
    };
    let direction = match (a.direction, &tunnel) {
        (Some(d), _) => Vec3::from(d),
        (None, Some(t)) => t.entrance_direction(),
        (None, None) => return Err(usage("no tunnel sidecar for this map; pass --direction")),
    };
    if !(direction.norm() > 1e-9) {
        return Err(usage("--direction must be nonzero"));
    }
    let mut settings = MissionFile::default();
    if let Some(path) = &a.config {
        apply_mission_config(&read(path)?, &mut settings).map_err(usage)?;
    }
    if let Some(t) = &tunnel {
        if a.config.is_none() {
            settings.mission.centerline.tunnel_dim = t.cross_section.size();
        }
    }
    Ok(World {
        grid,
        tunnel,
        entrance: EntranceEstimate {
            position,
            direction: direction.normalize(),
        },
        settings,
    })
}

fn check_speed(v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(usage(format!("--speed must be positive, got {v}")))
    }
}

pub fn plan(a: PlanArgs) -> Result<(), CliError> {
    let world = load_world(&a.world)?;
    let mut cfg = world.settings.mission;
    if let Some(v) = a.speed {
        cfg.v_des = check_speed(v)?;
    }
    check_speed(cfg.v_des)?;
    if !(a.rate > 0.0) {
        return Err(usage(format!("--rate must be positive, got {}", a.rate)));
    }
    if let Some(s) = a.seed {
        cfg.centerline.seed = s;
    }
    let g = world.grid.geometry();
    cfg.centerline.plan_range = match a.range {
        Some(r) if r > 0.0 => r,
        Some(r) => return Err(usage(format!("--range must be positive, got {r}"))),
        None => (g.max_corner() - g.origin).norm(),
    };
    cfg.validate(g.resolution).map_err(usage)?;
    let field = compute_edf(&world.grid).map_err(usage)?;
    let start = a.start.map(Vec3::from).unwrap_or(world.entrance.position);
    let dir = world.entrance.direction;
    let state = BoundaryState::new(start, dir * cfg.v_des, Vec3::zeros());
    let plan = match plan_from(&field, &state, &dir, 0.0, 0, &cfg, false).map_err(failure)? {
        ReplanOutcome::Planned(p) => p,
        ReplanOutcome::Exited => return Err(failure("start point is outside the tunnel")),
    };
    write(&a.out, &plan.trajectory.to_csv(a.rate))?;
    write(
        &a.centerline_out,
        &waypoints_csv(&plan.centerline.waypoints, &plan.centerline.clearance),
    )?;
    eprintln!(
        "{} waypoints, {:.2} s trajectory, {} optimizer iterations ({:?})",
        plan.centerline.waypoints.len(),
        plan.trajectory.duration(),
        plan.optimization.iterations(),
        plan.optimization.reason
    );
    Ok(())
}

fn reference_path(
    path: &Option<PathBuf>,
    tunnel: &Option<TunnelSpec>,
) -> Result<Option<Vec<Vec3>>, CliError> {
    match (path, tunnel) {
        (Some(p), _) => {
            let w = parse_waypoints_csv(&read(p)?)
                .map_err(|e| usage(format!("{}: {e}", p.display())))?;
            Ok(Some(w))
        }
        (None, Some(t)) => Ok(Some(t.path.clone())),
        (None, None) => Ok(None),
    }
}

pub fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let world = load_world(&a.world)?;
    let MissionFile {
        mut mission,
        mut sim,
    } = world.settings;
    if let Some(v) = a.speed {
        mission.v_des = check_speed(v)?;
    }
    if let Some(s) = a.seed {
        sim.seed = s;
        mission.centerline.seed = s;
    }
    if let Some(l) = a.lag {
        sim.lag = l;
    }
    if let Some(s) = a.sigma {
        sim.sigma = s;
    }
    if a.reveal_radius.is_some() {
        sim.reveal_radius = a.reveal_radius;
    }
    sim.validate().map_err(usage)?;
    mission.validate(world.grid.resolution()).map_err(usage)?;
    let reference = reference_path(&a.reference, &world.tunnel)?;

    if let Some([from, to, step]) = a.sweep_speed {
        let speeds = speed_range(from, to, step).map_err(usage)?;
        if a.repeats == 0 {
            return Err(usage("--repeats must be at least 1"));
        }
        let reference =
            reference.ok_or_else(|| usage("a sweep needs --reference or a tunnel sidecar"))?;
        let plan = SweepPlan {
            speeds,
            repeats: a.repeats,
            threads: thread_cap(),
        };
        let result = sweep(
            &world.grid,
            &world.entrance,
            &reference,
            &mission,
            &sim,
            &plan,
        )
        .map_err(failure)?;
        let table = table_csv(&result.table);
        write(&a.table_out, &table)?;
        if let Some(p) = &a.runs_out {
            write(
                p,
                &serde_json::to_string_pretty(&result.runs).map_err(failure)?,
            )?;
        }
        print!("{table}");
        let failed = result
            .runs
            .iter()
            .filter(|r| r.status != "completed")
            .count();
        if failed > 0 {
            return Err(failure(format!(
                "{failed} of {} runs failed",
                result.runs.len()
            )));
        }
        return Ok(());
    }

    let field = compute_edf(&world.grid).map_err(usage)?;
    let log = simulate_with_field(&world.grid, &field, &world.entrance, &mission, &sim)
        .map_err(failure)?;
    write(&a.log_out, &log.to_csv())?;
    let reference =
        reference.unwrap_or_else(|| log.samples.iter().map(|s| s.cmd_position).collect());
    let metrics = compute_metrics(&log.samples, &reference, sim.vehicle_radius).map_err(failure)?;
    let json = serde_json::to_string_pretty(&metrics).map_err(failure)?;
    write(&a.metrics_out, &json)?;
    println!("{json}");
    if !log.status.is_success() {
        return Err(failure(format!("run ended with {:?}", log.status)));
    }
    Ok(())
}

pub fn metrics(a: MetricsArgs) -> Result<(), CliError> {
    let samples =
        parse_sim_log(&read(&a.log)?).map_err(|e| usage(format!("{}: {e}", a.log.display())))?;
    let reference = match &a.centerline {
        Some(p) => {
            parse_waypoints_csv(&read(p)?).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => samples.iter().map(|s| s.cmd_position).collect(),
    };
    let m = compute_metrics(&samples, &reference, a.vehicle_radius).map_err(usage)?;
    let json = serde_json::to_string_pretty(&m).map_err(failure)?;
    match &a.out {
        Some(p) => write(p, &json)?,
        None => println!("{json}"),
    }
    Ok(())
}
