#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod run;

/// Plan and simulate quadrotor flights through narrow tunnels.
#[derive(Parser, Debug)]
#[command(name = "tunnelplan", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic tunnel map.
    GenMap(GenMapArgs),
    /// Plan one trajectory through a mapped tunnel.
    Plan(PlanArgs),
    /// Fly the full mission in closed loop, or sweep speeds.
    Simulate(SimulateArgs),
    /// Tracking metrics of a simulation log.
    Metrics(MetricsArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Shape {
    Circle,
    Square,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Bend {
    None,
    Yaw,
    Vertical,
    S,
}

#[derive(Args, Debug)]
struct GenMapArgs {
    #[arg(long, value_enum, default_value = "circle")]
    shape: Shape,
    /// Diameter, or side length for square tunnels (m).
    #[arg(long)]
    diameter: f64,
    /// Total axis length (m); split into lead, bend and tail for bent tunnels.
    #[arg(long, default_value_t = 6.0)]
    length: f64,
    #[arg(long, value_enum, default_value = "none")]
    bend: Bend,
    /// Bend radius of the axis (m).
    #[arg(long, default_value_t = 1.5)]
    bend_radius: f64,
    /// Bend angle (degrees).
    #[arg(long, default_value_t = 90.0)]
    bend_angle: f64,
    #[arg(long, default_value_t = 0.05)]
    resolution: f64,
    /// Output path; `.json` writes the JSON mirror, anything else `vxg1`
    /// plus a `<out>.tunnel.json` sidecar.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct WorldArgs {
    /// Map file (`vxg1` or JSON mirror).
    #[arg(long)]
    map: PathBuf,
    /// Entrance position `x,y,z`; defaults to the map's tunnel sidecar.
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    entrance: Option<[f64; 3]>,
    /// Direction into the tunnel `x,y,z`.
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    direction: Option<[f64; 3]>,
    /// `key = value` mission file; flags given explicitly take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PlanArgs {
    #[command(flatten)]
    world: WorldArgs,
    #[arg(long)]
    speed: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Plan start `x,y,z`; defaults to the entrance.
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    start: Option<[f64; 3]>,
    /// Walk range (m); defaults to the whole tunnel.
    #[arg(long)]
    range: Option<f64>,
    /// Trajectory sample rate (Hz).
    #[arg(long, default_value_t = 100.0)]
    rate: f64,
    #[arg(long, default_value = "trajectory.csv")]
    out: PathBuf,
    #[arg(long, default_value = "centerline.csv")]
    centerline_out: PathBuf,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    world: WorldArgs,
    #[arg(long)]
    speed: Option<f64>,
    /// Base seed for the simulator and the center-line sampler.
    #[arg(long)]
    seed: Option<u64>,
    /// Tracking lag time constant (s).
    #[arg(long)]
    lag: Option<f64>,
    /// Command perturbation standard deviation per axis (m).
    #[arg(long)]
    sigma: Option<f64>,
    /// Reveal obstacles within this radius only.
    #[arg(long)]
    reveal_radius: Option<f64>,
    /// Center-line CSV used as the metrics reference path.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long, default_value = "simlog.csv")]
    log_out: PathBuf,
    #[arg(long, default_value = "metrics.json")]
    metrics_out: PathBuf,
    /// Sweep desired speeds `from:to:step` instead of a single run.
    #[arg(long, value_parser = parse_range)]
    sweep_speed: Option<[f64; 3]>,
    /// Runs per speed in a sweep.
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    /// Per-speed sweep table (CSV).
    #[arg(long, default_value = "sweep.csv")]
    table_out: PathBuf,
    /// Per-run sweep results (JSON).
    #[arg(long)]
    runs_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    /// Simulation log CSV.
    #[arg(long)]
    log: PathBuf,
    /// Center-line CSV; defaults to the commanded path in the log.
    #[arg(long)]
    centerline: Option<PathBuf>,
    #[arg(long, default_value_t = 0.2)]
    vehicle_radius: f64,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [x, y, z] if v.iter().all(|c| c.is_finite()) => Ok([x, y, z]),
        _ => Err(format!("expected x,y,z, got `{s}`")),
    }
}

fn parse_range(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(':')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [a, b, c] => Ok([a, b, c]),
        _ => Err(format!("expected from:to:step, got `{s}`")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenMap(a) => run::gen_map(a),
        Command::Plan(a) => run::plan(a),
        Command::Simulate(a) => run::simulate(a),
        Command::Metrics(a) => run::metrics(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
