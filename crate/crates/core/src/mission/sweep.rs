//! Speed sweep: repeated simulations per desired speed, run in parallel.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{log_metrics, RunMetrics};
use super::sim::{simulate_with_field, SimConfig};
use super::{EntranceEstimate, MissionConfig, MissionError};
use crate::grid::{compute_edf, OccupancyGrid};
use crate::Vec3;

/// Speeds `from, from + step, ...` up to `to` inclusive, rounded to 1e-9.
pub fn speed_range(from: f64, to: f64, step: f64) -> Result<Vec<f64>, MissionError> {
    if !(from > 0.0 && step > 0.0 && to >= from && to.is_finite()) {
        return Err(MissionError::Config(format!(
            "bad speed range {from}:{to}:{step}"
        )));
    }
    let n = ((to - from) / step + 1e-9).floor() as usize;
    Ok((0..=n)
        .map(|i| ((from + i as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub speed: f64,
    pub repeat: usize,
    pub seed: u64,
    pub status: String,
    pub metrics: Option<RunMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub speed: f64,
    pub runs: usize,
    pub failures: usize,
    pub rmse_longitudinal: f64,
    pub rmse_lateral: f64,
    pub rmse_vertical: f64,
    pub min_clearance: f64,
    pub traversal_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub runs: Vec<SweepRun>,
    pub table: Vec<SweepRow>,
}

/// Thread cap from `TUNNELPLAN_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var("TUNNELPLAN_THREADS")
        .ok()?
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub speeds: Vec<f64>,
    pub repeats: usize,
    /// Worker threads; `None` uses all cores.
    pub threads: Option<usize>,
}

/// Runs `repeats` simulations per speed; run `i` (speed-major) uses seed
/// `sim.seed + i` for both the simulator and the center-line sampler.
pub fn sweep(
    world: &OccupancyGrid,
    truth: &EntranceEstimate,
    reference: &[Vec3],
    mission: &MissionConfig,
    sim: &SimConfig,
    plan: &SweepPlan,
) -> Result<SweepResult, MissionError> {
    let SweepPlan {
        speeds,
        repeats,
        threads,
    } = plan;
    let repeats = *repeats;
    if repeats == 0 || speeds.is_empty() {
        return Err(MissionError::Config(
            "sweep needs at least one speed and one repeat".into(),
        ));
    }
    let field = compute_edf(world)?;
    let jobs: Vec<(usize, f64, usize)> = speeds
        .iter()
        .enumerate()
        .flat_map(|(si, &v)| (0..repeats).map(move |r| (si * repeats + r, v, r)))
        .collect();
    let run = |&(i, speed, repeat): &(usize, f64, usize)| -> Result<SweepRun, MissionError> {
        let seed = sim.seed.wrapping_add(i as u64);
        let mut m = mission.clone().with_speed(speed);
        m.centerline.seed = mission.centerline.seed.wrapping_add(i as u64);
        let s = SimConfig {
            seed,
            ..sim.clone()
        };
        let log = simulate_with_field(world, &field, truth, &m, &s)?;
        let metrics = log_metrics(&log, reference, s.vehicle_radius).ok();
        Ok(SweepRun {
            speed,
            repeat,
            seed,
            status: log.status.label().to_string(),
            metrics,
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| MissionError::Config(e.to_string()))?;
    let mut runs = pool.install(|| jobs.par_iter().map(run).collect::<Result<Vec<_>, _>>())?;
    runs.sort_by(|a, b| a.speed.total_cmp(&b.speed).then(a.repeat.cmp(&b.repeat)));
    let table = aggregate(&runs);
    Ok(SweepResult { runs, table })
}

/// Per-speed means over runs with metrics; failures count non-completed runs.
pub fn aggregate(runs: &[SweepRun]) -> Vec<SweepRow> {
    let mut speeds: Vec<f64> = runs.iter().map(|r| r.speed).collect();
    speeds.sort_by(f64::total_cmp);
    speeds.dedup();
    speeds
        .into_iter()
        .map(|v| {
            let mut group: Vec<&SweepRun> = runs.iter().filter(|r| r.speed == v).collect();
            group.sort_by_key(|r| (r.repeat, r.seed));
            let ms: Vec<&RunMetrics> = group.iter().filter_map(|r| r.metrics.as_ref()).collect();
            let mean = |f: fn(&RunMetrics) -> f64| {
                if ms.is_empty() {
                    f64::NAN
                } else {
                    ms.iter().map(|m| f(m)).sum::<f64>() / ms.len() as f64
                }
            };
            SweepRow {
                speed: v,
                runs: group.len(),
                failures: group.iter().filter(|r| r.status != "completed").count(),
                rmse_longitudinal: mean(|m| m.rmse_longitudinal),
                rmse_lateral: mean(|m| m.rmse_lateral),
                rmse_vertical: mean(|m| m.rmse_vertical),
                min_clearance: ms
                    .iter()
                    .map(|m| m.min_clearance)
                    .fold(f64::INFINITY, f64::min),
                traversal_time: mean(|m| m.traversal_time),
            }
        })
        .collect()
}

pub const SWEEP_TABLE_HEADER: &str =
    "speed,runs,failures,rmse_longitudinal,rmse_lateral,rmse_vertical,min_clearance,traversal_time";

pub fn table_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_TABLE_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{:.2},{},{},{:.6},{:.6},{:.6},{:.6},{:.4}",
            r.speed,
            r.runs,
            r.failures,
            r.rmse_longitudinal,
            r.rmse_lateral,
            r.rmse_vertical,
            r.min_clearance,
            r.traversal_time
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protocol_speeds() {
        let v = speed_range(0.1, 2.5, 0.1).unwrap();
        assert_eq!(v.len(), 25);
        assert_eq!(v[0], 0.1);
        assert_eq!(v[24], 2.5);
        assert_eq!(v[2], 0.3);
        assert!(speed_range(0.0, 1.0, 0.1).is_err());
        assert!(speed_range(1.0, 0.5, 0.1).is_err());
    }

    #[test]
    fn aggregation_ignores_order() {
        let m = |x: f64| RunMetrics {
            rmse_longitudinal: x,
            rmse_lateral: 2.0 * x,
            rmse_vertical: 0.0,
            min_clearance: 0.3 - x,
            traversal_time: 5.0,
            jerk_integral: 0.0,
            collision_count: 0,
        };
        let runs: Vec<SweepRun> = (0..6)
            .map(|i| SweepRun {
                speed: [1.0, 2.0][i % 2],
                repeat: i / 2,
                seed: i as u64,
                status: if i == 5 {
                    "collision".into()
                } else {
                    "completed".into()
                },
                metrics: Some(m(i as f64 * 0.01)),
            })
            .collect();
        let a = aggregate(&runs);
        let mut rev = runs.clone();
        rev.reverse();
        assert_eq!(a, aggregate(&rev));
        assert_eq!(a.len(), 2);
        assert!((a[0].rmse_lateral - 0.04).abs() < 1e-12);
        assert_eq!(a[1].failures, 1);
    }
}
