//! `key = value` mission files. Blank lines and `#` comments are ignored;
//! unknown keys are errors.
//!
//! | key | meaning |
//! |---|---|
//! | `v_des` | desired speed (m/s) |
//! | `replan_hz` | intra-tunnel replanning rate |
//! | `D`, `S`, `R_p` | tunnel dimension, search step, plan range (m) |
//! | `lambda_s`, `lambda_w`, `lambda_v`, `lambda_i`, `lambda_e` | cost weights |
//! | `seed` | center-line sampler seed |
//! | `a_max` | stop deceleration (m/s^2) |
//! | `arrival_tolerance`, `exit_progress` | phase switch distances (m) |
//! | `max_time` | watchdog (s) |
//! | `sim_seed`, `lag`, `sigma`, `reveal_radius`, `rate`, `vehicle_radius` | simulator |

use super::sim::SimConfig;
use super::{MissionConfig, MissionError};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MissionFile {
    pub mission: MissionConfig,
    pub sim: SimConfig,
}

pub fn parse_mission_config(text: &str) -> Result<MissionFile, MissionError> {
    let mut out = MissionFile::default();
    apply_mission_config(text, &mut out)?;
    Ok(out)
}

/// Overrides fields of `file` with the keys present in `text`.
pub fn apply_mission_config(text: &str, file: &mut MissionFile) -> Result<(), MissionError> {
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let err = |m: String| MissionError::Config(format!("line {}: {m}", no + 1));
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected key = value, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let num = || -> Result<f64, MissionError> {
            value
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("`{key}` needs a number, got `{value}`")))
        };
        let int = || -> Result<u64, MissionError> {
            value
                .parse::<u64>()
                .map_err(|_| err(format!("`{key}` needs an unsigned integer, got `{value}`")))
        };
        let m = &mut file.mission;
        let s = &mut file.sim;
        match key {
            "v_des" => m.v_des = num()?,
            "replan_hz" => {
                let hz = num()?;
                if !(hz > 0.0) {
                    return Err(err(format!("replan_hz must be positive, got {hz}")));
                }
                m.replan_period = 1.0 / hz;
            }
            "D" => m.centerline.tunnel_dim = num()?,
            "S" => m.centerline.step = num()?,
            "R_p" => m.centerline.plan_range = num()?,
            "lambda_s" => m.weights.lambda_s = num()?,
            "lambda_w" => m.weights.lambda_w = num()?,
            "lambda_v" => m.weights.lambda_v = num()?,
            "lambda_i" => m.weights.lambda_i = num()?,
            "lambda_e" => m.weights.lambda_e = num()?,
            "seed" => m.centerline.seed = int()?,
            "a_max" => m.a_max = num()?,
            "arrival_tolerance" => m.arrival_tolerance = num()?,
            "exit_progress" => m.exit_progress = num()?,
            "max_time" => m.max_time = Some(num()?),
            "sim_seed" => s.seed = int()?,
            "lag" => s.lag = num()?,
            "sigma" => s.sigma = num()?,
            "reveal_radius" => s.reveal_radius = Some(num()?),
            "rate" => s.rate = num()?,
            "vehicle_radius" => s.vehicle_radius = num()?,
            _ => return Err(err(format!("unknown key `{key}`"))),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_keys() {
        let f = parse_mission_config(
            "# tunnel\nv_des = 1.5\nreplan_hz=20\nD = 0.7\nS=0.05\nR_p = 3\nlambda_w = 0.5 # lighter\nseed = 9\nsigma = 0\nreveal_radius = 2.5\n",
        )
        .unwrap();
        assert_eq!(f.mission.v_des, 1.5);
        assert!((f.mission.replan_period - 0.05).abs() < 1e-15);
        assert_eq!(f.mission.centerline.tunnel_dim, 0.7);
        assert_eq!(f.mission.centerline.step, 0.05);
        assert_eq!(f.mission.centerline.plan_range, 3.0);
        assert_eq!(f.mission.weights.lambda_w, 0.5);
        assert_eq!(f.mission.centerline.seed, 9);
        assert_eq!(f.sim.sigma, 0.0);
        assert_eq!(f.sim.reveal_radius, Some(2.5));
        assert_eq!(f.sim.lag, SimConfig::default().lag);
    }

    #[test]
    fn rejects_bad_lines() {
        for bad in [
            "speed = 1",
            "v_des 1",
            "v_des = fast",
            "seed = -1",
            "replan_hz = 0",
            "v_des = inf",
        ] {
            assert!(
                matches!(parse_mission_config(bad), Err(MissionError::Config(_))),
                "{bad}"
            );
        }
    }
}
