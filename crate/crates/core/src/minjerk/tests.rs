use super::*;
use crate::centerline::parameterize_bspline;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_vec(rng: &mut ChaCha8Rng, s: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(-s..s),
        rng.random_range(-s..s),
        rng.random_range(-s..s),
    )
}

struct Instance {
    waypoints: Vec<Vec3>,
    durations: Vec<f64>,
    start: BoundaryState,
    end: BoundaryState,
}

fn random_instance(rng: &mut ChaCha8Rng, m: usize) -> Instance {
    let mut waypoints = vec![rand_vec(rng, 1.0)];
    for _ in 1..m {
        let prev = *waypoints.last().unwrap();
        waypoints.push(prev + rand_vec(rng, 1.0));
    }
    let durations = (0..m - 1).map(|_| rng.random_range(0.3..1.5)).collect();
    let start = BoundaryState::new(waypoints[0], rand_vec(rng, 1.0), rand_vec(rng, 1.0));
    let end = BoundaryState::new(waypoints[m - 1], rand_vec(rng, 1.0), rand_vec(rng, 1.0));
    Instance {
        waypoints,
        durations,
        start,
        end,
    }
}

fn solve(i: &Instance) -> PiecewisePolyTrajectory {
    min_jerk(&i.waypoints, &i.durations, &i.start, &i.end).unwrap()
}

/// Gauss-Legendre nodes/weights on [-1, 1], exact to degree 7.
const GL4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

#[test]
fn rest_to_rest_matches_closed_form() {
    let (l, t) = (2.5, 1.7);
    let traj = min_jerk(
        &[Vec3::zeros(), Vec3::new(l, 0.0, 0.0)],
        &[t],
        &BoundaryState::at_rest(Vec3::zeros()),
        &BoundaryState::at_rest(Vec3::new(l, 0.0, 0.0)),
    )
    .unwrap();
    for k in 0..=100 {
        let s = k as f64 / 100.0;
        let x = l * (10.0 * s.powi(3) - 15.0 * s.powi(4) + 6.0 * s.powi(5));
        let p = traj.eval(s * t, 0).value;
        assert!((p.x - x).abs() < 1e-9 && p.y.abs() < 1e-12 && p.z.abs() < 1e-12);
    }
    // integral of (L/T^3 * (60 - 360 s + 360 s^2))^2 over [0, T]
    let expected = 720.0 * l * l / t.powi(5);
    assert!((traj.jerk_cost() / expected - 1.0).abs() < 1e-9);
}

#[test]
fn constant_state_gives_zero_jerk() {
    let p = Vec3::new(1.0, -2.0, 0.3);
    let traj = min_jerk(
        &[p, p],
        &[0.8],
        &BoundaryState::at_rest(p),
        &BoundaryState::at_rest(p),
    )
    .unwrap();
    assert!(traj.jerk_cost() < 1e-20);
    assert!((traj.eval(0.37, 0).value - p).norm() < 1e-12);
}

#[test]
fn boundary_and_junction_exactness() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let m = rng.random_range(2..9);
        let inst = random_instance(&mut rng, m);
        let traj = solve(&inst);
        for d in 0..3 {
            assert!((traj.eval(0.0, d).value - inst.start.derivative(d)).norm() < 1e-9);
            assert!((traj.eval(traj.end_time(), d).value - inst.end.derivative(d)).norm() < 1e-9);
        }
        for (j, pair) in traj.segments().windows(2).enumerate() {
            assert!((pair[0].eval(pair[0].duration, 0) - inst.waypoints[j + 1]).norm() < 1e-9);
            for d in 0..=4 {
                let left = pair[0].eval(pair[0].duration, d);
                let right = pair[1].eval(0.0, d);
                assert!(
                    (left - right).norm() < 1e-9 * (1.0 + left.norm()),
                    "deriv {d}"
                );
            }
        }
    }
}

/// Jerk cost of `traj` plus per-segment bumps `tau^3 (T - tau)^3 * c_j`,
/// which vanish with their first two derivatives at both segment ends.
fn perturbed_cost(traj: &PiecewisePolyTrajectory, bumps: &[Vec3]) -> f64 {
    let mut total = 0.0;
    for (seg, c) in traj.segments().iter().zip(bumps) {
        let t = seg.duration;
        // third derivative of tau^3 (T - tau)^3 = T^3 tau^3 - 3T^2 tau^4 + 3T tau^5 - tau^6
        let bump_jerk = |tau: f64| {
            6.0 * t.powi(3) - 72.0 * t * t * tau + 180.0 * t * tau * tau - 120.0 * tau.powi(3)
        };
        for (x, w) in GL4 {
            let tau = 0.5 * t * (x + 1.0);
            let j = seg.eval(tau, 3) + c * bump_jerk(tau);
            total += 0.5 * t * w * j.norm_squared();
        }
    }
    total
}

#[test]
fn perturbations_never_lower_the_cost() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let inst = random_instance(&mut rng, 5);
        let traj = solve(&inst);
        let base = traj.jerk_cost();
        assert!((perturbed_cost(&traj, &[Vec3::zeros(); 4]) / base - 1.0).abs() < 1e-9);
        for _ in 0..100 {
            let scale = 10f64.powf(rng.random_range(-4.0..0.0));
            let bumps: Vec<Vec3> = (0..4).map(|_| rand_vec(&mut rng, scale)).collect();
            assert!(perturbed_cost(&traj, &bumps) >= base * (1.0 - 1e-12));
        }
    }
}

#[test]
fn quadrature_matches_reported_cost() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let inst = random_instance(&mut rng, 6);
    let traj = solve(&inst);
    // composite Simpson on the jerk magnitude squared
    let steps = 20_000;
    let h = traj.duration() / steps as f64;
    let f = |k: usize| traj.eval(k as f64 * h, 3).value.norm_squared();
    let mut sum = f(0) + f(steps);
    for k in 1..steps {
        sum += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k);
    }
    let numeric = sum * h / 3.0;
    // Simpson is inexact across junctions where jerk is only continuous
    assert!((numeric / traj.jerk_cost() - 1.0).abs() < 1e-6);
}

#[test]
fn time_scaling_law() {
    let l = Vec3::new(1.0, 2.0, -0.5);
    let w = [Vec3::zeros(), l * 0.3, l * 0.7, l];
    let base = min_jerk(
        &w,
        &[0.4, 0.6, 0.5],
        &BoundaryState::at_rest(w[0]),
        &BoundaryState::at_rest(l),
    )
    .unwrap()
    .jerk_cost();
    for alpha in [0.5, 1.7, 3.0] {
        let d = [0.4 * alpha, 0.6 * alpha, 0.5 * alpha];
        let c = min_jerk(
            &w,
            &d,
            &BoundaryState::at_rest(w[0]),
            &BoundaryState::at_rest(l),
        )
        .unwrap()
        .jerk_cost();
        assert!((c / base / alpha.powi(-5) - 1.0).abs() < 1e-6);
    }
}

#[test]
fn rejects_bad_input() {
    let p = [Vec3::zeros(), Vec3::x()];
    let rest = BoundaryState::at_rest;
    assert_eq!(
        min_jerk(&p[..1], &[], &rest(p[0]), &rest(p[0])),
        Err(MinJerkError::TooFewWaypoints(1))
    );
    assert!(matches!(
        min_jerk(&p, &[1.0, 1.0], &rest(p[0]), &rest(p[1])),
        Err(MinJerkError::CountMismatch { .. })
    ));
    assert!(matches!(
        min_jerk(&p, &[0.0], &rest(p[0]), &rest(p[1])),
        Err(MinJerkError::BadDuration { .. })
    ));
    assert!(matches!(
        min_jerk(&p, &[1.0], &rest(Vec3::y()), &rest(p[1])),
        Err(MinJerkError::BoundaryMismatch { which: "start", .. })
    ));
}

#[test]
fn eval_clamps_outside_span() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inst = random_instance(&mut rng, 3);
    let traj = solve(&inst).with_start_time(10.0);
    let late = traj.eval(traj.end_time() + 5.0, 1);
    assert!(late.clamped);
    assert!((late.value - inst.end.velocity()).norm() < 1e-9);
    let early = traj.eval(3.0, 0);
    assert!(early.clamped);
    assert!((early.value - inst.start.position()).norm() < 1e-9);
    assert!(!traj.eval(10.0, 0).clamped);
    assert!(!traj.eval(traj.end_time(), 0).clamped);
}

fn line_spline(v: f64, n: usize) -> UniformBSpline {
    let dir = Vec3::new(1.0, 1.0, 0.2).normalize();
    let w: Vec<Vec3> = (0..n)
        .map(|i| dir * (0.1 * i as f64) + Vec3::new(1.0, 2.0, 3.0))
        .collect();
    parameterize_bspline(&w, 0.1, v).unwrap()
}

#[test]
fn from_bspline_reproduces_a_line() {
    let spline = line_spline(1.2, 21);
    let start = spline.knot_state(0);
    let hard = BoundaryState::new(start.position, start.velocity, start.acceleration);
    let traj = from_bspline(&spline, 4.0 * spline.dt(), &hard).unwrap();
    let end = traj.end_time();
    for k in 0..=200 {
        let t = spline.start_time() + (end - spline.start_time()) * k as f64 / 200.0;
        let want = spline.position(t).unwrap();
        assert!((traj.eval(t, 0).value - want).norm() < 1e-6);
    }
}

#[test]
fn from_bspline_counts_samples() {
    let spline = line_spline(1.0, 21);
    let half = spline.duration() / 2.0;
    let s = spline.knot_state(0);
    let hard = BoundaryState::new(s.position, s.velocity, s.acceleration);
    let traj = from_bspline(&spline, half, &hard).unwrap();
    assert_eq!(traj.segments().len(), 2);
    assert!(matches!(
        from_bspline(&spline, spline.duration() * 0.6, &hard),
        Err(MinJerkError::DomainTooShort { .. })
    ));
    assert!(matches!(
        from_bspline(&spline, spline.dt() * 0.5, &hard),
        Err(MinJerkError::SampleTooFine { .. })
    ));
}

#[test]
fn from_bspline_hard_start_rejoins() {
    let spline = line_spline(1.0, 31);
    let s = spline.knot_state(0);
    let dir = s.velocity.normalize();
    let lateral = dir.cross(&Vec3::z()).normalize();
    let hard = BoundaryState::new(s.position + lateral * 0.05, s.velocity, s.acceleration);
    let sample_dt = 4.0 * spline.dt();
    let traj = from_bspline(&spline, sample_dt, &hard).unwrap();
    assert!((traj.eval(spline.start_time(), 0).value - hard.position()).norm() < 1e-9);
    for d in 0..3 {
        assert!((traj.start_state().derivative(d) - hard.derivative(d)).norm() < 1e-9);
    }
    let rejoin = spline.start_time() + 2.0 * sample_dt;
    let mut t = rejoin;
    while t <= traj.end_time() {
        let p = traj.eval(t, 0).value;
        let q = spline.position(t).unwrap();
        assert!((p - q).norm() < 0.01, "t = {t}: {}", (p - q).norm());
        t += 0.01;
    }
}

#[test]
fn stop_trajectory_comes_to_rest() {
    let state = BoundaryState::new(
        Vec3::new(1.0, 0.0, 0.5),
        Vec3::new(1.5, 0.0, 0.0),
        Vec3::zeros(),
    );
    let traj = stop_trajectory(&state, 3.0, 4.0, 0.5).unwrap();
    let d = 1.5 * 1.5 / 6.0;
    assert!((traj.duration() - 0.5).abs() < 1e-12);
    let end = traj.end_state();
    assert!((end.position() - Vec3::new(1.0 + d, 0.0, 0.5)).norm() < 1e-9);
    assert!(end.velocity().norm() < 1e-9 && end.acceleration().norm() < 1e-9);
    assert!((traj.eval(4.0, 1).value - state.velocity()).norm() < 1e-9);
    let hold = stop_trajectory(&BoundaryState::at_rest(Vec3::x()), 3.0, 0.0, 0.5).unwrap();
    assert!((hold.duration() - 0.5).abs() < 1e-12);
}

#[test]
fn csv_columns() {
    let traj = stop_trajectory(
        &BoundaryState::new(Vec3::zeros(), Vec3::x(), Vec3::zeros()),
        3.0,
        0.0,
        0.5,
    )
    .unwrap();
    let csv = traj.to_csv(100.0);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,px,py,pz,vx,vy,vz,ax,ay,az,jx,jy,jz"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 34);
    assert!(rows.iter().all(|r| r.split(',').count() == 13));
}
