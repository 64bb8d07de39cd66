//! Limited-memory BFGS with Armijo backtracking.

use std::collections::VecDeque;

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when `max |g_i|` falls below this.
    pub gradient_tolerance: f64,
    /// Stop when an iteration lowers the cost by less than this fraction.
    pub relative_decrease_tolerance: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iterations: 200,
            gradient_tolerance: 1e-5,
            relative_decrease_tolerance: 1e-8,
            armijo: 1e-4,
            max_backtracks: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradientSmall,
    DecreaseSmall,
    MaxIterations,
    /// No step along the search direction lowered the cost.
    LineSearchStalled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub cost: f64,
    pub gradient_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub cost: f64,
    pub reason: StopReason,
    pub trace: Vec<TraceRow>,
}

/// Non-finite cost or gradient; carries the last finite iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct Diverged {
    pub last: Vec<f64>,
    pub iteration: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Minimizes `f`, which returns the cost and writes the gradient.
pub fn minimize<F>(f: F, x0: Vec<f64>, opts: &LbfgsOptions) -> Result<Minimum, Diverged>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    minimize_preconditioned(f, x0, opts, None)
}

/// In-place application of an initial inverse-Hessian estimate.
pub type Preconditioner<'a> = &'a dyn Fn(&mut [f64]);

/// [`minimize`] with a fixed initial inverse Hessian `precond` in place of
/// the usual scaled identity.
pub fn minimize_preconditioned<F>(
    mut f: F,
    x0: Vec<f64>,
    opts: &LbfgsOptions,
    precond: Option<Preconditioner<'_>>,
) -> Result<Minimum, Diverged>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut cost = f(&x, &mut g);
    if !cost.is_finite() || !finite(&g) {
        return Err(Diverged {
            last: x,
            iteration: 0,
        });
    }
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut trace = vec![TraceRow {
        iteration: 0,
        cost,
        gradient_norm: inf_norm(&g),
    }];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut alpha = vec![0.0; opts.memory];

    for iteration in 1..=opts.max_iterations {
        if inf_norm(&g) < opts.gradient_tolerance {
            return Ok(Minimum {
                x,
                cost,
                reason: StopReason::GradientSmall,
                trace,
            });
        }

        // two-loop recursion
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        for (i, (s, y, rho)) in history.iter().enumerate().rev() {
            alpha[i] = rho * dot(s, &d);
            d.iter_mut()
                .zip(y)
                .for_each(|(di, yi)| *di -= alpha[i] * yi);
        }
        if let Some(p) = precond {
            p(&mut d);
        } else {
            let gamma = history
                .back()
                .map(|(s, y, _)| dot(s, y) / dot(y, y))
                .unwrap_or_else(|| 1.0 / inf_norm(&g).max(1.0));
            d.iter_mut().for_each(|di| *di *= gamma);
        }
        for (i, (s, y, rho)) in history.iter().enumerate() {
            let beta = rho * dot(y, &d);
            d.iter_mut()
                .zip(s)
                .for_each(|(di, si)| *di += (alpha[i] - beta) * si);
        }
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            // not a descent direction; restart from steepest descent
            history.clear();
            d = g.iter().map(|v| -v / inf_norm(&g).max(1.0)).collect();
            if let Some(p) = precond {
                d = g.iter().map(|v| -v).collect();
                p(&mut d);
            }
            slope = dot(&g, &d);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            for i in 0..n {
                x_new[i] = x[i] + step * d[i];
            }
            let c = f(&x_new, &mut g_new);
            if !c.is_finite() || !finite(&g_new) {
                step *= 0.5;
                continue;
            }
            if c <= cost + opts.armijo * step * slope {
                accepted = Some(c);
                break;
            }
            step *= 0.5;
        }
        let Some(c_new) = accepted else {
            if !cost.is_finite() {
                return Err(Diverged { last: x, iteration });
            }
            return Ok(Minimum {
                x,
                cost,
                reason: StopReason::LineSearchStalled,
                trace,
            });
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let decrease = cost - c_new;
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        let previous = cost;
        cost = c_new;
        trace.push(TraceRow {
            iteration,
            cost,
            gradient_norm: inf_norm(&g),
        });
        if inf_norm(&g) < opts.gradient_tolerance {
            return Ok(Minimum {
                x,
                cost,
                reason: StopReason::GradientSmall,
                trace,
            });
        }
        if decrease <= opts.relative_decrease_tolerance * previous.abs() {
            return Ok(Minimum {
                x,
                cost,
                reason: StopReason::DecreaseSmall,
                trace,
            });
        }
    }
    Ok(Minimum {
        x,
        cost,
        reason: StopReason::MaxIterations,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let opts = LbfgsOptions {
            relative_decrease_tolerance: 0.0,
            ..LbfgsOptions::default()
        };
        let m = minimize(f, vec![-1.2, 1.0], &opts).unwrap();
        assert_eq!(m.reason, StopReason::GradientSmall);
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5);
        assert!(m.trace.windows(2).all(|w| w[1].cost <= w[0].cost));
    }

    #[test]
    fn quadratic_converges_fast() {
        let diag = [1.0, 10.0, 100.0, 0.5];
        let f = |x: &[f64], g: &mut [f64]| {
            let mut c = 0.0;
            for i in 0..4 {
                g[i] = diag[i] * (x[i] - i as f64);
                c += 0.5 * diag[i] * (x[i] - i as f64).powi(2);
            }
            c
        };
        let m = minimize(f, vec![5.0; 4], &LbfgsOptions::default()).unwrap();
        for (i, v) in m.x.iter().enumerate() {
            assert!((v - i as f64).abs() < 1e-5);
        }
        assert!(m.trace.len() < 40);
    }

    #[test]
    fn nan_start_diverges() {
        let f = |_: &[f64], g: &mut [f64]| {
            g[0] = f64::NAN;
            1.0
        };
        assert!(minimize(f, vec![0.0], &LbfgsOptions::default()).is_err());
    }
}
