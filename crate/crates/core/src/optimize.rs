//! Quasi-Newton minimisation (BFGS with Armijo backtracking).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BfgsOptions {
    pub max_iters: usize,
    /// Stop when the Euclidean gradient norm falls below this.
    pub grad_tol: f64,
    /// Stop when `‖Δθ‖∞ < step_tol (1 + ‖θ‖∞)`.
    pub step_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tol: 1e-8,
            step_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    StepTolerance,
    LineSearchStalled,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Objective value after each accepted step, starting with the initial point.
    pub history: Vec<f64>,
}

fn finite_eval<F>(f: &mut F, x: &DVector<f64>) -> Option<(f64, DVector<f64>)>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    match f(x.as_slice()) {
        Ok((v, g)) if v.is_finite() && g.iter().all(|d| d.is_finite()) => Some((v, DVector::from_vec(g))),
        _ => None,
    }
}

/// Minimise `f`, which returns value and gradient.
///
/// Trial points where `f` fails or is non-finite are treated as `+∞` and
/// cause backtracking. Failure at the starting point is an error.
pub fn minimize_bfgs<F>(mut f: F, x0: &[f64], opts: &BfgsOptions) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let k = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let (mut fx, g0) = f(x.as_slice())?;
    if !fx.is_finite() || g0.iter().any(|d| !d.is_finite()) {
        return Err(Error::NoDescent);
    }
    let mut g = DVector::from_vec(g0);
    let mut h = DMatrix::<f64>::identity(k, k);
    let mut fresh = true;
    let mut history = vec![fx];
    let mut iterations = 0;

    let termination = loop {
        if g.norm() <= opts.grad_tol {
            break Termination::GradientTolerance;
        }
        if iterations >= opts.max_iters {
            break Termination::MaxIterations;
        }
        let mut d = -(&h * &g);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            h = DMatrix::identity(k, k);
            fresh = true;
            d = -g.clone();
            slope = g.dot(&d);
        }

        let mut accepted = None;
        let mut t = 1.0;
        for _ in 0..MAX_BACKTRACKS {
            let trial = &x + t * &d;
            if let Some((ft, gt)) = finite_eval(&mut f, &trial) {
                if ft <= fx + ARMIJO_C1 * t * slope {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            if fresh {
                break Termination::LineSearchStalled;
            }
            h = DMatrix::identity(k, k);
            fresh = true;
            continue;
        };

        iterations += 1;
        let s = &x_new - &x;
        let y = &g_new - &g;
        let step = s.amax();
        let scale = 1.0 + x.amax();
        x = x_new;
        fx = f_new;
        g = g_new;
        history.push(fx);

        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                h *= sy / y.dot(&y);
                fresh = false;
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H ← (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ, expanded
            h += (rho * rho * yhy + rho) * (&s * s.transpose()) - rho * (&hy * s.transpose() + &s * hy.transpose());
        }

        if step < opts.step_tol * scale {
            break if g.norm() <= opts.grad_tol {
                Termination::GradientTolerance
            } else {
                Termination::StepTolerance
            };
        }
    };

    Ok(Minimum {
        grad_norm: g.norm(),
        x: x.as_slice().to_vec(),
        value: fx,
        gradient: g.as_slice().to_vec(),
        iterations,
        termination,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Ok((v, g))
    }

    #[test]
    fn quadratic_in_few_steps() {
        let f = |x: &[f64]| Ok(((x[0] - 3.0).powi(2) + 10.0 * (x[1] + 1.0).powi(2), vec![2.0 * (x[0] - 3.0), 20.0 * (x[1] + 1.0)]));
        let m = minimize_bfgs(f, &[0.0, 0.0], &BfgsOptions::default()).unwrap();
        assert_eq!(m.termination, Termination::GradientTolerance);
        assert!((m.x[0] - 3.0).abs() < 1e-9 && (m.x[1] + 1.0).abs() < 1e-9);
        assert!(m.iterations < 20);
    }

    #[test]
    fn rosenbrock_converges() {
        let m = minimize_bfgs(rosenbrock, &[-1.2, 1.0], &BfgsOptions::default()).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-7 && (m.x[1] - 1.0).abs() < 1e-7, "{:?}", m);
        assert!(m.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn failing_region_is_avoided() {
        // undefined for x < 0.5, minimum at x = 1
        let f = |x: &[f64]| {
            if x[0] < 0.5 {
                Err(Error::DegenerateObjective)
            } else {
                Ok(((x[0] - 1.0).powi(2), vec![2.0 * (x[0] - 1.0)]))
            }
        };
        let m = minimize_bfgs(f, &[5.0], &BfgsOptions::default()).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn non_finite_start_is_no_descent() {
        let f = |_: &[f64]| Ok((f64::NAN, vec![0.0]));
        assert!(matches!(minimize_bfgs(f, &[0.0], &BfgsOptions::default()), Err(Error::NoDescent)));
    }

    #[test]
    fn max_iterations_reported() {
        let opts = BfgsOptions {
            max_iters: 2,
            ..BfgsOptions::default()
        };
        let m = minimize_bfgs(rosenbrock, &[-1.2, 1.0], &opts).unwrap();
        assert_eq!(m.termination, Termination::MaxIterations);
        assert_eq!(m.iterations, 2);
    }
}
