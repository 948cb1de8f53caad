//! Oracles shared by the integration tests, written from the formulas
//! without the library's numerics, and the drivers comparing against them.

#![allow(dead_code)]

use gamma_regress::divergence::GammaObjective;
use gamma_regress::{
    ConditionalModel, CrossEntropyKind, GammaParam, GaussianLinearModel, LogisticModel, PoissonModel, RegressionDataset,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Central differences with a relative step.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, theta: &[f64], h: f64) -> Vec<f64> {
    (0..theta.len())
        .map(|j| {
            let step = h * (1.0 + theta[j].abs());
            let mut up = theta.to_vec();
            let mut down = theta.to_vec();
            up[j] += step;
            down[j] -= step;
            (f(&up) - f(&down)) / (2.0 * step)
        })
        .collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖a − b‖₂ / ‖b‖₂`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(b).max(1e-300)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Plain Newton-Raphson for the logistic log likelihood.
pub fn newton_logistic_mle(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let k = rows[0].len() + 1;
    let mut beta = vec![0.0; k];
    for _ in 0..100 {
        let mut grad = vec![0.0; k];
        let mut hess = vec![vec![0.0; k]; k];
        for (x, &yi) in rows.iter().zip(y) {
            let z: Vec<f64> = std::iter::once(1.0).chain(x.iter().copied()).collect();
            let eta: f64 = z.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let p = 1.0 / (1.0 + (-eta).exp());
            for i in 0..k {
                grad[i] += (yi - p) * z[i];
                for j in 0..k {
                    hess[i][j] += p * (1.0 - p) * z[i] * z[j];
                }
            }
        }
        let step = solve(hess, grad);
        beta.iter_mut().zip(&step).for_each(|(b, s)| *b += s);
        if step.iter().all(|s| s.abs() < 1e-13) {
            break;
        }
    }
    beta
}

pub fn logistic_data(n: usize, beta: &[f64], seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = beta.len() - 1;
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let eta = beta[0] + x.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>();
        y.push(if rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()) { 1.0 } else { 0.0 });
        rows.push(x);
    }
    (rows, y)
}

/// Responses drawn from the model itself at standard normal covariates.
pub fn model_data(model: &dyn ConditionalModel, theta: &[f64], n: usize, p: usize, seed: u64) -> RegressionDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        y.push(model.sample_response(theta, &x, &mut rng));
        rows.push(x);
    }
    RegressionDataset::from_rows(rows, y).unwrap()
}

pub fn normal_density(y: f64, mean: f64, sd: f64) -> f64 {
    (-0.5 * ((y - mean) / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

/// Composite Simpson rule with `m` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for i in 1..m {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// `Σ_k f(k)^{1+γ}` for a Poisson pmf, by the recursion `f(k+1) = f(k) λ/(k+1)`.
pub fn poisson_power_sum(lambda: f64, gamma: f64) -> f64 {
    let mut pmf = (-lambda).exp();
    let mut total = 0.0;
    let last = (lambda + 40.0 * lambda.sqrt() + 100.0) as usize;
    for k in 0..=last {
        total += pmf.powf(1.0 + gamma);
        pmf *= lambda / (k + 1) as f64;
    }
    total
}

/// `∫ φ_σ(t)^{1+γ} dt` by Simpson's rule.
pub fn gaussian_power_integral(sigma: f64, gamma: f64) -> f64 {
    simpson(|t| normal_density(t, 0.0, sigma).powf(1.0 + gamma), -12.0 * sigma, 12.0 * sigma, 2000)
}

/// Brute-force `d̄₁` for a Gaussian location model with known σ, straight from
/// the formula; `c` is [`gaussian_power_integral`].
pub fn gaussian_location_type1(mu: f64, sigma: f64, c: f64, y: &[f64], gamma: f64) -> f64 {
    let mean: f64 = y.iter().map(|&v| normal_density(v, mu, sigma).powf(gamma)).sum::<f64>() / y.len() as f64;
    -(mean / c.powf(gamma / (1.0 + gamma))).ln() / gamma
}

pub fn families() -> Vec<(Box<dyn ConditionalModel>, Vec<f64>)> {
    vec![
        (Box::new(LogisticModel), vec![0.2, 1.0, -0.7]),
        (Box::new(GaussianLinearModel::new()), vec![0.5, -1.0, 0.8, 1.3]),
        (Box::new(PoissonModel), vec![0.3, 0.4, -0.2]),
    ]
}

/// Brute-force argmin of [`gaussian_location_type1`] over `[-10, 10]` at step 1e-4.
pub fn gaussian_location_grid_argmin(sigma: f64, y: &[f64], gamma: f64) -> (f64, f64) {
    let c = gaussian_power_integral(sigma, gamma);
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=200_000 {
        let mu = -10.0 + i as f64 * 1e-4;
        let v = gaussian_location_type1(mu, sigma, c, y, gamma);
        if v < best.0 {
            best = (v, mu);
        }
    }
    best
}

/// Worst relative gradient error over 20 random θ for every model, type and γ.
pub fn worst_objective_gradient_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for (model, base) in families() {
        let data = model_data(model.as_ref(), &base, 60, 2, 3);
        for kind in CrossEntropyKind::ALL {
            for g in [0.1, 0.5, 1.0] {
                let obj = GammaObjective::new(model.as_ref(), &data, gamma(g), kind);
                for _ in 0..20 {
                    let mut theta: Vec<f64> = base.iter().map(|b| b + rng.random_range(-0.5..0.5)).collect();
                    if model.name() == "gaussian" {
                        theta[3] = theta[3].abs() + 0.3;
                    }
                    let (_, analytic) = obj.value_and_gradient(&theta).unwrap();
                    let fd = fd_gradient(|t| obj.value(t).unwrap(), &theta, 1e-5);
                    worst = worst.max(relative_error(&analytic, &fd));
                }
            }
        }
    }
    worst
}

/// Worst discrepancies `(logistic, gaussian, poisson)` between the library's power
/// integrals and direct summation or Simpson quadrature.
pub fn power_integral_discrepancies() -> (f64, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut lw, mut gw, mut pw): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let gaussian = GaussianLinearModel::new();
    for _ in 0..20 {
        let g: f64 = rng.random_range(0.05..2.0);
        let x = [rng.random_range(-3.0..3.0)];
        let beta: [f64; 2] = [rng.random_range(-1.0..1.0), rng.random_range(-2.0..2.0)];
        let eta = beta[0] + beta[1] * x[0];
        let p = 1.0 / (1.0 + (-eta).exp());
        let direct = p.powf(1.0 + g) + (1.0 - p).powf(1.0 + g);
        lw = lw.max((LogisticModel.power_integral(&beta, &x, gamma(g)).unwrap() - direct).abs());

        let sigma = rng.random_range(0.3..3.0);
        let theta = [beta[0], beta[1], sigma];
        let quad = simpson(|t| normal_density(t, eta, sigma).powf(1.0 + g), eta - 14.0 * sigma, eta + 14.0 * sigma, 20_000);
        gw = gw.max((gaussian.power_integral(&theta, &x, gamma(g)).unwrap() - quad).abs());

        let pb = [rng.random_range(-1.0..2.0), rng.random_range(-1.0..1.0)];
        let lambda = (pb[0] + pb[1] * x[0]).exp();
        let sum = poisson_power_sum(lambda, g);
        pw = pw.max((PoissonModel.power_integral(&pb, &x, gamma(g)).unwrap() - sum).abs());
    }
    (lw, gw, pw)
}


pub fn gamma(v: f64) -> GammaParam {
    GammaParam::new(v).unwrap()
}
