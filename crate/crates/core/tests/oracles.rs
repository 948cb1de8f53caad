mod common;

use common::*;
use gamma_regress::estimator::{fit, FitConfig, Init};
use gamma_regress::{ConditionalModel, CrossEntropyKind, GaussianLinearModel, LogisticModel, RegressionDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn model_log_density_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (model, base) in families() {
        let gaussian_sigma = |t: &mut Vec<f64>| {
            if model.name() == "gaussian" {
                let last = t.len() - 1;
                t[last] = t[last].abs() + 0.3;
            }
        };
        for _ in 0..20 {
            let mut theta: Vec<f64> = base.iter().map(|b| b + rng.random_range(-0.5..0.5)).collect();
            gaussian_sigma(&mut theta);
            let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let y = model.sample_response(&theta, &x, &mut rng);
            let analytic = model.log_density_gradient(&theta, &x, y).unwrap();
            let fd = fd_gradient(|t| model.log_density(t, &x, y).unwrap(), &theta, 1e-6);
            assert!(relative_error(&analytic, &fd) <= 1e-6, "{} {theta:?}", model.name());
            let g = gamma(rng.random_range(0.1..1.5));
            let analytic = model.log_power_integral_gradient(&theta, &x, g).unwrap();
            let fd = fd_gradient(|t| model.log_power_integral(t, &x, g).unwrap(), &theta, 1e-6);
            let scale = norm(&fd).max(1e-3);
            let diff: Vec<f64> = analytic.iter().zip(&fd).map(|(a, b)| a - b).collect();
            assert!(norm(&diff) / scale <= 1e-6, "{} power {theta:?}", model.name());
        }
    }
}

#[test]
fn objective_gradients_match_finite_differences() {
    let worst = worst_objective_gradient_error();
    assert!(worst <= 1e-5, "{worst}");
}

#[test]
fn small_gamma_fit_matches_newton_mle() {
    for seed in 0..5 {
        let (rows, y) = logistic_data(400, &[0.3, 1.0, -0.5], 100 + seed);
        let oracle = newton_logistic_mle(&rows, &y);
        let data = RegressionDataset::from_rows(rows, y).unwrap();
        let r = fit(&LogisticModel, &data, &FitConfig::new(gamma(1e-4), CrossEntropyKind::Type1)).unwrap();
        assert!(max_abs_diff(&r.theta_hat, &oracle) <= 1e-3, "{:?} vs {oracle:?}", r.theta_hat);
        assert!(max_abs_diff(&LogisticModel.mle(&data).unwrap(), &oracle) <= 1e-8);
    }
}

#[test]
fn gaussian_location_fit_matches_grid_search() {
    let y = [0.1, 0.5, 3.0];
    let sigma = 1.0;
    let model = GaussianLinearModel::with_known_sigma(sigma).unwrap();
    let data = RegressionDataset::from_rows(vec![vec![]; 3], y.to_vec()).unwrap();
    for g in [0.5, 1.0] {
        let best = gaussian_location_grid_argmin(sigma, &y, g);
        for kind in CrossEntropyKind::ALL {
            let r = fit(&model, &data, &FitConfig::new(gamma(g), kind)).unwrap();
            assert!((r.theta_hat[0] - best.1).abs() <= 1e-4, "{kind} γ={g}: {} vs {}", r.theta_hat[0], best.1);
            assert!((r.objective - best.0).abs() <= 1e-7);
        }
    }
}

#[test]
fn logistic_tiny_instance_matches_grid_search() {
    let rows = vec![vec![-1.0], vec![-0.3], vec![0.4], vec![1.2], vec![2.0]];
    let y = vec![0.0, 1.0, 0.0, 1.0, 1.0];
    let data = RegressionDataset::from_rows(rows.clone(), y.clone()).unwrap();
    let g = 0.5;
    let d1 = |b0: f64, b1: f64| {
        let mut s = 0.0;
        for (x, &yi) in rows.iter().zip(&y) {
            let p = 1.0 / (1.0 + (-(b0 + b1 * x[0])).exp());
            let f = if yi == 1.0 { p } else { 1.0 - p };
            let c = p.powf(1.0 + g) + (1.0 - p).powf(1.0 + g);
            s += f.powf(g) / c.powf(g / (1.0 + g));
        }
        -(s / 5.0).ln() / g
    };
    let r = fit(&LogisticModel, &data, &FitConfig::new(gamma(g), CrossEntropyKind::Type1).with_init(Init::Zero)).unwrap();
    // coarse grid around the fit, then every neighbour at 1e-3 must be no better
    let (b0, b1) = (r.theta_hat[0], r.theta_hat[1]);
    for i in -20..=20 {
        for j in -20..=20 {
            let v = d1(b0 + i as f64 * 1e-3, b1 + j as f64 * 1e-3);
            assert!(v >= r.objective - 1e-12, "({i},{j})");
        }
    }
    assert!((d1(b0, b1) - r.objective).abs() < 1e-12);
}

#[test]
fn power_integrals_match_direct_evaluation() {
    let (l, g, p) = power_integral_discrepancies();
    assert!(l <= 1e-8, "logistic {l}");
    assert!(g <= 1e-8, "gaussian {g}");
    assert!(p <= 1e-6, "poisson {p}");
}
