mod common;

use approx::assert_relative_eq;
use common::gamma;
use gamma_regress::bench::{compute_mse, MseReport, ReplicateRecord};
use gamma_regress::divergence::{empirical_cross_entropy, CrossEntropyValue};
use gamma_regress::estimator::{fit, FitConfig};
use gamma_regress::numeric::log_sum_exp;
use gamma_regress::{CrossEntropyKind, GaussianLinearModel, LogisticModel, RegressionDataset};
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = CrossEntropyKind> {
    prop_oneof![Just(CrossEntropyKind::Type1), Just(CrossEntropyKind::Type2)]
}

fn logistic_rows(n: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (
        prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 2), n),
        prop::collection::vec(prop::bool::ANY, n),
    )
        .prop_map(|(rows, y)| (rows, y.into_iter().map(|b| f64::from(u8::from(b))).collect()))
}

proptest! {
    #[test]
    fn transform_is_strictly_increasing(a in -20.0..20.0f64, delta in 1e-3..5.0f64, g in 0.05..3.0f64, k in kind()) {
        let g = gamma(g);
        let lo = CrossEntropyValue { value: a, kind: k, transformed: false }.transformed(g);
        let hi = CrossEntropyValue { value: a + delta, kind: k, transformed: false }.transformed(g);
        prop_assert!(lo.value < hi.value);
        prop_assert!(hi.value < 0.0);
        prop_assert_eq!(lo.transformed(g), lo);
    }

    #[test]
    fn log_sum_exp_shifts(values in prop::collection::vec(-50.0..50.0f64, 1..40), shift in -500.0..500.0f64) {
        let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
        assert_relative_eq!(log_sum_exp(&shifted), log_sum_exp(&values) + shift, epsilon = 1e-9, max_relative = 1e-12);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(log_sum_exp(&values) >= max);
        prop_assert!(log_sum_exp(&values) <= max + (values.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn mse_is_nonnegative_and_vanishes_at_truth(a in prop::collection::vec(-10.0..10.0f64, 1..8), shift in -1.0..1.0f64) {
        let b: Vec<f64> = a.iter().map(|v| v + shift).collect();
        let mse = compute_mse(&a, &b).unwrap();
        assert_relative_eq!(mse, shift * shift, max_relative = 1e-9, epsilon = 1e-15);
        prop_assert_eq!(compute_mse(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn cross_entropy_ignores_row_order((rows, y) in logistic_rows(12), beta in prop::collection::vec(-2.0..2.0f64, 3), g in 0.1..2.0f64, k in kind()) {
        let data = RegressionDataset::from_rows(rows.clone(), y.clone()).unwrap();
        let reversed = RegressionDataset::from_rows(rows.into_iter().rev().collect(), y.into_iter().rev().collect()).unwrap();
        let a = empirical_cross_entropy(&LogisticModel, &beta, &data, gamma(g), k).unwrap();
        let b = empirical_cross_entropy(&LogisticModel, &beta, &reversed, gamma(g), k).unwrap();
        assert_relative_eq!(a.value, b.value, max_relative = 1e-12, epsilon = 1e-12);
    }

    #[test]
    fn replicate_csv_round_trips(mses in prop::collection::vec(prop::option::weighted(0.9, 0.0..1e3f64), 1..12)) {
        let replicates: Vec<ReplicateRecord> = mses
            .iter()
            .enumerate()
            .map(|(i, &mse)| ReplicateRecord {
                epsilon: 0.1,
                gamma: 0.5,
                kind: CrossEntropyKind::Type1,
                replicate: i,
                seed: 17 * i as u64 + 3,
                outliers: i,
                mse,
                converged: mse.is_some(),
                iters: 2 * i,
                theta_hat: vec![mse.unwrap_or(0.0).sqrt(), -1.0 / 3.0],
                error: mse.is_none().then(|| "no descent".to_string()),
            })
            .collect();
        let report = MseReport::from_records(vec![0.1], vec![0.5], vec![CrossEntropyKind::Type1], replicates);
        let text = report.to_replicates_csv().unwrap();
        let back = MseReport::from_replicates_csv(&text).unwrap();
        // an all-failed cell has NaN summaries, so compare cells through their text
        prop_assert_eq!(&back.replicates, &report.replicates);
        prop_assert_eq!(back.to_cells_csv().unwrap(), report.to_cells_csv().unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn gaussian_types_share_their_minimiser(
        x in prop::collection::vec(-2.0..2.0f64, 30),
        noise in prop::collection::vec(-1.5..1.5f64, 30),
        g in 0.2..1.5f64,
    ) {
        let y: Vec<f64> = x.iter().zip(&noise).map(|(a, e)| 0.5 - a + e).collect();
        let data = RegressionDataset::from_rows(x.into_iter().map(|v| vec![v]).collect(), y).unwrap();
        let model = GaussianLinearModel::new();
        let a = fit(&model, &data, &FitConfig::new(gamma(g), CrossEntropyKind::Type1)).unwrap();
        let b = fit(&model, &data, &FitConfig::new(gamma(g), CrossEntropyKind::Type2)).unwrap();
        for (u, v) in a.theta_hat.iter().zip(&b.theta_hat) {
            prop_assert!((u - v).abs() <= 1e-5, "{:?} vs {:?}", a.theta_hat, b.theta_hat);
        }
    }
}
