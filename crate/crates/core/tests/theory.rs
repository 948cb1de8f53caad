use gamma_regress::contamination::OutlierResponse;
use gamma_regress::models::ModelSpec;
use gamma_regress::quadrature::QuadratureSpec;
use gamma_regress::theory::{check_type2_bias, GridAxis, MixtureComponent, ParameterGrid, TheoryScenario};
use gamma_regress::GammaParam;

fn axis(lower: f64, upper: f64) -> GridAxis {
    GridAxis { lower, upper, step: 0.05 }
}

#[test]
fn gaussian_population_argmins_coincide_under_leverage_contamination() {
    let scenario = TheoryScenario {
        model: ModelSpec::Gaussian { known_sigma: None },
        theta_star: vec![0.0, 1.0, 1.0],
        components: vec![
            MixtureComponent { weight: 0.8, mean: 0.0, sd: 1.0, epsilon: 0.0 },
            MixtureComponent { weight: 0.2, mean: 3.0, sd: 0.5, epsilon: 1.0 },
        ],
        outlier_response: OutlierResponse::Constant(-6.0),
        quadrature: QuadratureSpec { x_nodes: 40, y_nodes: 60, half_width_sd: 10.0 },
    };
    let grid = ParameterGrid { axes: vec![axis(-0.4, 0.4), axis(0.6, 1.4), axis(0.6, 1.4)] };
    let report = check_type2_bias(&scenario, GammaParam::new(0.5).unwrap(), &grid).unwrap();
    assert_eq!(report.argmin_type1, report.argmin_type2);
    assert!(report.bias_type1 <= 2.0 * report.grid_step + 1e-12, "{report:?}");
    assert!(!report.type1_on_boundary);
}
