//! γ-estimators `θ̂_{γ,j} = argmin_θ d̄_{γ,j}(θ)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::divergence::{CrossEntropyKind, GammaObjective, GammaParam, RegressionDataset};
use crate::error::{Error, Result};
use crate::models::ConditionalModel;
use crate::optimize::{minimize_bfgs, BfgsOptions, Termination};

/// Starting point for the optimiser.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Maximum-likelihood fit.
    #[default]
    Mle,
    /// All zeros in the optimiser's coordinates (σ = 1 for a free Gaussian scale).
    Zero,
    /// A given θ.
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub gamma: GammaParam,
    pub kind: CrossEntropyKind,
    pub init: Init,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
    /// Seeds the perturbed restarts.
    pub seed: u64,
    /// Extra starts at the initial point plus standard normal noise; the lowest objective wins.
    pub restarts: usize,
}

impl FitConfig {
    pub fn new(gamma: GammaParam, kind: CrossEntropyKind) -> Self {
        Self {
            gamma,
            kind,
            init: Init::Mle,
            max_iters: 500,
            grad_tol: 1e-8,
            step_tol: 1e-10,
            seed: 0,
            restarts: 0,
        }
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.grad_tol > 0.0 && self.step_tol > 0.0) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: Vec<f64>,
    /// `d̄` at `theta_hat`.
    pub objective: f64,
    /// `grad_norm <= grad_tol`.
    pub converged: bool,
    pub iters: usize,
    /// Gradient norm in the optimiser's coordinates.
    pub grad_norm: f64,
    pub termination: Termination,
    /// Objective after each accepted step of the winning start.
    pub trace: Vec<f64>,
}

/// Maximum-likelihood estimate for the model.
pub fn mle_init<M: ConditionalModel + ?Sized>(model: &M, data: &RegressionDataset) -> Result<Vec<f64>> {
    model.mle(data)
}

fn start_point<M: ConditionalModel + ?Sized>(model: &M, data: &RegressionDataset, init: &Init) -> Result<Vec<f64>> {
    let k = model.n_params(data.p());
    match init {
        Init::Mle => Ok(model.to_unconstrained(&mle_init(model, data)?)),
        Init::Zero => Ok(vec![0.0; k]),
        Init::Custom(theta) => {
            model.check_theta(theta, data.p())?;
            Ok(model.to_unconstrained(theta))
        }
    }
}

fn fit_from<M: ConditionalModel + ?Sized>(
    model: &M,
    objective: &GammaObjective<'_, M>,
    u0: &[f64],
    config: &FitConfig,
) -> Result<FitResult> {
    let opts = BfgsOptions {
        max_iters: config.max_iters,
        grad_tol: config.grad_tol,
        step_tol: config.step_tol,
    };
    let f = |u: &[f64]| {
        let theta = model.from_unconstrained(u);
        let (v, mut g) = objective.value_and_gradient(&theta)?;
        model.chain_unconstrained(u, &mut g);
        Ok((v, g))
    };
    let m = minimize_bfgs(f, u0, &opts)?;
    Ok(FitResult {
        theta_hat: model.from_unconstrained(&m.x),
        objective: m.value,
        converged: m.grad_norm <= config.grad_tol,
        iters: m.iterations,
        grad_norm: m.grad_norm,
        termination: m.termination,
        trace: m.history,
    })
}

/// Minimise `d̄_{γ,kind}` from the configured start.
pub fn fit<M: ConditionalModel + ?Sized>(model: &M, data: &RegressionDataset, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let objective = GammaObjective::new(model, data, config.gamma, config.kind);
    let u0 = start_point(model, data, &config.init)?;
    let mut best = fit_from(model, &objective, &u0, config)?;
    if config.restarts > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for _ in 0..config.restarts {
            let start: Vec<f64> = u0
                .iter()
                .map(|u| u + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                .collect();
            if let Ok(candidate) = fit_from(model, &objective, &start, config) {
                if candidate.objective < best.objective {
                    best = candidate;
                }
            }
        }
    }
    Ok(best)
}

/// Fit from each given θ and keep the lowest objective (earliest on ties).
pub fn fit_multistart<M: ConditionalModel + ?Sized>(
    model: &M,
    data: &RegressionDataset,
    config: &FitConfig,
    starts: &[Vec<f64>],
) -> Result<FitResult> {
    let mut best: Option<FitResult> = None;
    let mut last_err = None;
    for start in starts {
        let cfg = FitConfig {
            init: Init::Custom(start.clone()),
            restarts: 0,
            ..config.clone()
        };
        match fit(model, data, &cfg) {
            Ok(r) if best.as_ref().is_none_or(|b| r.objective < b.objective) => best = Some(r),
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or(Error::InvalidConfig("no starting points".into())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{GaussianLinearModel, LogisticModel, PoissonModel};
    use rand::Rng;

    fn logistic_data(n: usize, beta: &[f64], seed: u64) -> RegressionDataset {
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
        RegressionDataset::from_rows(rows, y).unwrap()
    }

    fn cfg(gamma: f64, kind: CrossEntropyKind) -> FitConfig {
        FitConfig::new(GammaParam::new(gamma).unwrap(), kind)
    }

    #[test]
    fn clean_logistic_recovers_truth() {
        use crate::contamination::*;
        let truth = [0.0, 1.0, -1.0, 1.0, -1.0, 0.0];
        let scheme = ContaminationScheme {
            clean_theta: truth.to_vec(),
            outlier_ratio: OutlierRatio::Constant(0.0),
            outlier_covariates: None,
            outlier_response: OutlierResponse::Constant(0.0),
            mode: ContaminationMode::Homogeneous,
        };
        let data = generate(&LogisticModel, &scheme, &CovariateSpec::new(5, 0.2).unwrap(), 1000, 2024)
            .unwrap()
            .data;
        let mle = mle_init(&LogisticModel, &data).unwrap();
        for kind in CrossEntropyKind::ALL {
            let r = fit(&LogisticModel, &data, &cfg(0.5, kind)).unwrap();
            assert!(r.converged, "{r:?}");
            let worst = r.theta_hat.iter().zip(&truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(worst <= 0.25, "{kind}: {:?}", r.theta_hat);
            let gap = r.theta_hat.iter().zip(&mle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(gap <= 0.1, "{kind}: {gap}");
        }
    }

    #[test]
    fn objective_trace_is_non_increasing() {
        let data = logistic_data(300, &[0.3, 1.0, -0.5], 5);
        let r = fit(&LogisticModel, &data, &cfg(1.0, CrossEntropyKind::Type2).with_init(Init::Zero)).unwrap();
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(r.trace.len(), r.iters + 1);
    }

    #[test]
    fn fits_are_bit_reproducible() {
        let data = logistic_data(200, &[0.0, 1.0, -1.0], 9);
        let mut c = cfg(0.5, CrossEntropyKind::Type1);
        c.restarts = 3;
        c.seed = 17;
        let a = fit(&LogisticModel, &data, &c).unwrap();
        let b = fit(&LogisticModel, &data, &c).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a.theta_hat.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.theta_hat.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn gaussian_sigma_stays_positive() {
        let data = RegressionDataset::from_rows(
            (0..50).map(|i| vec![i as f64 / 10.0]).collect(),
            (0..50).map(|i| 1.0 + 0.5 * i as f64 / 10.0 + if i % 2 == 0 { 0.3 } else { -0.3 }).collect(),
        )
        .unwrap();
        let r = fit(&GaussianLinearModel::new(), &data, &cfg(0.3, CrossEntropyKind::Type1).with_init(Init::Zero)).unwrap();
        assert!(r.converged);
        assert!(r.theta_hat[2] > 0.0);
        assert!((r.theta_hat[1] - 0.5).abs() < 0.05);
    }

    #[test]
    fn poisson_fit_runs() {
        let data = RegressionDataset::from_rows(
            vec![vec![0.0], vec![0.5], vec![1.0], vec![1.5], vec![2.0]],
            vec![1.0, 1.0, 3.0, 4.0, 7.0],
        )
        .unwrap();
        let r = fit(&PoissonModel, &data, &cfg(0.5, CrossEntropyKind::Type1)).unwrap();
        assert!(r.converged);
        assert!(r.theta_hat[1] > 0.5);
    }

    #[test]
    fn bad_config_rejected() {
        let data = logistic_data(20, &[0.0, 1.0], 1);
        let mut c = cfg(0.5, CrossEntropyKind::Type1);
        c.max_iters = 0;
        assert!(matches!(fit(&LogisticModel, &data, &c), Err(Error::InvalidConfig(_))));
        let wrong = cfg(0.5, CrossEntropyKind::Type1).with_init(Init::Custom(vec![0.0]));
        assert!(matches!(fit(&LogisticModel, &data, &wrong), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn init_serde_names() {
        assert_eq!(serde_json::to_string(&Init::Mle).unwrap(), "\"mle\"");
        let c: Init = serde_json::from_str("{\"custom\":[1.0,2.0]}").unwrap();
        assert_eq!(c, Init::Custom(vec![1.0, 2.0]));
    }
}
