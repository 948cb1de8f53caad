//! Parametric conditional models `f(y|x;θ)`.
//!
//! Every model uses an implicit leading 1 in `x`: for `p` covariates the
//! regression coefficients are `(β₀, β₁, …, β_p)`. Model structs describe a
//! family; the parameter vector is always passed separately.

mod gaussian;
mod logistic;
mod poisson;

pub use gaussian::GaussianLinearModel;
pub use logistic::LogisticModel;
pub use poisson::PoissonModel;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::divergence::{GammaParam, RegressionDataset};
use crate::error::{Error, Result};
use crate::quadrature::QuadratureSpec;

/// Serialisable choice of model family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Logistic,
    Poisson,
    Gaussian {
        #[serde(default)]
        known_sigma: Option<f64>,
    },
}

impl ModelSpec {
    pub fn build(&self) -> Result<Box<dyn ConditionalModel>> {
        Ok(match *self {
            ModelSpec::Logistic => Box::new(LogisticModel),
            ModelSpec::Poisson => Box::new(PoissonModel),
            ModelSpec::Gaussian { known_sigma: None } => Box::new(GaussianLinearModel::new()),
            ModelSpec::Gaussian { known_sigma: Some(s) } => Box::new(GaussianLinearModel::with_known_sigma(s)?),
        })
    }
}

impl std::str::FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "logistic" => Ok(ModelSpec::Logistic),
            "poisson" => Ok(ModelSpec::Poisson),
            "gaussian" | "normal" => Ok(ModelSpec::Gaussian { known_sigma: None }),
            other => Err(Error::InvalidConfig(format!("unknown model `{other}`"))),
        }
    }
}

/// A conditional density family with the pieces the γ-objectives need.
pub trait ConditionalModel: Send + Sync {
    fn name(&self) -> &'static str;

    /// Length of θ for `p` covariates.
    fn n_params(&self, p: usize) -> usize;

    /// Whether responses live on a countable support (power integrals are sums).
    fn is_discrete(&self) -> bool;

    fn check_response(&self, y: f64) -> Result<()>;

    fn log_density(&self, theta: &[f64], x: &[f64], y: f64) -> Result<f64>;

    /// Writes `∇_θ log f(y|x;θ)` into `out`.
    fn log_density_gradient_into(&self, theta: &[f64], x: &[f64], y: f64, out: &mut [f64]) -> Result<()>;

    /// `log ∫ f(y|x;θ)^{1+γ} dy`.
    fn log_power_integral(&self, theta: &[f64], x: &[f64], gamma: GammaParam) -> Result<f64>;

    /// Writes `∇_θ log ∫ f(y|x;θ)^{1+γ} dy` into `out`.
    fn log_power_integral_gradient_into(
        &self,
        theta: &[f64],
        x: &[f64],
        gamma: GammaParam,
        out: &mut [f64],
    ) -> Result<()>;

    fn sample_response(&self, theta: &[f64], x: &[f64], rng: &mut dyn RngCore) -> f64;

    /// Most likely response at `x`.
    fn mode(&self, theta: &[f64], x: &[f64]) -> f64;

    /// `f(·|x;θ)` as a list of `(y, ln mass)` pairs: the exact pmf for
    /// discrete models, quadrature nodes with density-weighted masses otherwise.
    fn response_measure(&self, theta: &[f64], x: &[f64], quadrature: &QuadratureSpec) -> Result<Vec<(f64, f64)>>;

    /// Maximum-likelihood estimate, used as the default starting point.
    fn mle(&self, data: &RegressionDataset) -> Result<Vec<f64>>;

    /// Map θ to the optimizer's unconstrained coordinates.
    fn to_unconstrained(&self, theta: &[f64]) -> Vec<f64> {
        theta.to_vec()
    }

    fn from_unconstrained(&self, u: &[f64]) -> Vec<f64> {
        u.to_vec()
    }

    /// Turns a θ-gradient into a gradient in unconstrained coordinates.
    fn chain_unconstrained(&self, _u: &[f64], _grad: &mut [f64]) {}

    fn log_density_gradient(&self, theta: &[f64], x: &[f64], y: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; theta.len()];
        self.log_density_gradient_into(theta, x, y, &mut out)?;
        Ok(out)
    }

    fn power_integral(&self, theta: &[f64], x: &[f64], gamma: GammaParam) -> Result<f64> {
        Ok(self.log_power_integral(theta, x, gamma)?.exp())
    }

    fn log_power_integral_gradient(&self, theta: &[f64], x: &[f64], gamma: GammaParam) -> Result<Vec<f64>> {
        let mut out = vec![0.0; theta.len()];
        self.log_power_integral_gradient_into(theta, x, gamma, &mut out)?;
        Ok(out)
    }

    fn check_theta(&self, theta: &[f64], p: usize) -> Result<()> {
        let expected = self.n_params(p);
        if theta.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: theta.len(),
            });
        }
        Ok(())
    }
}

/// `β₀ + Σ_j β_j x_j`.
pub fn linear_predictor(beta: &[f64], x: &[f64]) -> f64 {
    beta[0] + beta[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
}

/// Writes `scale · (1, x)` into `out[..=p]`.
pub(crate) fn fill_design(scale: f64, x: &[f64], out: &mut [f64]) {
    out[0] = scale;
    for (o, v) in out[1..=x.len()].iter_mut().zip(x) {
        *o = scale * v;
    }
}

/// Design matrix with the intercept column.
pub(crate) fn design_matrix(data: &RegressionDataset) -> DMatrix<f64> {
    let (n, p) = (data.n(), data.p());
    DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { data.row(i)[j - 1] })
}

/// Fails with `SingularDesign` when `[1, X]` is numerically rank deficient.
pub(crate) fn check_full_rank(z: &DMatrix<f64>) -> Result<()> {
    if z.nrows() < z.ncols() {
        return Err(Error::SingularDesign);
    }
    let gram = z.transpose() * z;
    let eig = gram.symmetric_eigen();
    let max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min <= 1e-12 * max {
        return Err(Error::SingularDesign);
    }
    Ok(())
}

/// Per-observation log-likelihood pieces of a canonical GLM as a function of
/// the linear predictor: `(ℓ, ∂ℓ/∂η, -∂²ℓ/∂η²)`.
pub(crate) type GlmTerms = fn(eta: f64, y: f64) -> (f64, f64, f64);

pub(crate) struct NewtonOutcome {
    pub beta: Vec<f64>,
    pub converged: bool,
    pub loglik: f64,
}

/// Damped Newton–Raphson on a canonical GLM log-likelihood with an optional
/// ridge penalty `-(ridge/2)‖β_{1..p}‖²` on the slopes.
pub(crate) fn glm_newton(
    z: &DMatrix<f64>,
    y: &[f64],
    start: Vec<f64>,
    terms: GlmTerms,
    ridge: f64,
) -> Result<NewtonOutcome> {
    let k = z.ncols();
    let penalised = |beta: &DVector<f64>| -> f64 {
        let eta = z * beta;
        let ll: f64 = eta.iter().zip(y).map(|(&e, &yi)| terms(e, yi).0).sum();
        ll - 0.5 * ridge * beta.rows(1, k - 1).norm_squared()
    };
    let mut beta = DVector::from_vec(start);
    let mut current = penalised(&beta);
    let mut converged = false;
    for _ in 0..200 {
        let eta = z * &beta;
        let mut grad = DVector::zeros(k);
        let mut hess = DMatrix::zeros(k, k);
        for (i, (&e, &yi)) in eta.iter().zip(y).enumerate() {
            let (_, d1, d2) = terms(e, yi);
            let row = z.row(i);
            grad += row.transpose() * d1;
            hess += row.transpose() * row * d2;
        }
        for j in 1..k {
            grad[j] -= ridge * beta[j];
            hess[(j, j)] += ridge;
        }
        let step = hess
            .clone()
            .cholesky()
            .map(|c| c.solve(&grad))
            .or_else(|| hess.lu().solve(&grad))
            .ok_or(Error::SingularDesign)?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let trial = &beta + &step * t;
            let value = penalised(&trial);
            if value.is_finite() && value >= current - 1e-12 * current.abs().max(1.0) {
                beta = trial;
                current = value;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        if (&step * t).amax() < 1e-10 {
            converged = true;
            break;
        }
    }
    Ok(NewtonOutcome {
        beta: beta.iter().copied().collect(),
        converged,
        loglik: current,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_predictor_uses_leading_one() {
        assert_eq!(linear_predictor(&[0.5, 2.0, -1.0], &[1.0, 3.0]), 0.5 + 2.0 - 3.0);
        assert_eq!(linear_predictor(&[0.5], &[]), 0.5);
    }

    #[test]
    fn full_rank_check_flags_constant_column() {
        let data = RegressionDataset::from_rows(vec![vec![0.0], vec![0.0], vec![0.0]], vec![0.0, 1.0, 1.0]).unwrap();
        assert!(matches!(check_full_rank(&design_matrix(&data)), Err(Error::SingularDesign)));
        let data = RegressionDataset::from_rows(vec![vec![0.0], vec![1.0], vec![2.0]], vec![0.0, 1.0, 1.0]).unwrap();
        assert!(check_full_rank(&design_matrix(&data)).is_ok());
    }

    #[test]
    fn model_spec_parsing() {
        assert_eq!("Logistic".parse::<ModelSpec>().unwrap(), ModelSpec::Logistic);
        assert!("probit".parse::<ModelSpec>().is_err());
        let g: ModelSpec = serde_json::from_str(r#"{"family":"gaussian","known_sigma":1.5}"#).unwrap();
        assert_eq!(g.build().unwrap().n_params(2), 3);
        let p: ModelSpec = serde_json::from_str(r#"{"family":"poisson"}"#).unwrap();
        assert_eq!(p.build().unwrap().name(), PoissonModel.name());
    }
}
