use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{check_full_rank, design_matrix, fill_design, glm_newton, linear_predictor, ConditionalModel};
use crate::divergence::{GammaParam, RegressionDataset};
use crate::error::{Error, Result};
use crate::numeric::{log_add_exp, log_sigmoid, sigmoid};
use crate::quadrature::QuadratureSpec;

/// Linear predictors are clamped to this magnitude before exponentiation.
pub const ETA_CLAMP: f64 = 700.0;

/// Ridge strength used when the plain MLE runs off to infinity.
const SEPARATION_RIDGE: f64 = 1e-2;

/// Binary logistic regression, `Pr(y=1|x) = 1/(1+exp(-β₀-xᵀβ))`.
///
/// θ = `(β₀, β₁, …, β_p)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel;

impl LogisticModel {
    pub fn new() -> Self {
        Self
    }

    /// Clamped linear predictor.
    pub fn eta(beta: &[f64], x: &[f64]) -> f64 {
        linear_predictor(beta, x).clamp(-ETA_CLAMP, ETA_CLAMP)
    }

    /// `π(x;β)`.
    pub fn probability(beta: &[f64], x: &[f64]) -> f64 {
        sigmoid(Self::eta(beta, x))
    }
}

fn logistic_terms(eta: f64, y: f64) -> (f64, f64, f64) {
    let eta = eta.clamp(-ETA_CLAMP, ETA_CLAMP);
    let p = sigmoid(eta);
    let ll = y * log_sigmoid(eta) + (1.0 - y) * log_sigmoid(-eta);
    (ll, y - p, p * (1.0 - p))
}

impl ConditionalModel for LogisticModel {
    fn name(&self) -> &'static str {
        "logistic"
    }

    fn n_params(&self, p: usize) -> usize {
        p + 1
    }

    fn is_discrete(&self) -> bool {
        true
    }

    fn check_response(&self, y: f64) -> Result<()> {
        if y == 0.0 || y == 1.0 {
            Ok(())
        } else {
            Err(Error::UnsupportedResponse { model: "logistic", y })
        }
    }

    fn log_density(&self, theta: &[f64], x: &[f64], y: f64) -> Result<f64> {
        self.check_response(y)?;
        let eta = Self::eta(theta, x);
        Ok(if y == 1.0 { log_sigmoid(eta) } else { log_sigmoid(-eta) })
    }

    fn log_density_gradient_into(&self, theta: &[f64], x: &[f64], y: f64, out: &mut [f64]) -> Result<()> {
        self.check_response(y)?;
        let p = Self::probability(theta, x);
        fill_design(y - p, x, out);
        Ok(())
    }

    fn log_power_integral(&self, theta: &[f64], x: &[f64], gamma: GammaParam) -> Result<f64> {
        let eta = Self::eta(theta, x);
        let a = 1.0 + gamma.get();
        Ok(log_add_exp(a * log_sigmoid(eta), a * log_sigmoid(-eta)))
    }

    fn log_power_integral_gradient_into(
        &self,
        theta: &[f64],
        x: &[f64],
        gamma: GammaParam,
        out: &mut [f64],
    ) -> Result<()> {
        let eta = Self::eta(theta, x);
        let a = 1.0 + gamma.get();
        let (lp, lq) = (log_sigmoid(eta), log_sigmoid(-eta));
        let lc = log_add_exp(a * lp, a * lq);
        // share of the y=1 term in the power integral
        let w1 = (a * lp - lc).exp();
        let w0 = (a * lq - lc).exp();
        let d_eta = a * (w1 * lq.exp() - w0 * lp.exp());
        fill_design(d_eta, x, out);
        Ok(())
    }

    fn sample_response(&self, theta: &[f64], x: &[f64], rng: &mut dyn RngCore) -> f64 {
        let p = Self::probability(theta, x);
        if rng.random::<f64>() < p {
            1.0
        } else {
            0.0
        }
    }

    fn mode(&self, theta: &[f64], x: &[f64]) -> f64 {
        if Self::eta(theta, x) >= 0.0 {
            1.0
        } else {
            0.0
        }
    }

    fn response_measure(&self, theta: &[f64], x: &[f64], _quadrature: &QuadratureSpec) -> Result<Vec<(f64, f64)>> {
        let eta = Self::eta(theta, x);
        Ok(vec![(0.0, log_sigmoid(-eta)), (1.0, log_sigmoid(eta))])
    }

    /// Newton–Raphson MLE. Perfectly separated data fall back to a
    /// ridge-damped Newton fit.
    fn mle(&self, data: &RegressionDataset) -> Result<Vec<f64>> {
        for &y in data.y() {
            self.check_response(y)?;
        }
        let z = design_matrix(data);
        check_full_rank(&z)?;
        let start = vec![0.0; data.p() + 1];
        // a Newton failure after the rank check means the Hessian collapsed,
        // which only happens when fitted probabilities saturate
        if let Ok(plain) = glm_newton(&z, data.y(), start.clone(), logistic_terms, 0.0) {
            let separated = plain.loglik > -1e-6 || plain.beta.iter().any(|b| b.abs() > 1e3);
            if plain.converged && !separated {
                return Ok(plain.beta);
            }
        }
        let damped = glm_newton(&z, data.y(), start, logistic_terms, SEPARATION_RIDGE)?;
        if damped.converged {
            Ok(damped.beta)
        } else {
            Err(Error::SeparationDetected)
        }
    }
}
