use std::sync::OnceLock;

use rand::RngCore;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::{check_full_rank, design_matrix, fill_design, glm_newton, linear_predictor, ConditionalModel};
use crate::divergence::{GammaParam, RegressionDataset};
use crate::error::{Error, Result};
use crate::numeric::{log_sum_exp, softmax};
use crate::quadrature::QuadratureSpec;

/// Upper limit on the number of series terms.
pub const MAX_TERMS: usize = 2_000_000;

/// Relative bound on the neglected tail of `Σ_k f(k)^{1+γ}`.
pub const TAIL_TOLERANCE: f64 = 1e-12;

const ETA_CLAMP: f64 = 700.0;

/// Poisson log-linear regression, `λ(x) = exp(β₀ + xᵀβ)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PoissonModel;

impl PoissonModel {
    pub fn new() -> Self {
        Self
    }

    pub fn rate(beta: &[f64], x: &[f64]) -> f64 {
        linear_predictor(beta, x).clamp(-ETA_CLAMP, ETA_CLAMP).exp()
    }

    /// Last index kept in the truncated series: `max(50, ⌈λ + 12√λ⌉)`.
    pub fn truncation(lambda: f64) -> Result<usize> {
        let k = (lambda + 12.0 * lambda.sqrt()).ceil().max(50.0);
        if !k.is_finite() || k > MAX_TERMS as f64 {
            return Err(Error::TruncationNotConverged {
                lambda,
                cap: MAX_TERMS,
            });
        }
        Ok(k as usize)
    }

    fn ln_pmf(k: f64, lambda: f64) -> f64 {
        if lambda == 0.0 {
            return if k == 0.0 { 0.0 } else { f64::NEG_INFINITY };
        }
        k * lambda.ln() - lambda - ln_factorial(k)
    }

    /// `ln f(k)` for `k = 0..=K`, plus the tail check on `Σ f^{1+γ}`.
    fn series(lambda: f64, power: f64) -> Result<Vec<f64>> {
        let last = Self::truncation(lambda)?;
        let ln_lambda = lambda.ln();
        let ln_f: Vec<f64> = (0..=last).map(|k| k as f64 * ln_lambda - lambda - ln_factorial(k as f64)).collect();
        // Σ_{k>K} f_k^{a} ≤ Σ_{k>K} f_k ≤ f_{K+1} / (1 - λ/(K+2))
        let ratio = lambda / (last as f64 + 2.0);
        if ratio >= 1.0 {
            return Err(Error::TruncationNotConverged {
                lambda,
                cap: MAX_TERMS,
            });
        }
        let ln_tail = Self::ln_pmf(last as f64 + 1.0, lambda) - (1.0 - ratio).ln();
        let scaled: Vec<f64> = ln_f.iter().map(|l| power * l).collect();
        let ln_total = log_sum_exp(&scaled);
        if ln_tail > TAIL_TOLERANCE.ln() + ln_total {
            return Err(Error::TruncationNotConverged {
                lambda,
                cap: MAX_TERMS,
            });
        }
        Ok(ln_f)
    }
}

const FACTORIAL_TABLE: usize = 4096;

/// `ln k!`, tabulated for small `k`.
fn ln_factorial(k: f64) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| (0..FACTORIAL_TABLE).map(|i| ln_gamma(i as f64 + 1.0)).collect());
    if k < FACTORIAL_TABLE as f64 {
        table[k as usize]
    } else {
        ln_gamma(k + 1.0)
    }
}

fn poisson_terms(eta: f64, y: f64) -> (f64, f64, f64) {
    let lambda = eta.clamp(-ETA_CLAMP, ETA_CLAMP).exp();
    (y * eta - lambda - ln_factorial(y), y - lambda, lambda)
}

impl ConditionalModel for PoissonModel {
    fn name(&self) -> &'static str {
        "poisson"
    }

    fn n_params(&self, p: usize) -> usize {
        p + 1
    }

    fn is_discrete(&self) -> bool {
        true
    }

    fn check_response(&self, y: f64) -> Result<()> {
        if y >= 0.0 && y.fract() == 0.0 && y.is_finite() {
            Ok(())
        } else {
            Err(Error::UnsupportedResponse { model: "poisson", y })
        }
    }

    fn log_density(&self, theta: &[f64], x: &[f64], y: f64) -> Result<f64> {
        self.check_response(y)?;
        Ok(Self::ln_pmf(y, Self::rate(theta, x)))
    }

    fn log_density_gradient_into(&self, theta: &[f64], x: &[f64], y: f64, out: &mut [f64]) -> Result<()> {
        self.check_response(y)?;
        fill_design(y - Self::rate(theta, x), x, out);
        Ok(())
    }

    fn log_power_integral(&self, theta: &[f64], x: &[f64], gamma: GammaParam) -> Result<f64> {
        let a = 1.0 + gamma.get();
        let ln_f = Self::series(Self::rate(theta, x), a)?;
        let scaled: Vec<f64> = ln_f.iter().map(|l| a * l).collect();
        Ok(log_sum_exp(&scaled))
    }

    fn log_power_integral_gradient_into(
        &self,
        theta: &[f64],
        x: &[f64],
        gamma: GammaParam,
        out: &mut [f64],
    ) -> Result<()> {
        let a = 1.0 + gamma.get();
        let lambda = Self::rate(theta, x);
        let ln_f = Self::series(lambda, a)?;
        let scaled: Vec<f64> = ln_f.iter().map(|l| a * l).collect();
        let weights = softmax(&scaled);
        let mean_k: f64 = weights.iter().enumerate().map(|(k, w)| k as f64 * w).sum();
        fill_design(a * (mean_k - lambda), x, out);
        Ok(())
    }

    fn sample_response(&self, theta: &[f64], x: &[f64], rng: &mut dyn RngCore) -> f64 {
        let lambda = Self::rate(theta, x);
        if lambda <= 0.0 {
            return 0.0;
        }
        Poisson::new(lambda).expect("rate is positive and finite").sample(rng)
    }

    fn mode(&self, theta: &[f64], x: &[f64]) -> f64 {
        Self::rate(theta, x).floor()
    }

    fn response_measure(&self, theta: &[f64], x: &[f64], _quadrature: &QuadratureSpec) -> Result<Vec<(f64, f64)>> {
        let ln_f = Self::series(Self::rate(theta, x), 1.0)?;
        Ok(ln_f.into_iter().enumerate().map(|(k, l)| (k as f64, l)).collect())
    }

    fn mle(&self, data: &RegressionDataset) -> Result<Vec<f64>> {
        for &y in data.y() {
            self.check_response(y)?;
        }
        let z = design_matrix(data);
        check_full_rank(&z)?;
        let mean = data.y().iter().sum::<f64>() / data.n() as f64;
        let mut start = vec![0.0; data.p() + 1];
        start[0] = (mean + 0.1).ln();
        let outcome = glm_newton(&z, data.y(), start.clone(), poisson_terms, 0.0)?;
        if outcome.converged {
            return Ok(outcome.beta);
        }
        let damped = glm_newton(&z, data.y(), start, poisson_terms, 1e-2)?;
        if damped.converged {
            Ok(damped.beta)
        } else {
            Err(Error::SeparationDetected)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_rate_zero_count() {
        let v = PoissonModel.log_density(&[0.0], &[], 0.0).unwrap();
        assert!((v + 1.0).abs() < 1e-15);
    }

    #[test]
    fn pmf_sums_to_one() {
        for &b0 in &[-3.0, 0.0, 2.0, 5.0] {
            let m = PoissonModel.response_measure(&[b0], &[], &QuadratureSpec::default()).unwrap();
            let mass: f64 = m.iter().map(|(_, l)| l.exp()).sum();
            assert!((mass - 1.0).abs() < 1e-12, "b0 = {b0}: {mass}");
        }
    }

    #[test]
    fn truncation_rule() {
        assert_eq!(PoissonModel::truncation(1.0).unwrap(), 50);
        assert_eq!(PoissonModel::truncation(100.0).unwrap(), 220);
        assert!(matches!(
            PoissonModel::truncation(1e13),
            Err(Error::TruncationNotConverged { .. })
        ));
    }

    #[test]
    fn rejects_non_counts() {
        assert!(PoissonModel.log_density(&[0.0], &[], 1.5).is_err());
        assert!(PoissonModel.log_density(&[0.0], &[], -1.0).is_err());
    }

    #[test]
    fn huge_rate_is_reported() {
        let g = GammaParam::new(0.5).unwrap();
        assert!(matches!(
            PoissonModel.log_power_integral(&[40.0], &[], g),
            Err(Error::TruncationNotConverged { .. })
        ));
    }
}
