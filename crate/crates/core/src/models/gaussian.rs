use rand::RngCore;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{check_full_rank, design_matrix, fill_design, linear_predictor, ConditionalModel};
use crate::divergence::{GammaParam, RegressionDataset};
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;
use crate::quadrature::QuadratureSpec;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Floor for the residual standard deviation returned by [`ConditionalModel::mle`].
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Homoscedastic normal linear model, `f(y|x;θ) = φ((y - xᵀζ)/σ)/σ`.
///
/// With a free scale θ = `(ζ₀, …, ζ_p, σ)`; with a known scale θ = `(ζ₀, …, ζ_p)`.
/// The optimizer sees `log σ` in place of `σ`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GaussianLinearModel {
    known_sigma: Option<f64>,
}

impl GaussianLinearModel {
    pub fn new() -> Self {
        Self { known_sigma: None }
    }

    /// Location-only model with a fixed scale.
    pub fn with_known_sigma(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidConfig(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self {
            known_sigma: Some(sigma),
        })
    }

    pub fn known_sigma(&self) -> Option<f64> {
        self.known_sigma
    }

    fn split<'a>(&self, theta: &'a [f64]) -> (&'a [f64], f64) {
        match self.known_sigma {
            Some(s) => (theta, s),
            None => {
                let (zeta, rest) = theta.split_at(theta.len() - 1);
                (zeta, rest[0])
            }
        }
    }
}

impl ConditionalModel for GaussianLinearModel {
    fn name(&self) -> &'static str {
        "gaussian"
    }

    fn n_params(&self, p: usize) -> usize {
        if self.known_sigma.is_some() {
            p + 1
        } else {
            p + 2
        }
    }

    fn is_discrete(&self) -> bool {
        false
    }

    fn check_response(&self, y: f64) -> Result<()> {
        if y.is_finite() {
            Ok(())
        } else {
            Err(Error::UnsupportedResponse { model: "gaussian", y })
        }
    }

    fn log_density(&self, theta: &[f64], x: &[f64], y: f64) -> Result<f64> {
        self.check_response(y)?;
        let (zeta, sigma) = self.split(theta);
        let r = (y - linear_predictor(zeta, x)) / sigma;
        Ok(-0.5 * LN_2PI - sigma.ln() - 0.5 * r * r)
    }

    fn log_density_gradient_into(&self, theta: &[f64], x: &[f64], y: f64, out: &mut [f64]) -> Result<()> {
        self.check_response(y)?;
        let (zeta, sigma) = self.split(theta);
        let r = y - linear_predictor(zeta, x);
        fill_design(r / (sigma * sigma), x, out);
        if self.known_sigma.is_none() {
            out[x.len() + 1] = -1.0 / sigma + r * r / (sigma * sigma * sigma);
        }
        Ok(())
    }

    /// `(2πσ²)^{-γ/2} (1+γ)^{-1/2}`, the same at every `x`.
    fn log_power_integral(&self, theta: &[f64], _x: &[f64], gamma: GammaParam) -> Result<f64> {
        let (_, sigma) = self.split(theta);
        let g = gamma.get();
        Ok(-0.5 * g * (LN_2PI + 2.0 * sigma.ln()) - 0.5 * (1.0 + g).ln())
    }

    fn log_power_integral_gradient_into(
        &self,
        theta: &[f64],
        x: &[f64],
        gamma: GammaParam,
        out: &mut [f64],
    ) -> Result<()> {
        let (_, sigma) = self.split(theta);
        out.iter_mut().for_each(|o| *o = 0.0);
        if self.known_sigma.is_none() {
            out[x.len() + 1] = -gamma.get() / sigma;
        }
        Ok(())
    }

    fn sample_response(&self, theta: &[f64], x: &[f64], rng: &mut dyn RngCore) -> f64 {
        let (zeta, sigma) = self.split(theta);
        let normal = Normal::new(linear_predictor(zeta, x), sigma).expect("sigma is positive");
        normal.sample(rng)
    }

    fn mode(&self, theta: &[f64], x: &[f64]) -> f64 {
        linear_predictor(self.split(theta).0, x)
    }

    fn response_measure(&self, theta: &[f64], x: &[f64], quadrature: &QuadratureSpec) -> Result<Vec<(f64, f64)>> {
        let (zeta, sigma) = self.split(theta);
        let mean = linear_predictor(zeta, x);
        let half = quadrature.half_width_sd * sigma;
        let nodes = gauss_legendre(quadrature.y_nodes, mean - half, mean + half)?;
        nodes
            .into_iter()
            .map(|(y, w)| Ok((y, w.ln() + self.log_density(theta, x, y)?)))
            .collect()
    }

    /// Least squares; the residual SD (divisor `n`) is floored at [`SIGMA_FLOOR`].
    fn mle(&self, data: &RegressionDataset) -> Result<Vec<f64>> {
        let z = design_matrix(data);
        check_full_rank(&z)?;
        let y = nalgebra::DVector::from_column_slice(data.y());
        let gram = z.transpose() * &z;
        let rhs = z.transpose() * &y;
        let zeta = gram.cholesky().ok_or(Error::SingularDesign)?.solve(&rhs);
        let mut theta: Vec<f64> = zeta.iter().copied().collect();
        if self.known_sigma.is_none() {
            let resid = &y - &z * &zeta;
            let sigma = (resid.norm_squared() / data.n() as f64).sqrt().max(SIGMA_FLOOR);
            theta.push(sigma);
        }
        Ok(theta)
    }

    fn to_unconstrained(&self, theta: &[f64]) -> Vec<f64> {
        let mut u = theta.to_vec();
        if self.known_sigma.is_none() {
            let last = u.len() - 1;
            u[last] = u[last].ln();
        }
        u
    }

    fn from_unconstrained(&self, u: &[f64]) -> Vec<f64> {
        let mut theta = u.to_vec();
        if self.known_sigma.is_none() {
            let last = theta.len() - 1;
            theta[last] = theta[last].exp();
        }
        theta
    }

    fn chain_unconstrained(&self, u: &[f64], grad: &mut [f64]) {
        if self.known_sigma.is_none() {
            let last = u.len() - 1;
            grad[last] *= u[last].exp();
        }
    }
}
