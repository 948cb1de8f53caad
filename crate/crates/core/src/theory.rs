//! Quadrature checks of the robustness relations for the type 1 and type 2
//! cross entropies under a contaminated law
//! `g(y|x) = (1-ε(x)) f(y|x;θ*) + ε(x) δ(y|x)` with one covariate.
//!
//! * Robustness of type 1: `d̃₁(g, f_θ; g(x)) ≈ d̃₁(f_θ*, f_θ; g̃(x))` with
//!   `g̃(x) = (1-ε(x)) g(x)`. The exact gap is `∫ ε(x) ν_θ(x)^γ c_θ(x)^{-γ/(1+γ)} g(x) dx`.
//! * Modified Pythagorean relation:
//!   `D₁(g, f_θ; g) ≈ D₁(g, f_θ*; g) + D₁(f_θ*, f_θ; g̃)`.
//! * Latent bias: population argmins of `d₁` and `d₂` over a parameter grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contamination::{ContaminatedLaw, OutlierResponse};
use crate::divergence::{
    gamma_divergence, population_cross_entropies, population_cross_entropy, CovariateMeasure, CrossEntropyKind, GammaParam, ModelLaw,
    PopulationMeasure,
};
use crate::error::{Error, Result};
use crate::models::{ConditionalModel, ModelSpec};
use crate::numeric::{log_sum_exp, pairwise_sum};
use crate::quadrature::QuadratureSpec;

/// One normal component of the covariate law with its outlier ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
    /// Probability that a response drawn at a covariate from this component is replaced by `δ`.
    pub epsilon: f64,
}

/// A one-covariate contaminated law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryScenario {
    pub model: ModelSpec,
    pub theta_star: Vec<f64>,
    pub components: Vec<MixtureComponent>,
    pub outlier_response: OutlierResponse,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
}

impl TheoryScenario {
    /// Logistic `θ* = (0, 1)`, clean covariates `N(0, 1)` and a fraction `ε` of
    /// contaminated rows at `N(x_out, 0.5²)` whose responses are all 0.
    pub fn logistic_leverage(x_out: f64, epsilon: f64) -> Self {
        Self {
            model: ModelSpec::Logistic,
            theta_star: vec![0.0, 1.0],
            components: vec![
                MixtureComponent {
                    weight: 1.0 - epsilon,
                    mean: 0.0,
                    sd: 1.0,
                    epsilon: 0.0,
                },
                MixtureComponent {
                    weight: epsilon,
                    mean: x_out,
                    sd: 0.5,
                    epsilon: 1.0,
                },
            ],
            outlier_response: OutlierResponse::Constant(0.0),
            quadrature: QuadratureSpec::default(),
        }
    }

    /// Poisson `θ* = (0.5, 0.5)`, `x ~ N(0, 1)`, constant `ε`, outlying counts at `y_out`.
    pub fn poisson_homogeneous(epsilon: f64, y_out: f64) -> Self {
        Self {
            model: ModelSpec::Poisson,
            theta_star: vec![0.5, 0.5],
            components: vec![MixtureComponent {
                weight: 1.0,
                mean: 0.0,
                sd: 1.0,
                epsilon,
            }],
            outlier_response: OutlierResponse::Constant(y_out),
            // rates grow like e^{β₁x}; mass beyond 8 sd is below 1e-15
            quadrature: QuadratureSpec {
                half_width_sd: 8.0,
                ..QuadratureSpec::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.quadrature.validate()?;
        if self.components.is_empty() {
            return Err(Error::InvalidConfig("scenario needs at least one component".into()));
        }
        for c in &self.components {
            if !(c.weight >= 0.0 && c.sd > 0.0 && c.mean.is_finite() && (0.0..=1.0).contains(&c.epsilon)) {
                return Err(Error::InvalidConfig(format!("bad mixture component {c:?}")));
            }
        }
        let model = self.model.build()?;
        model.check_theta(&self.theta_star, 1)
    }

    /// `ε(x) = Σ_k w_k φ_k(x) ε_k / Σ_k w_k φ_k(x)`, evaluated in log space.
    pub fn epsilon_at(&self, x: &[f64]) -> f64 {
        let ln_parts: Vec<f64> = self
            .components
            .iter()
            .map(|c| c.weight.ln() + ln_normal_pdf(x[0], c.mean, c.sd))
            .collect();
        let ln_total = log_sum_exp(&ln_parts);
        if ln_total == f64::NEG_INFINITY {
            return 0.0;
        }
        let weighted: Vec<f64> = ln_parts
            .iter()
            .zip(&self.components)
            .map(|(l, c)| (l - ln_total).exp() * c.epsilon)
            .collect();
        pairwise_sum(&weighted).clamp(0.0, 1.0)
    }

    pub fn covariates(&self) -> Result<CovariateMeasure> {
        let comps: Vec<(f64, f64, f64)> = self.components.iter().map(|c| (c.weight, c.mean, c.sd)).collect();
        CovariateMeasure::normal_mixture_1d(&comps, &self.quadrature)
    }

    /// Same scenario with the mean of every contaminated component moved to `x_out`.
    pub fn with_outlier_location(&self, x_out: f64) -> Self {
        let mut s = self.clone();
        for c in s.components.iter_mut().filter(|c| c.epsilon > 0.0) {
            c.mean = x_out;
        }
        s
    }
}

fn ln_normal_pdf(z: f64, mean: f64, sd: f64) -> f64 {
    let u = (z - mean) / sd;
    -0.5 * u * u - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Everything derived from a scenario that does not depend on θ.
struct Prepared {
    model: Box<dyn ConditionalModel>,
    covariates: CovariateMeasure,
    clean_covariates: CovariateMeasure,
    epsilon: Vec<f64>,
}

impl Prepared {
    fn new(s: &TheoryScenario) -> Result<Self> {
        s.validate()?;
        let covariates = s.covariates()?;
        let epsilon: Vec<f64> = covariates.points().iter().map(|x| s.epsilon_at(x)).collect();
        let keep: Vec<f64> = epsilon.iter().map(|e| 1.0 - e).collect();
        Ok(Self {
            model: s.model.build()?,
            clean_covariates: covariates.reweighted(&keep)?,
            covariates,
            epsilon,
        })
    }

    fn law<'a>(&'a self, s: &TheoryScenario, ratio: &'a (dyn Fn(&[f64]) -> f64 + Sync)) -> ContaminatedLaw<'a, dyn ConditionalModel> {
        ContaminatedLaw {
            model: self.model.as_ref(),
            theta: s.theta_star.clone(),
            ratio,
            response: s.outlier_response,
            quadrature: s.quadrature,
        }
    }

    /// `{∫ ε(x) ν_θ(x)^γ g(x) dx / ∫ ε(x) g(x) dx}^{1/γ}`; zero without contamination mass.
    fn nu(&self, s: &TheoryScenario, theta: &[f64], gamma: GammaParam) -> f64 {
        let g = gamma.get();
        let mut ln_num = Vec::new();
        let mut ln_den = Vec::new();
        for ((x, w), e) in self.covariates.points().iter().zip(self.covariates.weights()).zip(&self.epsilon) {
            let mass = w * e;
            if mass == 0.0 {
                continue;
            }
            let y = s.outlier_response.location(self.model.as_ref(), &s.theta_star, x);
            let ln_nu = self.model.log_density(theta, x, y).unwrap_or(f64::NEG_INFINITY);
            ln_num.push(mass.ln() + g * ln_nu);
            ln_den.push(mass.ln());
        }
        let den = log_sum_exp(&ln_den);
        if den == f64::NEG_INFINITY {
            return 0.0;
        }
        ((log_sum_exp(&ln_num) - den) / g).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    /// `d̃₁(g, f_θ; g(x))`.
    pub lhs: f64,
    /// `d̃₁(f_θ*, f_θ; g̃(x))`.
    pub rhs: f64,
    pub gap: f64,
    /// `ν_{f_θ,γ}`.
    pub nu: f64,
}

/// Compare the transformed type 1 cross entropy under `g` with the clean one under `g̃`.
pub fn check_theorem1(scenario: &TheoryScenario, theta: &[f64], gamma: GammaParam) -> Result<Theorem1Report> {
    let prep = Prepared::new(scenario)?;
    let model = prep.model.as_ref();
    model.check_theta(theta, 1)?;
    let ratio = |x: &[f64]| scenario.epsilon_at(x);
    let law = prep.law(scenario, &ratio);
    let kind = CrossEntropyKind::Type1;
    let lhs = population_cross_entropy(&PopulationMeasure::new(&law, &prep.covariates)?, model, theta, gamma, kind)?
        .transformed(gamma)
        .value;
    let clean = ModelLaw::new(model, &scenario.theta_star, scenario.quadrature);
    let rhs = population_cross_entropy(&PopulationMeasure::new(&clean, &prep.clean_covariates)?, model, theta, gamma, kind)?
        .transformed(gamma)
        .value;
    Ok(Theorem1Report {
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
        nu: prep.nu(scenario, theta, gamma),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PythagoreanReport {
    /// `D₁(g, f_θ; g(x))`.
    pub lhs: f64,
    /// `D₁(g, f_θ*; g(x))`.
    pub rhs_a: f64,
    /// `D₁(f_θ*, f_θ; g̃(x))`.
    pub rhs_b: f64,
    pub residual: f64,
    /// `max(ν_{f_θ,γ}, ν_{f_θ*,γ})`.
    pub nu_value: f64,
}

/// Evaluate both sides of the modified Pythagorean relation.
pub fn check_pythagorean(scenario: &TheoryScenario, theta: &[f64], gamma: GammaParam) -> Result<PythagoreanReport> {
    let prep = Prepared::new(scenario)?;
    let model = prep.model.as_ref();
    model.check_theta(theta, 1)?;
    let ratio = |x: &[f64]| scenario.epsilon_at(x);
    let law = prep.law(scenario, &ratio);
    let kind = CrossEntropyKind::Type1;
    let lhs = gamma_divergence(&law, &prep.covariates, model, theta, gamma, kind)?;
    let rhs_a = gamma_divergence(&law, &prep.covariates, model, &scenario.theta_star, gamma, kind)?;
    let clean = ModelLaw::new(model, &scenario.theta_star, scenario.quadrature);
    let rhs_b = gamma_divergence(&clean, &prep.clean_covariates, model, theta, gamma, kind)?;
    Ok(PythagoreanReport {
        lhs,
        rhs_a,
        rhs_b,
        residual: lhs - rhs_a - rhs_b,
        nu_value: prep.nu(scenario, theta, gamma).max(prep.nu(scenario, &scenario.theta_star, gamma)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub x_out: f64,
    pub nu: f64,
    pub theorem1_gap: f64,
    pub pythagorean_residual: f64,
}

/// Move the contaminated covariates outward and record how both relations tighten.
pub fn sweep_outlier_location(
    scenario: &TheoryScenario,
    theta: &[f64],
    gamma: GammaParam,
    locations: &[f64],
) -> Result<Vec<SweepPoint>> {
    locations
        .iter()
        .map(|&x_out| {
            let s = scenario.with_outlier_location(x_out);
            let t1 = check_theorem1(&s, theta, gamma)?;
            let py = check_pythagorean(&s, theta, gamma)?;
            Ok(SweepPoint {
                x_out,
                nu: py.nu_value,
                theorem1_gap: t1.gap,
                pythagorean_residual: py.residual,
            })
        })
        .collect()
}

/// `d̃₂(g, f_θ; g) / (1-ε) - d̃₂(f_θ*, f_θ; g)` for a scenario with constant `ε`.
pub fn type2_homogeneous_defect(scenario: &TheoryScenario, theta: &[f64], gamma: GammaParam) -> Result<f64> {
    let eps = scenario.components[0].epsilon;
    if scenario.components.iter().any(|c| c.epsilon != eps) {
        return Err(Error::InvalidConfig("outlier ratio is not constant".into()));
    }
    let prep = Prepared::new(scenario)?;
    let model = prep.model.as_ref();
    let ratio = |x: &[f64]| scenario.epsilon_at(x);
    let law = prep.law(scenario, &ratio);
    let kind = CrossEntropyKind::Type2;
    let contaminated = population_cross_entropy(&PopulationMeasure::new(&law, &prep.covariates)?, model, theta, gamma, kind)?
        .transformed(gamma)
        .value;
    let clean_law = ModelLaw::new(model, &scenario.theta_star, scenario.quadrature);
    let clean = population_cross_entropy(&PopulationMeasure::new(&clean_law, &prep.covariates)?, model, theta, gamma, kind)?
        .transformed(gamma)
        .value;
    Ok(contaminated / (1.0 - eps) - clean)
}

/// Closed interval `[lower, upper]` sampled every `step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxis {
    pub lower: f64,
    pub upper: f64,
    pub step: f64,
}

impl GridAxis {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0 && self.lower <= self.upper) {
            return Err(Error::InvalidConfig(format!("bad grid axis {self:?}")));
        }
        let count = ((self.upper - self.lower) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..count).map(|i| self.lower + i as f64 * self.step).collect())
    }
}

/// Cartesian product of axes, one per θ coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterGrid {
    pub axes: Vec<GridAxis>,
}

impl ParameterGrid {
    /// Points in row-major order, the last axis varying fastest.
    pub fn points(&self) -> Result<Vec<Vec<f64>>> {
        let values: Vec<Vec<f64>> = self.axes.iter().map(GridAxis::values).collect::<Result<_>>()?;
        let mut points = vec![Vec::new()];
        for axis in &values {
            points = points
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        Ok(points)
    }

    pub fn max_step(&self) -> f64 {
        self.axes.iter().map(|a| a.step).fold(0.0, f64::max)
    }

    fn on_boundary(&self, point: &[f64]) -> bool {
        self.axes.iter().zip(point).any(|(a, &v)| {
            let last = a.values().map(|v| *v.last().unwrap()).unwrap_or(a.upper);
            (v - a.lower).abs() < 1e-12 || (v - last).abs() < 1e-12
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Type2BiasReport {
    pub argmin_type1: Vec<f64>,
    pub argmin_type2: Vec<f64>,
    /// `‖θ*_{γ,1} − θ*‖₂`.
    pub bias_type1: f64,
    /// `‖θ*_{γ,2} − θ*‖₂`.
    pub bias_type2: f64,
    pub grid_step: f64,
    /// An argmin on the edge of the grid may not be a local minimum.
    pub type1_on_boundary: bool,
    pub type2_on_boundary: bool,
}

/// Population argmins of `d₁` and `d₂` under the contaminated law, by exhaustive grid search.
///
/// Ties go to the earliest grid point, so the result does not depend on the thread count.
pub fn check_type2_bias(scenario: &TheoryScenario, gamma: GammaParam, grid: &ParameterGrid) -> Result<Type2BiasReport> {
    let prep = Prepared::new(scenario)?;
    let model = prep.model.as_ref();
    let points = grid.points()?;
    if let Some(first) = points.first() {
        model.check_theta(first, 1)?;
    }
    let ratio = |x: &[f64]| scenario.epsilon_at(x);
    let law = prep.law(scenario, &ratio);
    let population = PopulationMeasure::new(&law, &prep.covariates)?;
    let values: Vec<(f64, f64)> = points
        .par_iter()
        .map(|theta| {
            let (d1, d2) = population_cross_entropies(&population, model, theta, gamma)?;
            Ok((d1.value, d2.value))
        })
        .collect::<Result<_>>()?;
    let argmin = |pick: fn(&(f64, f64)) -> f64| {
        let mut best = 0;
        for (i, v) in values.iter().enumerate() {
            if pick(v) < pick(&values[best]) {
                best = i;
            }
        }
        points[best].clone()
    };
    let a1 = argmin(|v| v.0);
    let a2 = argmin(|v| v.1);
    let dist = |a: &[f64]| a.iter().zip(&scenario.theta_star).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
    Ok(Type2BiasReport {
        bias_type1: dist(&a1),
        bias_type2: dist(&a2),
        grid_step: grid.max_step(),
        type1_on_boundary: grid.on_boundary(&a1),
        type2_on_boundary: grid.on_boundary(&a2),
        argmin_type1: a1,
        argmin_type2: a2,
    })
}

/// Which relation a [`TheoryConfig`] should check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TheoryCheck {
    Theorem1,
    Pythagorean,
    Type2Bias,
}

impl std::str::FromStr for TheoryCheck {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theorem1" => Ok(TheoryCheck::Theorem1),
            "pythagorean" => Ok(TheoryCheck::Pythagorean),
            "type2-bias" => Ok(TheoryCheck::Type2Bias),
            other => Err(Error::InvalidConfig(format!("unknown check `{other}`"))),
        }
    }
}

/// Input of the `theory` subcommand. Omitted fields take the logistic leverage scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    pub scenario: TheoryScenario,
    pub gamma: GammaParam,
    /// θ at which the relations are evaluated.
    pub theta: Vec<f64>,
    /// Outlier locations to sweep; empty evaluates the scenario as given.
    pub sweep: Vec<f64>,
    pub grid: ParameterGrid,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            scenario: TheoryScenario::logistic_leverage(20.0, 0.2),
            gamma: GammaParam::new(1.0).expect("positive"),
            theta: vec![0.2, 1.3],
            sweep: vec![4.0, 8.0, 12.0, 16.0, 20.0, 24.0],
            grid: ParameterGrid {
                axes: vec![
                    GridAxis {
                        lower: -0.5,
                        upper: 0.5,
                        step: 0.01,
                    },
                    GridAxis {
                        lower: 0.5,
                        upper: 2.5,
                        step: 0.01,
                    },
                ],
            },
        }
    }
}

/// JSON report for one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub check: TheoryCheck,
    pub scenario: TheoryScenario,
    pub gamma: GammaParam,
    pub theta: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theorem1: Option<Theorem1Report>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pythagorean: Option<PythagoreanReport>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub sweep: Vec<SweepPoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub type2_bias: Option<Type2BiasReport>,
}

pub fn run_check(check: TheoryCheck, config: &TheoryConfig) -> Result<TheoryReport> {
    let mut report = TheoryReport {
        check,
        scenario: config.scenario.clone(),
        gamma: config.gamma,
        theta: config.theta.clone(),
        theorem1: None,
        pythagorean: None,
        sweep: Vec::new(),
        type2_bias: None,
    };
    match check {
        TheoryCheck::Theorem1 => report.theorem1 = Some(check_theorem1(&config.scenario, &config.theta, config.gamma)?),
        TheoryCheck::Pythagorean => {
            report.pythagorean = Some(check_pythagorean(&config.scenario, &config.theta, config.gamma)?)
        }
        TheoryCheck::Type2Bias => report.type2_bias = Some(check_type2_bias(&config.scenario, config.gamma, &config.grid)?),
    }
    if check != TheoryCheck::Type2Bias && !config.sweep.is_empty() {
        report.sweep = sweep_outlier_location(&config.scenario, &config.theta, config.gamma, &config.sweep)?;
    }
    Ok(report)
}
