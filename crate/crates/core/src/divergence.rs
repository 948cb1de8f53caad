//! γ-cross entropies for regression.
//!
//! For a conditional model `f(y|x;θ)` and data `(x_i, y_i)`, with
//! `c(x) = ∫ f(y|x;θ)^{1+γ} dy`:
//!
//! ```text
//! d̄₁ = -(1/γ) log (1/n) Σ_i f(y_i|x_i)^γ / c(x_i)^{γ/(1+γ)}
//! d̄₂ = -(1/γ) log (1/n) Σ_i f(y_i|x_i)^γ + 1/(1+γ) log (1/n) Σ_i c(x_i)
//! ```
//!
//! The population versions replace the empirical averages by integrals
//! against `g(x, y)`; here they are evaluated on a [`PopulationMeasure`], a
//! quadrature discretisation of `g(x)` and `g(y|x)`. All products are formed
//! in log space and combined with log-sum-exp.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ConditionalModel;
use crate::numeric::{log_sum_exp, softmax};
use crate::quadrature::{gaussian_weighted, QuadratureSpec};

/// The tuning parameter γ > 0.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct GammaParam(f64);

impl GammaParam {
    pub fn new(gamma: f64) -> Result<Self> {
        if gamma.is_finite() && gamma > 0.0 {
            Ok(Self(gamma))
        } else {
            Err(Error::InvalidGamma(gamma))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for GammaParam {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<GammaParam> for f64 {
    fn from(g: GammaParam) -> f64 {
        g.0
    }
}

/// Which regression extension of the γ-cross entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CrossEntropyKind {
    /// Normaliser inside the covariate average.
    #[serde(rename = "type1")]
    Type1,
    /// Numerator and normaliser averaged separately.
    #[serde(rename = "type2")]
    Type2,
}

impl CrossEntropyKind {
    pub const ALL: [CrossEntropyKind; 2] = [CrossEntropyKind::Type1, CrossEntropyKind::Type2];

    pub fn label(self) -> &'static str {
        match self {
            CrossEntropyKind::Type1 => "type1",
            CrossEntropyKind::Type2 => "type2",
        }
    }
}

impl fmt::Display for CrossEntropyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CrossEntropyKind::Type1 => write!(f, "Type 1"),
            CrossEntropyKind::Type2 => write!(f, "Type 2"),
        }
    }
}

impl FromStr for CrossEntropyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "type1" | "type 1" | "type-1" => Ok(CrossEntropyKind::Type1),
            "2" | "type2" | "type 2" | "type-2" => Ok(CrossEntropyKind::Type2),
            other => Err(Error::InvalidConfig(format!("unknown cross entropy type `{other}`"))),
        }
    }
}

/// A cross entropy, either on its natural scale `d` or as `d̃ = -exp(-γ d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossEntropyValue {
    pub value: f64,
    pub kind: CrossEntropyKind,
    pub transformed: bool,
}

impl CrossEntropyValue {
    /// `d̃ = -exp(-γ d)`. Idempotent on already transformed values.
    pub fn transformed(self, gamma: GammaParam) -> Self {
        if self.transformed {
            return self;
        }
        Self {
            value: -(-gamma.get() * self.value).exp(),
            kind: self.kind,
            transformed: true,
        }
    }
}

/// Monotone transform `d ↦ -exp(-γ d)`; strictly increasing, so it keeps argmins.
pub fn transformed_cross_entropy(value: CrossEntropyValue, gamma: GammaParam) -> CrossEntropyValue {
    value.transformed(gamma)
}

/// Observations `(x_i, y_i)`, covariates stored row-major without the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDataset {
    x: Vec<f64>,
    y: Vec<f64>,
    p: usize,
}

impl RegressionDataset {
    /// `x` is row-major with `p` columns.
    pub fn new(x: Vec<f64>, p: usize, y: Vec<f64>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::InvalidDataset("need at least one observation".into()));
        }
        if x.len() != y.len() * p {
            return Err(Error::InvalidDataset(format!(
                "{} covariate values do not fill {} rows of {} columns",
                x.len(),
                y.len(),
                p
            )));
        }
        if let Some(i) = x.iter().chain(&y).position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!("non-finite entry at flat index {i}")));
        }
        Ok(Self { x, y, p })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if rows.len() != y.len() {
            return Err(Error::InvalidDataset(format!(
                "{} covariate rows but {} responses",
                rows.len(),
                y.len()
            )));
        }
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidDataset("ragged covariate rows".into()));
        }
        Self::new(rows.into_iter().flatten().collect(), p, y)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.n()).map(move |i| self.row(i))
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }
}

/// Empirical cross entropy `d̄_{γ,kind}` as a function of θ.
pub struct GammaObjective<'a, M: ConditionalModel + ?Sized> {
    model: &'a M,
    data: &'a RegressionDataset,
    gamma: GammaParam,
    kind: CrossEntropyKind,
}

impl<'a, M: ConditionalModel + ?Sized> GammaObjective<'a, M> {
    pub fn new(model: &'a M, data: &'a RegressionDataset, gamma: GammaParam, kind: CrossEntropyKind) -> Self {
        Self {
            model,
            data,
            gamma,
            kind,
        }
    }

    pub fn kind(&self) -> CrossEntropyKind {
        self.kind
    }

    pub fn gamma(&self) -> GammaParam {
        self.gamma
    }

    /// `(log f(y_i|x_i), log c(x_i))` for every observation.
    fn log_terms(&self, theta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.model.check_theta(theta, self.data.p())?;
        let n = self.data.n();
        let mut ln_f = Vec::with_capacity(n);
        let mut ln_c = Vec::with_capacity(n);
        for (i, (x, &y)) in self.data.rows().zip(self.data.y()).enumerate() {
            let lf = self.model.log_density(theta, x, y)?;
            let lc = self.model.log_power_integral(theta, x, self.gamma)?;
            // density exactly zero is allowed; NaN or an infinite density is not
            if lf.is_nan() || lf == f64::INFINITY || !lc.is_finite() {
                return Err(Error::NonFiniteDensity { index: i });
            }
            ln_f.push(lf);
            ln_c.push(lc);
        }
        Ok((ln_f, ln_c))
    }

    fn combine(&self, ln_f: &[f64], ln_c: &[f64]) -> Result<f64> {
        let g = self.gamma.get();
        let ln_n = (self.data.n() as f64).ln();
        match self.kind {
            CrossEntropyKind::Type1 => {
                let lw: Vec<f64> = ln_f.iter().zip(ln_c).map(|(lf, lc)| g * lf - g / (1.0 + g) * lc).collect();
                let s = log_sum_exp(&lw);
                if s == f64::NEG_INFINITY {
                    return Err(Error::DegenerateObjective);
                }
                Ok(-(s - ln_n) / g)
            }
            CrossEntropyKind::Type2 => {
                let lw: Vec<f64> = ln_f.iter().map(|lf| g * lf).collect();
                let s = log_sum_exp(&lw);
                if s == f64::NEG_INFINITY {
                    return Err(Error::DegenerateObjective);
                }
                let t = log_sum_exp(ln_c);
                Ok(-(s - ln_n) / g + (t - ln_n) / (1.0 + g))
            }
        }
    }

    pub fn value(&self, theta: &[f64]) -> Result<f64> {
        let (ln_f, ln_c) = self.log_terms(theta)?;
        self.combine(&ln_f, &ln_c)
    }

    pub fn cross_entropy(&self, theta: &[f64]) -> Result<CrossEntropyValue> {
        Ok(CrossEntropyValue {
            value: self.value(theta)?,
            kind: self.kind,
            transformed: false,
        })
    }

    /// Value and θ-gradient.
    ///
    /// Both types share the form `-Σ s_i ∇log f_i + (1+γ)^{-1} Σ t_i ∇log c_i`
    /// with softmax weights `s`, `t`; for type 1 the two weight vectors coincide.
    pub fn value_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (ln_f, ln_c) = self.log_terms(theta)?;
        let value = self.combine(&ln_f, &ln_c)?;
        let g = self.gamma.get();
        let (s, t) = match self.kind {
            CrossEntropyKind::Type1 => {
                let lw: Vec<f64> = ln_f.iter().zip(&ln_c).map(|(lf, lc)| g * lf - g / (1.0 + g) * lc).collect();
                let s = softmax(&lw);
                (s.clone(), s)
            }
            CrossEntropyKind::Type2 => {
                let lw: Vec<f64> = ln_f.iter().map(|lf| g * lf).collect();
                (softmax(&lw), softmax(&ln_c))
            }
        };
        let k = theta.len();
        let mut grad = vec![0.0; k];
        let mut buf = vec![0.0; k];
        for (i, (x, &y)) in self.data.rows().zip(self.data.y()).enumerate() {
            if s[i] != 0.0 {
                self.model.log_density_gradient_into(theta, x, y, &mut buf)?;
                grad.iter_mut().zip(&buf).for_each(|(o, b)| *o -= s[i] * b);
            }
            if t[i] != 0.0 {
                self.model.log_power_integral_gradient_into(theta, x, self.gamma, &mut buf)?;
                grad.iter_mut().zip(&buf).for_each(|(o, b)| *o += t[i] * b / (1.0 + g));
            }
        }
        Ok((value, grad))
    }
}

pub fn empirical_cross_entropy<M: ConditionalModel + ?Sized>(
    model: &M,
    theta: &[f64],
    data: &RegressionDataset,
    gamma: GammaParam,
    kind: CrossEntropyKind,
) -> Result<CrossEntropyValue> {
    GammaObjective::new(model, data, gamma, kind).cross_entropy(theta)
}

/// `d̄_{γ,1}`.
pub fn empirical_cross_entropy_type1<M: ConditionalModel + ?Sized>(
    model: &M,
    theta: &[f64],
    data: &RegressionDataset,
    gamma: GammaParam,
) -> Result<CrossEntropyValue> {
    empirical_cross_entropy(model, theta, data, gamma, CrossEntropyKind::Type1)
}

/// `d̄_{γ,2}`.
pub fn empirical_cross_entropy_type2<M: ConditionalModel + ?Sized>(
    model: &M,
    theta: &[f64],
    data: &RegressionDataset,
    gamma: GammaParam,
) -> Result<CrossEntropyValue> {
    empirical_cross_entropy(model, theta, data, gamma, CrossEntropyKind::Type2)
}

/// An underlying conditional law `g(y|x)` that population integrals can be taken against.
pub trait ConditionalLaw: Sync {
    /// `g(·|x)` as `(y, ln mass)` pairs.
    fn response_measure(&self, x: &[f64]) -> Result<Vec<(f64, f64)>>;

    /// `log ∫ g(y|x)^{1+γ} dy`.
    fn ln_power_integral(&self, x: &[f64], gamma: GammaParam) -> Result<f64>;
}

/// A member `f(·|·;θ)` of a model family used as the underlying law.
pub struct ModelLaw<'a, M: ConditionalModel + ?Sized> {
    pub model: &'a M,
    pub theta: Vec<f64>,
    pub quadrature: QuadratureSpec,
}

impl<'a, M: ConditionalModel + ?Sized> ModelLaw<'a, M> {
    pub fn new(model: &'a M, theta: &[f64], quadrature: QuadratureSpec) -> Self {
        Self {
            model,
            theta: theta.to_vec(),
            quadrature,
        }
    }
}

impl<M: ConditionalModel + ?Sized> ConditionalLaw for ModelLaw<'_, M> {
    fn response_measure(&self, x: &[f64]) -> Result<Vec<(f64, f64)>> {
        self.model.response_measure(&self.theta, x, &self.quadrature)
    }

    fn ln_power_integral(&self, x: &[f64], gamma: GammaParam) -> Result<f64> {
        self.model.log_power_integral(&self.theta, x, gamma)
    }
}

/// Quadrature discretisation of a covariate measure (not necessarily normalised).
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateMeasure {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl CovariateMeasure {
    pub fn from_nodes(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::LengthMismatch {
                left: points.len(),
                right: weights.len(),
            });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::QuadratureFailure("covariate weights must be finite and non-negative".into()));
        }
        Ok(Self { points, weights })
    }

    /// A one-dimensional normal mixture `Σ_k w_k N(m_k, s_k²)`, integrated
    /// component by component on `m_k ± half_width·s_k`.
    pub fn normal_mixture_1d(components: &[(f64, f64, f64)], quadrature: &QuadratureSpec) -> Result<Self> {
        quadrature.validate()?;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for &(w, mean, sd) in components {
            if !(w >= 0.0 && sd > 0.0 && mean.is_finite()) {
                return Err(Error::InvalidConfig(format!("bad mixture component ({w}, {mean}, {sd})")));
            }
            if w == 0.0 {
                continue;
            }
            for (z, v) in gaussian_weighted(quadrature.x_nodes, mean, sd, quadrature.half_width_sd)? {
                points.push(vec![z]);
                weights.push(w * v);
            }
        }
        Self::from_nodes(points, weights)
    }

    /// The measure `h(x) g(x)` for per-node factors `h`.
    pub fn reweighted(&self, factors: &[f64]) -> Result<Self> {
        if factors.len() != self.weights.len() {
            return Err(Error::LengthMismatch {
                left: factors.len(),
                right: self.weights.len(),
            });
        }
        let weights = self.weights.iter().zip(factors).map(|(w, h)| w * h).collect();
        Self::from_nodes(self.points.clone(), weights)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        crate::numeric::pairwise_sum(&self.weights)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

#[derive(Debug, Clone)]
struct PopulationNode {
    x: Vec<f64>,
    ln_weight: f64,
    response: Vec<(f64, f64)>,
}

/// `g(x, y)` on quadrature nodes: covariate nodes with their response measures.
///
/// Building it once lets many θ be evaluated against the same law.
#[derive(Debug, Clone)]
pub struct PopulationMeasure {
    nodes: Vec<PopulationNode>,
}

impl PopulationMeasure {
    pub fn new(law: &dyn ConditionalLaw, covariates: &CovariateMeasure) -> Result<Self> {
        let mut nodes = Vec::with_capacity(covariates.len());
        for (x, &w) in covariates.points().iter().zip(covariates.weights()) {
            if w == 0.0 {
                continue;
            }
            let response = law
                .response_measure(x)?
                .into_iter()
                .filter(|(_, lm)| *lm > f64::NEG_INFINITY)
                .collect();
            nodes.push(PopulationNode {
                x: x.clone(),
                ln_weight: w.ln(),
                response,
            });
        }
        if nodes.is_empty() {
            return Err(Error::QuadratureFailure("covariate measure has no mass".into()));
        }
        Ok(Self { nodes })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// `log f`, with responses outside the model's support given density zero.
fn ln_density_or_zero<M: ConditionalModel + ?Sized>(model: &M, theta: &[f64], x: &[f64], y: f64) -> Result<f64> {
    match model.log_density(theta, x, y) {
        Ok(v) => Ok(v),
        Err(Error::UnsupportedResponse { .. }) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    }
}

/// Per covariate node: `(ln w, ln ∫ g(y|x) f(y|x)^γ dy, ln ∫ f(y|x)^{1+γ} dy)`.
fn population_terms<M: ConditionalModel + ?Sized>(
    population: &PopulationMeasure,
    model: &M,
    theta: &[f64],
    gamma: GammaParam,
) -> Result<Vec<(f64, f64, f64)>> {
    let g = gamma.get();
    let mut inner = Vec::new();
    population
        .nodes
        .iter()
        .map(|node| {
            inner.clear();
            for &(y, lm) in &node.response {
                inner.push(lm + g * ln_density_or_zero(model, theta, &node.x, y)?);
            }
            let ln_c = model.log_power_integral(theta, &node.x, gamma)?;
            Ok((node.ln_weight, log_sum_exp(&inner), ln_c))
        })
        .collect()
}

fn combine_population(terms: &[(f64, f64, f64)], gamma: GammaParam, kind: CrossEntropyKind) -> Result<CrossEntropyValue> {
    let g = gamma.get();
    let numerator: Vec<f64> = match kind {
        CrossEntropyKind::Type1 => terms.iter().map(|(w, a, c)| w + a - g / (1.0 + g) * c).collect(),
        CrossEntropyKind::Type2 => terms.iter().map(|(w, a, _)| w + a).collect(),
    };
    let s = log_sum_exp(&numerator);
    if s == f64::NEG_INFINITY || s.is_nan() {
        return Err(Error::QuadratureFailure("cross entropy numerator vanishes at every node".into()));
    }
    let value = match kind {
        CrossEntropyKind::Type1 => -s / g,
        CrossEntropyKind::Type2 => {
            let c: Vec<f64> = terms.iter().map(|(w, _, c)| w + c).collect();
            let t = log_sum_exp(&c);
            if t == f64::NEG_INFINITY {
                return Err(Error::QuadratureFailure("power integral underflows at every node".into()));
            }
            -s / g + t / (1.0 + g)
        }
    };
    Ok(CrossEntropyValue {
        value,
        kind,
        transformed: false,
    })
}

/// `d_{γ,kind}(g, f_θ; g(x))` by nested quadrature.
pub fn population_cross_entropy<M: ConditionalModel + ?Sized>(
    population: &PopulationMeasure,
    model: &M,
    theta: &[f64],
    gamma: GammaParam,
    kind: CrossEntropyKind,
) -> Result<CrossEntropyValue> {
    combine_population(&population_terms(population, model, theta, gamma)?, gamma, kind)
}

/// `(d₁, d₂)` from one pass over the nodes.
pub fn population_cross_entropies<M: ConditionalModel + ?Sized>(
    population: &PopulationMeasure,
    model: &M,
    theta: &[f64],
    gamma: GammaParam,
) -> Result<(CrossEntropyValue, CrossEntropyValue)> {
    let terms = population_terms(population, model, theta, gamma)?;
    Ok((
        combine_population(&terms, gamma, CrossEntropyKind::Type1)?,
        combine_population(&terms, gamma, CrossEntropyKind::Type2)?,
    ))
}

/// `d_{γ,kind}(g, g; g(x))`.
pub fn self_cross_entropy(
    law: &dyn ConditionalLaw,
    covariates: &CovariateMeasure,
    gamma: GammaParam,
    kind: CrossEntropyKind,
) -> Result<CrossEntropyValue> {
    let g = gamma.get();
    let mut terms = Vec::with_capacity(covariates.len());
    for (x, &w) in covariates.points().iter().zip(covariates.weights()) {
        if w == 0.0 {
            continue;
        }
        let ln_c = law.ln_power_integral(x, gamma)?;
        terms.push(match kind {
            CrossEntropyKind::Type1 => w.ln() + ln_c / (1.0 + g),
            CrossEntropyKind::Type2 => w.ln() + ln_c,
        });
    }
    let s = log_sum_exp(&terms);
    if !s.is_finite() {
        return Err(Error::QuadratureFailure("power integral of g underflows at every node".into()));
    }
    let value = match kind {
        CrossEntropyKind::Type1 => -s / g,
        CrossEntropyKind::Type2 => -s / (g * (1.0 + g)),
    };
    Ok(CrossEntropyValue {
        value,
        kind,
        transformed: false,
    })
}

/// `D_{γ,kind}(g, f_θ; g(x)) = d(g, f_θ) - d(g, g)`.
pub fn gamma_divergence<M: ConditionalModel + ?Sized>(
    law: &dyn ConditionalLaw,
    covariates: &CovariateMeasure,
    model: &M,
    theta: &[f64],
    gamma: GammaParam,
    kind: CrossEntropyKind,
) -> Result<f64> {
    let population = PopulationMeasure::new(law, covariates)?;
    let cross = population_cross_entropy(&population, model, theta, gamma, kind)?;
    let own = self_cross_entropy(law, covariates, gamma, kind)?;
    Ok(cross.value - own.value)
}
