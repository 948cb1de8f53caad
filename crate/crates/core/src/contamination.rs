//! Contaminated regression data and the contamination diagnostic ν.
//!
//! The underlying law is `g(y|x) = (1-ε(x)) f(y|x;θ*) + ε(x) δ(y|x)` with a
//! dirac `δ` at `y†(x)`. With leverage contamination the outlying rows also
//! draw their covariates from a separate normal law.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::divergence::{ConditionalLaw, GammaParam, RegressionDataset};
use crate::error::{Error, Result};
use crate::models::ConditionalModel;
use crate::numeric::{log_sum_exp, pairwise_sum};
use crate::quadrature::QuadratureSpec;

/// Clean covariates `x ~ N(0, Σ)` with `Σ_ij = ρ^{|i-j|}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateSpec {
    pub p: usize,
    pub rho: f64,
}

impl CovariateSpec {
    pub fn new(p: usize, rho: f64) -> Result<Self> {
        let spec = Self { p, rho };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho.abs() < 1.0) {
            return Err(Error::InvalidConfig(format!("need |rho| < 1, got {}", self.rho)));
        }
        Ok(())
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.p, self.p, |i, j| self.rho.powi(i.abs_diff(j) as i32))
    }

    /// Lower Cholesky factor of Σ.
    pub fn cholesky_factor(&self) -> Result<DMatrix<f64>> {
        self.validate()?;
        self.covariance()
            .cholesky()
            .map(|c| c.l())
            .ok_or_else(|| Error::InvalidConfig("covariance is not positive definite".into()))
    }
}

/// Sampler for `N(0, Σ)`.
pub struct CovariateSampler {
    l: DMatrix<f64>,
}

impl CovariateSampler {
    pub fn new(spec: &CovariateSpec) -> Result<Self> {
        Ok(Self {
            l: spec.cholesky_factor()?,
        })
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let z = DVector::from_iterator(self.l.nrows(), (0..self.l.nrows()).map(|_| rng.sample::<f64, _>(StandardNormal)));
        (&self.l * z).as_slice().to_vec()
    }
}

/// One covariate region `lower ≤ x_j < upper` with its own outlier rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatioRegion {
    /// Zero-based covariate index.
    pub coordinate: usize,
    pub lower: f64,
    pub upper: f64,
    pub rate: f64,
}

/// `ε(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierRatio {
    Constant(f64),
    /// First matching region wins; `default` elsewhere.
    Regions { regions: Vec<RatioRegion>, default: f64 },
}

impl OutlierRatio {
    pub fn at(&self, x: &[f64]) -> f64 {
        match self {
            OutlierRatio::Constant(e) => *e,
            OutlierRatio::Regions { regions, default } => regions
                .iter()
                .find(|r| x.get(r.coordinate).is_some_and(|&v| r.lower <= v && v < r.upper))
                .map_or(*default, |r| r.rate),
        }
    }

    fn rates(&self) -> Vec<f64> {
        match self {
            OutlierRatio::Constant(e) => vec![*e],
            OutlierRatio::Regions { regions, default } => regions.iter().map(|r| r.rate).chain([*default]).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.rates().iter().all(|&r| r == 0.0)
    }
}

/// Covariate law of outlying rows, `N(mean, sd² I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutlierCovariates {
    pub mean: Vec<f64>,
    pub sd: f64,
}

impl OutlierCovariates {
    pub fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.mean.iter().map(|m| m + self.sd * rng.sample::<f64, _>(StandardNormal)).collect()
    }
}

/// Location `y†(x)` of the dirac contamination `δ(y|x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierResponse {
    Constant(f64),
    /// Mode of the clean model: the worst case for robustness.
    ModelMode,
    /// Clean mode shifted by a fixed amount.
    ModeOffset(f64),
}

impl OutlierResponse {
    pub fn location<M: ConditionalModel + ?Sized>(&self, model: &M, theta: &[f64], x: &[f64]) -> f64 {
        match *self {
            OutlierResponse::Constant(y) => y,
            OutlierResponse::ModelMode => model.mode(theta, x),
            OutlierResponse::ModeOffset(d) => model.mode(theta, x) + d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContaminationMode {
    /// `ε` may depend on `x`; outlying rows may also move in `x`.
    Heterogeneous,
    /// Constant `ε`; only responses are replaced.
    Homogeneous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContaminationScheme {
    pub clean_theta: Vec<f64>,
    pub outlier_ratio: OutlierRatio,
    /// Leverage contamination; only with a constant ratio in heterogeneous mode.
    #[serde(default)]
    pub outlier_covariates: Option<OutlierCovariates>,
    pub outlier_response: OutlierResponse,
    pub mode: ContaminationMode,
}

impl ContaminationScheme {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.clean_theta.iter().any(|v| !v.is_finite()) {
            return bad("clean_theta must be finite".into());
        }
        for r in self.outlier_ratio.rates() {
            if !(0.0..1.0).contains(&r) {
                return bad(format!("outlier ratio {r} outside [0, 1)"));
            }
        }
        if let OutlierRatio::Regions { regions, .. } = &self.outlier_ratio {
            if regions.iter().any(|r| !(r.lower < r.upper)) {
                return bad("region bounds must satisfy lower < upper".into());
            }
        }
        if let Some(oc) = &self.outlier_covariates {
            if oc.mean.iter().any(|v| !v.is_finite()) || !(oc.sd >= 0.0 && oc.sd.is_finite()) {
                return bad("outlier covariate mean must be finite and sd non-negative".into());
            }
            if !matches!(self.outlier_ratio, OutlierRatio::Constant(_)) {
                return bad("leverage contamination needs a constant outlier ratio".into());
            }
        }
        if self.mode == ContaminationMode::Homogeneous {
            if !matches!(self.outlier_ratio, OutlierRatio::Constant(_)) {
                return bad("homogeneous contamination needs a constant outlier ratio".into());
            }
            if self.outlier_covariates.is_some() {
                return bad("homogeneous contamination keeps the clean covariates".into());
            }
        }
        if let OutlierResponse::Constant(y) | OutlierResponse::ModeOffset(y) = self.outlier_response {
            if !y.is_finite() {
                return bad("outlier response must be finite".into());
            }
        }
        Ok(())
    }

    /// Checks that the scheme fits the model and covariate dimension.
    pub fn validate_for<M: ConditionalModel + ?Sized>(&self, model: &M, p: usize) -> Result<()> {
        self.validate()?;
        model.check_theta(&self.clean_theta, p)?;
        if let Some(oc) = &self.outlier_covariates {
            if oc.mean.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: oc.mean.len(),
                });
            }
        }
        if let OutlierResponse::Constant(y) = self.outlier_response {
            model.check_response(y)?;
        }
        Ok(())
    }
}

/// A generated dataset with its outlier labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ContaminatedSample {
    pub data: RegressionDataset,
    pub is_outlier: Vec<bool>,
}

impl ContaminatedSample {
    pub fn outlier_count(&self) -> usize {
        self.is_outlier.iter().filter(|&&o| o).count()
    }
}

/// Draw `n` rows: a uniform for the outlier decision, then `x`, then `y`.
pub fn generate<M: ConditionalModel + ?Sized>(
    model: &M,
    scheme: &ContaminationScheme,
    cov: &CovariateSpec,
    n: usize,
    seed: u64,
) -> Result<ContaminatedSample> {
    if n == 0 {
        return Err(Error::InvalidConfig("n must be at least 1".into()));
    }
    scheme.validate_for(model, cov.p)?;
    let sampler = CovariateSampler::new(cov)?;
    let theta = &scheme.clean_theta;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n * cov.p);
    let mut y = Vec::with_capacity(n);
    let mut is_outlier = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let (row, outlier) = match (&scheme.outlier_covariates, &scheme.outlier_ratio) {
            (Some(oc), OutlierRatio::Constant(e)) if u < *e => (oc.sample(&mut rng), true),
            (Some(_), _) => (sampler.sample(&mut rng), false),
            (None, ratio) => {
                let row = sampler.sample(&mut rng);
                let outlier = u < ratio.at(&row);
                (row, outlier)
            }
        };
        let response = if outlier {
            let v = scheme.outlier_response.location(model, theta, &row);
            model.check_response(v)?;
            v
        } else {
            model.sample_response(theta, &row, &mut rng)
        };
        x.extend_from_slice(&row);
        y.push(response);
        is_outlier.push(outlier);
    }
    Ok(ContaminatedSample {
        data: RegressionDataset::new(x, cov.p, y)?,
        is_outlier,
    })
}

/// `ν_{f,γ}(x)` at sampled contamination covariates and the aggregate `ν_{f,γ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuDiagnostic {
    pub nu_x: Vec<f64>,
    pub nu: f64,
}

/// `ν(x) = f(y†(x)|x;θ)` for the dirac contamination; zero off the model's support.
pub fn nu_at<M: ConditionalModel + ?Sized>(model: &M, theta: &[f64], scheme: &ContaminationScheme, x: &[f64]) -> f64 {
    let y = scheme.outlier_response.location(model, &scheme.clean_theta, x);
    model.log_density(theta, x, y).map_or(0.0, f64::exp)
}

/// Aggregate `{∫ ν(x)^γ h(x) dx}^{1/γ}` over `h ∝ ε(x) g(x)`, the covariate
/// law of contaminated rows, from `n_mc` Monte Carlo draws.
///
/// Zero when the scheme carries no contamination mass.
pub fn nu_diagnostic<M: ConditionalModel + ?Sized>(
    model: &M,
    theta: &[f64],
    scheme: &ContaminationScheme,
    cov: &CovariateSpec,
    gamma: GammaParam,
    n_mc: usize,
    seed: u64,
) -> Result<NuDiagnostic> {
    scheme.validate_for(model, cov.p)?;
    model.check_theta(theta, cov.p)?;
    if scheme.outlier_ratio.is_zero() || n_mc == 0 {
        return Ok(NuDiagnostic { nu_x: vec![], nu: 0.0 });
    }
    let g = gamma.get();
    let sampler = CovariateSampler::new(cov)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nu_x = Vec::with_capacity(n_mc);
    let mut ln_terms = Vec::with_capacity(n_mc);
    let mut ln_weights = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        let x = match &scheme.outlier_covariates {
            Some(oc) => oc.sample(&mut rng),
            None => sampler.sample(&mut rng),
        };
        let w = match &scheme.outlier_covariates {
            Some(_) => 1.0,
            None => scheme.outlier_ratio.at(&x),
        };
        let v = nu_at(model, theta, scheme, &x);
        ln_terms.push(w.ln() + g * v.ln());
        ln_weights.push(w.ln());
        nu_x.push(v);
    }
    let ln_mass = log_sum_exp(&ln_weights);
    let nu = if ln_mass == f64::NEG_INFINITY {
        0.0
    } else {
        ((log_sum_exp(&ln_terms) - ln_mass) / g).exp()
    };
    Ok(NuDiagnostic { nu_x, nu })
}

/// `g(y|x) = (1-ε(x)) f(y|x;θ*) + ε(x) δ_{y†(x)}` as a [`ConditionalLaw`].
pub struct ContaminatedLaw<'a, M: ConditionalModel + ?Sized> {
    pub model: &'a M,
    pub theta: Vec<f64>,
    pub ratio: &'a (dyn Fn(&[f64]) -> f64 + Sync),
    pub response: OutlierResponse,
    pub quadrature: QuadratureSpec,
}

impl<M: ConditionalModel + ?Sized> ContaminatedLaw<'_, M> {
    fn dirac(&self, x: &[f64]) -> f64 {
        self.response.location(self.model, &self.theta, x)
    }
}

impl<M: ConditionalModel + ?Sized> ConditionalLaw for ContaminatedLaw<'_, M> {
    fn response_measure(&self, x: &[f64]) -> Result<Vec<(f64, f64)>> {
        let eps = (self.ratio)(x);
        let mut measure: Vec<(f64, f64)> = self
            .model
            .response_measure(&self.theta, x, &self.quadrature)?
            .into_iter()
            .map(|(y, lm)| (y, lm + (-eps).ln_1p()))
            .collect();
        if eps > 0.0 {
            measure.push((self.dirac(x), eps.ln()));
        }
        Ok(measure)
    }

    fn ln_power_integral(&self, x: &[f64], gamma: GammaParam) -> Result<f64> {
        let eps = (self.ratio)(x);
        if eps == 0.0 {
            return self.model.log_power_integral(&self.theta, x, gamma);
        }
        if !self.model.is_discrete() {
            return Err(Error::QuadratureFailure(
                "a continuous law with an atom has no finite power integral".into(),
            ));
        }
        let a = 1.0 + gamma.get();
        let y_dag = self.dirac(x);
        let mut hit = false;
        let mut terms: Vec<f64> = self
            .model
            .response_measure(&self.theta, x, &self.quadrature)?
            .into_iter()
            .map(|(y, lm)| {
                let mut mass = (1.0 - eps) * lm.exp();
                if y == y_dag {
                    mass += eps;
                    hit = true;
                }
                a * mass.ln()
            })
            .collect();
        if !hit {
            terms.push(a * eps.ln());
        }
        Ok(log_sum_exp(&terms))
    }
}

/// Independent stream seed for replicate `replicate` of contamination level `level`.
pub fn derive_seed(master: u64, level: u64, replicate: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(mix(mix(master) ^ level) ^ replicate)
}

/// Write `x1..xp,y,is_outlier` with 17 significant digits.
pub fn write_csv(path: &Path, sample: &ContaminatedSample) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let p = sample.data.p();
    let mut header: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    header.push("is_outlier".into());
    w.write_record(&header)?;
    for i in 0..sample.data.n() {
        let mut record: Vec<String> = sample.data.row(i).iter().map(|v| format!("{v:.16e}")).collect();
        record.push(format!("{:.16e}", sample.data.y()[i]));
        record.push(if sample.is_outlier[i] { "1" } else { "0" }.into());
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Csv(e)
    }
}

/// Read a dataset written by [`write_csv`]; `is_outlier` is optional, and
/// columns other than `x*`, `y` and `is_outlier` are rejected.
pub fn read_csv(path: &Path) -> Result<ContaminatedSample> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let headers = r.headers()?.clone();
    let mut x_cols = Vec::new();
    let mut y_col = None;
    let mut flag_col = None;
    for (i, h) in headers.iter().enumerate() {
        match h.trim() {
            "y" => y_col = Some(i),
            "is_outlier" => flag_col = Some(i),
            h if h.starts_with('x') && h[1..].parse::<usize>().is_ok() => x_cols.push(i),
            other => return Err(Error::InvalidDataset(format!("unexpected column `{other}`"))),
        }
    }
    let y_col = y_col.ok_or_else(|| Error::InvalidDataset("missing `y` column".into()))?;
    let parse = |s: &str, line: usize| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::InvalidDataset(format!("line {line}: cannot parse `{s}`")))
    };
    let (mut x, mut y, mut flags) = (Vec::new(), Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        for &c in &x_cols {
            x.push(parse(&rec[c], line + 2)?);
        }
        y.push(parse(&rec[y_col], line + 2)?);
        flags.push(match flag_col.map(|c| rec[c].trim()) {
            None | Some("0") | Some("false") => false,
            Some("1") | Some("true") => true,
            Some(other) => return Err(Error::InvalidDataset(format!("line {}: bad flag `{other}`", line + 2))),
        });
    }
    Ok(ContaminatedSample {
        data: RegressionDataset::new(x, x_cols.len(), y)?,
        is_outlier: flags,
    })
}

/// Fraction of rows flagged as outliers.
pub fn outlier_fraction(sample: &ContaminatedSample) -> f64 {
    let v: Vec<f64> = sample.is_outlier.iter().map(|&o| if o { 1.0 } else { 0.0 }).collect();
    pairwise_sum(&v) / v.len() as f64
}
