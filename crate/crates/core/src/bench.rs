//! Monte Carlo MSE experiment under leverage contamination.
//!
//! Each replicate draws one contaminated dataset per outlier ratio and fits
//! every `(γ, type)` pair to it. Per-replicate seeds are derived from the
//! master seed, so results do not depend on thread count or scheduling.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contamination::{
    derive_seed, generate, ContaminationMode, ContaminationScheme, CovariateSpec, OutlierCovariates, OutlierRatio,
    OutlierResponse,
};
use crate::divergence::{CrossEntropyKind, GammaParam};
use crate::error::{Error, Result};
use crate::estimator::{fit, FitConfig, Init};
use crate::models::ModelSpec;
use crate::numeric::pairwise_sum;

/// Where each fit starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchInit {
    /// The data-generating coefficients.
    #[default]
    Truth,
    Mle,
    Zero,
}

/// Outlying rows: covariates from `N(mean, sd² I)`, response `response`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutlierSpec {
    pub mean: Vec<f64>,
    pub sd: f64,
    pub response: OutlierResponse,
    pub mode: ContaminationMode,
}

impl Default for OutlierSpec {
    fn default() -> Self {
        Self {
            mean: vec![20.0, 0.0, 20.0, 0.0, 0.0],
            sd: 0.5,
            response: OutlierResponse::Constant(0.0),
            mode: ContaminationMode::Heterogeneous,
        }
    }
}

/// Experiment description; every omitted field takes its default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub n: usize,
    pub p: usize,
    pub beta_true: Vec<f64>,
    pub rho: f64,
    pub epsilons: Vec<f64>,
    pub gammas: Vec<f64>,
    pub kinds: Vec<CrossEntropyKind>,
    pub replicates: usize,
    pub master_seed: u64,
    pub outlier: OutlierSpec,
    pub init: BenchInit,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::Logistic,
            n: 1000,
            p: 5,
            beta_true: vec![0.0, 1.0, -1.0, 1.0, -1.0, 0.0],
            rho: 0.2,
            epsilons: vec![0.1, 0.2, 0.3, 0.4],
            gammas: vec![0.5, 1.0],
            kinds: vec![CrossEntropyKind::Type1, CrossEntropyKind::Type2],
            replicates: 100,
            master_seed: 20_170_101,
            outlier: OutlierSpec::default(),
            init: BenchInit::Truth,
            max_iters: 500,
            grad_tol: 1e-8,
            step_tol: 1e-10,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n == 0 || self.replicates == 0 {
            return bad("n and replicates must be at least 1".into());
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(0.0..1.0).contains(*e)) {
            return bad(format!("epsilon {e} outside [0, 1)"));
        }
        for &g in &self.gammas {
            GammaParam::new(g)?;
        }
        if self.epsilons.is_empty() || self.gammas.is_empty() || self.kinds.is_empty() {
            return bad("epsilons, gammas and kinds must be non-empty".into());
        }
        let model = self.model.build()?;
        model.check_theta(&self.beta_true, self.p)?;
        if self.outlier.mean.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                found: self.outlier.mean.len(),
            });
        }
        CovariateSpec::new(self.p, self.rho)?;
        for &e in &self.epsilons {
            self.scheme(e).validate_for(model.as_ref(), self.p)?;
        }
        Ok(())
    }

    pub fn scheme(&self, epsilon: f64) -> ContaminationScheme {
        let leverage = self.outlier.mode == ContaminationMode::Heterogeneous;
        ContaminationScheme {
            clean_theta: self.beta_true.clone(),
            outlier_ratio: OutlierRatio::Constant(epsilon),
            outlier_covariates: leverage.then(|| OutlierCovariates {
                mean: self.outlier.mean.clone(),
                sd: self.outlier.sd,
            }),
            outlier_response: self.outlier.response,
            mode: self.outlier.mode,
        }
    }

    fn init(&self) -> Init {
        match self.init {
            BenchInit::Truth => Init::Custom(self.beta_true.clone()),
            BenchInit::Mle => Init::Mle,
            BenchInit::Zero => Init::Zero,
        }
    }
}

/// `(1/(p+1)) Σ_j (θ̂_j − θ*_j)²`, intercept included.
pub fn compute_mse(theta_hat: &[f64], theta_true: &[f64]) -> Result<f64> {
    if theta_hat.len() != theta_true.len() {
        return Err(Error::LengthMismatch {
            left: theta_hat.len(),
            right: theta_true.len(),
        });
    }
    if theta_hat.is_empty() {
        return Ok(0.0);
    }
    let sq: Vec<f64> = theta_hat.iter().zip(theta_true).map(|(a, b)| (a - b).powi(2)).collect();
    Ok(pairwise_sum(&sq) / sq.len() as f64)
}

/// One fit of one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub epsilon: f64,
    pub gamma: f64,
    pub kind: CrossEntropyKind,
    pub replicate: usize,
    pub seed: u64,
    pub outliers: usize,
    /// `None` when the fit failed outright.
    pub mse: Option<f64>,
    pub converged: bool,
    pub iters: usize,
    pub theta_hat: Vec<f64>,
    pub error: Option<String>,
}

/// Summary over replicates for one `(ε, γ, type)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseCell {
    pub epsilon: f64,
    pub gamma: f64,
    pub kind: CrossEntropyKind,
    pub mean_mse: f64,
    pub sd_mse: f64,
    pub median_mse: f64,
    /// Fits that errored or stopped above the gradient tolerance.
    pub failures: usize,
    /// Fits contributing to the MSE summaries.
    pub fits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub epsilons: Vec<f64>,
    pub gammas: Vec<f64>,
    pub kinds: Vec<CrossEntropyKind>,
    pub cells: Vec<MseCell>,
    pub replicates: Vec<ReplicateRecord>,
}

impl MseReport {
    /// Aggregate records into cells ordered by ε, then γ, then type.
    pub fn from_records(
        epsilons: Vec<f64>,
        gammas: Vec<f64>,
        kinds: Vec<CrossEntropyKind>,
        replicates: Vec<ReplicateRecord>,
    ) -> Self {
        let mut cells = Vec::with_capacity(epsilons.len() * gammas.len() * kinds.len());
        for &epsilon in &epsilons {
            for &gamma in &gammas {
                for &kind in &kinds {
                    let rows: Vec<&ReplicateRecord> = replicates
                        .iter()
                        .filter(|r| r.epsilon == epsilon && r.gamma == gamma && r.kind == kind)
                        .collect();
                    let mses: Vec<f64> = rows.iter().filter_map(|r| r.mse).collect();
                    let failures = rows.iter().filter(|r| r.mse.is_none() || !r.converged).count();
                    cells.push(summarize(epsilon, gamma, kind, &mses, failures));
                }
            }
        }
        Self {
            epsilons,
            gammas,
            kinds,
            cells,
            replicates,
        }
    }

    pub fn cell(&self, epsilon: f64, gamma: f64, kind: CrossEntropyKind) -> Option<&MseCell> {
        self.cells
            .iter()
            .find(|c| c.epsilon == epsilon && c.gamma == gamma && c.kind == kind)
    }

    pub fn total_failures(&self) -> usize {
        self.cells.iter().map(|c| c.failures).sum()
    }

    /// Per-replicate CSV; floats use the shortest exact representation.
    pub fn to_replicates_csv(&self) -> Result<String> {
        let width = self.replicates.iter().map(|r| r.theta_hat.len()).max().unwrap_or(0);
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = [
            "epsilon", "gamma", "kind", "replicate", "seed", "outliers", "mse", "converged", "iters", "error",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((0..width).map(|j| format!("theta_{j}")));
        w.write_record(&header)?;
        for r in &self.replicates {
            let mut rec = vec![
                r.epsilon.to_string(),
                r.gamma.to_string(),
                r.kind.label().to_string(),
                r.replicate.to_string(),
                r.seed.to_string(),
                r.outliers.to_string(),
                r.mse.map_or(String::new(), |m| m.to_string()),
                r.converged.to_string(),
                r.iters.to_string(),
                r.error.clone().unwrap_or_default(),
            ];
            rec.extend((0..width).map(|j| r.theta_hat.get(j).map_or(String::new(), f64::to_string)));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Inverse of [`MseReport::to_replicates_csv`]; axis order follows first appearance.
    pub fn from_replicates_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let headers = r.headers()?.clone();
        let width = headers.iter().filter(|h| h.starts_with("theta_")).count();
        let bad = |m: String| Error::InvalidDataset(m);
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("cannot parse `{s}`")));
        let int = |s: &str| s.parse::<u64>().map_err(|_| bad(format!("cannot parse `{s}`")));
        let (mut eps, mut gam, mut kinds) = (Vec::new(), Vec::new(), Vec::new());
        let mut records = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 10 + width {
                return Err(bad(format!("expected {} fields, found {}", 10 + width, rec.len())));
            }
            let kind: CrossEntropyKind = rec[2].parse()?;
            let record = ReplicateRecord {
                epsilon: num(&rec[0])?,
                gamma: num(&rec[1])?,
                kind,
                replicate: int(&rec[3])? as usize,
                seed: int(&rec[4])?,
                outliers: int(&rec[5])? as usize,
                mse: if rec[6].is_empty() { None } else { Some(num(&rec[6])?) },
                converged: rec[7].parse().map_err(|_| bad(format!("bad flag `{}`", &rec[7])))?,
                iters: int(&rec[8])? as usize,
                error: (!rec[9].is_empty()).then(|| rec[9].to_string()),
                theta_hat: (10..10 + width)
                    .filter(|&j| !rec[j].is_empty())
                    .map(|j| num(&rec[j]))
                    .collect::<Result<_>>()?,
            };
            if !eps.contains(&record.epsilon) {
                eps.push(record.epsilon);
            }
            if !gam.contains(&record.gamma) {
                gam.push(record.gamma);
            }
            if !kinds.contains(&record.kind) {
                kinds.push(record.kind);
            }
            records.push(record);
        }
        Ok(Self::from_records(eps, gam, kinds, records))
    }

    pub fn to_cells_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["epsilon", "gamma", "kind", "mean_mse", "sd_mse", "median_mse", "failures", "fits"])?;
        for c in &self.cells {
            w.write_record([
                c.epsilon.to_string(),
                c.gamma.to_string(),
                c.kind.label().to_string(),
                c.mean_mse.to_string(),
                c.sd_mse.to_string(),
                c.median_mse.to_string(),
                c.failures.to_string(),
                c.fits.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Mean MSE laid out with ε blocks, one row per type and one column per γ.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| ε | method |");
        for g in &self.gammas {
            write!(out, " γ = {g:.1} |").unwrap();
        }
        out.push_str("\n|---|---|");
        out.push_str(&"---|".repeat(self.gammas.len()));
        out.push('\n');
        for &e in &self.epsilons {
            for (i, &k) in self.kinds.iter().enumerate() {
                let label = if i == 0 { format!("{e}") } else { String::new() };
                write!(out, "| {label} | {k} |").unwrap();
                for &g in &self.gammas {
                    let v = self.cell(e, g, k).map_or(f64::NAN, |c| c.mean_mse);
                    write!(out, " {} |", significant(v, 3)).unwrap();
                }
                out.push('\n');
            }
        }
        out
    }

    /// Write `replicates.csv`, `cells.csv`, `report.json` and `table.md` into `dir`.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            ("replicates.csv", self.to_replicates_csv()?),
            ("cells.csv", self.to_cells_csv()?),
            ("report.json", self.to_json()?),
            ("table.md", self.to_markdown()),
        ];
        for (name, body) in files {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

fn summarize(epsilon: f64, gamma: f64, kind: CrossEntropyKind, mses: &[f64], failures: usize) -> MseCell {
    let k = mses.len();
    let mean = if k == 0 { f64::NAN } else { pairwise_sum(mses) / k as f64 };
    let sd = if k < 2 {
        f64::NAN
    } else {
        let dev: Vec<f64> = mses.iter().map(|m| (m - mean).powi(2)).collect();
        (pairwise_sum(&dev) / (k - 1) as f64).sqrt()
    };
    let median = if k == 0 {
        f64::NAN
    } else {
        let mut s = mses.to_vec();
        s.sort_by(f64::total_cmp);
        if k % 2 == 1 {
            s[k / 2]
        } else {
            0.5 * (s[k / 2 - 1] + s[k / 2])
        }
    };
    MseCell {
        epsilon,
        gamma,
        kind,
        mean_mse: mean,
        sd_mse: sd,
        median_mse: median,
        failures,
        fits: k,
    }
}

/// `v` rounded to `digits` significant digits, in plain decimal notation.
fn significant(v: f64, digits: i32) -> String {
    if !v.is_finite() {
        return "n/a".into();
    }
    if v == 0.0 {
        return "0".into();
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (digits - 1 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

/// How replicates are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    /// Rayon's global pool.
    #[default]
    Default,
    Threads(usize),
    SingleThreaded,
}

fn run_replicate(cfg: &ExperimentConfig, eps_index: usize, replicate: usize) -> Vec<ReplicateRecord> {
    let epsilon = cfg.epsilons[eps_index];
    let seed = derive_seed(cfg.master_seed, eps_index as u64, replicate as u64);
    let cov = CovariateSpec {
        p: cfg.p,
        rho: cfg.rho,
    };
    let model = cfg.model.build().expect("validated");
    let sample = generate(model.as_ref(), &cfg.scheme(epsilon), &cov, cfg.n, seed);
    let mut out = Vec::with_capacity(cfg.gammas.len() * cfg.kinds.len());
    for &gamma in &cfg.gammas {
        for &kind in &cfg.kinds {
            let mut record = ReplicateRecord {
                epsilon,
                gamma,
                kind,
                replicate,
                seed,
                outliers: 0,
                mse: None,
                converged: false,
                iters: 0,
                theta_hat: Vec::new(),
                error: None,
            };
            let result = match &sample {
                Err(e) => Err(e.to_string()),
                Ok(s) => {
                    record.outliers = s.outlier_count();
                    let fit_cfg = FitConfig {
                        gamma: GammaParam::new(gamma).expect("validated"),
                        kind,
                        init: cfg.init(),
                        max_iters: cfg.max_iters,
                        grad_tol: cfg.grad_tol,
                        step_tol: cfg.step_tol,
                        seed,
                        restarts: 0,
                    };
                    fit(model.as_ref(), &s.data, &fit_cfg).map_err(|e| e.to_string())
                }
            };
            match result {
                Ok(r) => {
                    record.mse = compute_mse(&r.theta_hat, &cfg.beta_true).ok();
                    record.converged = r.converged;
                    record.iters = r.iters;
                    record.theta_hat = r.theta_hat;
                }
                Err(e) => record.error = Some(e),
            }
            out.push(record);
        }
    }
    out
}

/// Run the whole sweep. Fit failures are recorded, never raised.
pub fn run_experiment(cfg: &ExperimentConfig, parallelism: Parallelism) -> Result<MseReport> {
    cfg.validate()?;
    let tasks: Vec<(usize, usize)> = (0..cfg.epsilons.len())
        .flat_map(|e| (0..cfg.replicates).map(move |r| (e, r)))
        .collect();
    let run = || -> Vec<ReplicateRecord> {
        tasks
            .par_iter()
            .map(|&(e, r)| run_replicate(cfg, e, r))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    };
    let threads = match parallelism {
        Parallelism::Default => None,
        Parallelism::Threads(n) => Some(n.max(1)),
        Parallelism::SingleThreaded => Some(1),
    };
    let records = match threads {
        None => run(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?
            .install(run),
    };
    Ok(MseReport::from_records(
        cfg.epsilons.clone(),
        cfg.gammas.clone(),
        cfg.kinds.clone(),
        records,
    ))
}
