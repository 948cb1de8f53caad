use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use gamma_regress::bench::{run_experiment, ExperimentConfig, Parallelism};
use gamma_regress::contamination::{derive_seed, generate, read_csv, write_csv, CovariateSpec};
use gamma_regress::error::{Error, Result};
use gamma_regress::estimator::{fit, FitConfig, FitResult, Init};
use gamma_regress::models::ModelSpec;
use gamma_regress::theory::{run_check, TheoryCheck, TheoryConfig};
use gamma_regress::{CrossEntropyKind, GammaParam};

/// Robust regression with type 1 and type 2 γ-divergence estimators.
#[derive(Parser)]
#[command(name = "gamma-regress", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the contamination MSE experiment and write reports.
    Bench {
        /// JSON experiment config; omitted fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "bench-out")]
        out_dir: PathBuf,
        #[arg(long, conflicts_with = "single_threaded")]
        threads: Option<usize>,
        #[arg(long)]
        single_threaded: bool,
        /// Exit with status 2 if any fit failed or did not converge.
        #[arg(long)]
        strict: bool,
    },
    /// Fit one γ-estimator to a CSV dataset.
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// logistic, gaussian or poisson.
        #[arg(long, default_value = "logistic")]
        model: ModelSpec,
        #[arg(long)]
        gamma: f64,
        /// 1 or 2.
        #[arg(long = "type")]
        kind: CrossEntropyKind,
        /// mle or zero.
        #[arg(long, default_value = "mle")]
        init: String,
        /// Write JSON here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate one contaminated dataset as CSV.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the first outlier ratio of the config.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = 0)]
        replicate: u64,
    },
    /// Evaluate a robustness relation by quadrature and print a JSON report.
    Theory {
        /// theorem1, pythagorean or type2-bias.
        #[arg(long)]
        check: TheoryCheck,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct FitOutput<'a> {
    model: &'a str,
    gamma: f64,
    kind: CrossEntropyKind,
    n: usize,
    p: usize,
    #[serde(flatten)]
    result: FitResult,
}

fn read_json<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.to_path_buf(),
                source: e,
            })?;
            Ok(serde_json::from_str(&text)?)
        }
    }
}

fn emit(out: Option<&Path>, body: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, body).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            println!("{body}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Bench {
            config,
            out_dir,
            threads,
            single_threaded,
            strict,
        } => {
            let cfg: ExperimentConfig = read_json(config.as_deref())?;
            let parallelism = match (single_threaded, threads) {
                (true, _) => Parallelism::SingleThreaded,
                (false, Some(n)) => Parallelism::Threads(n),
                (false, None) => Parallelism::Default,
            };
            let report = run_experiment(&cfg, parallelism)?;
            report.write_all(&out_dir)?;
            print!("{}", report.to_markdown());
            let failures = report.total_failures();
            eprintln!("{failures} failed or unconverged fits; reports in {}", out_dir.display());
            if strict && failures > 0 {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Fit {
            data,
            model,
            gamma,
            kind,
            init,
            out,
        } => {
            let sample = read_csv(&data)?;
            let family = model.build()?;
            let init = match init.as_str() {
                "mle" => Init::Mle,
                "zero" => Init::Zero,
                other => return Err(Error::InvalidConfig(format!("unknown init `{other}`"))),
            };
            let config = FitConfig::new(GammaParam::new(gamma)?, kind).with_init(init);
            let result = fit(family.as_ref(), &sample.data, &config)?;
            let output = FitOutput {
                model: family.name(),
                gamma,
                kind,
                n: sample.data.n(),
                p: sample.data.p(),
                result,
            };
            emit(out.as_deref(), &serde_json::to_string_pretty(&output)?)?;
        }
        Command::Simulate {
            config,
            out,
            epsilon,
            replicate,
        } => {
            let cfg: ExperimentConfig = read_json(config.as_deref())?;
            cfg.validate()?;
            let epsilon = epsilon.unwrap_or(cfg.epsilons[0]);
            // same stream as the bench when ε is one of the configured levels
            let level = cfg
                .epsilons
                .iter()
                .position(|&e| e == epsilon)
                .map_or(epsilon.to_bits(), |i| i as u64);
            let scheme = cfg.scheme(epsilon);
            let family = cfg.model.build()?;
            let cov = CovariateSpec::new(cfg.p, cfg.rho)?;
            let sample = generate(
                family.as_ref(),
                &scheme,
                &cov,
                cfg.n,
                derive_seed(cfg.master_seed, level, replicate),
            )?;
            write_csv(&out, &sample)?;
            eprintln!("{} rows, {} outliers -> {}", sample.data.n(), sample.outlier_count(), out.display());
        }
        Command::Theory { check, config, out } => {
            let cfg: TheoryConfig = read_json(config.as_deref())?;
            let report = run_check(check, &cfg)?;
            emit(out.as_deref(), &serde_json::to_string_pretty(&report)?)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
