//! `survtime`: simulate, fit, predict, evaluate and cluster survival models
//! from CSV files.

mod config;
mod error;
mod model_file;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use survtime::cluster::{curves_to_matrix, kmeans_curves};
use survtime::cox::{fit_newton_raphson, NewtonOptions};
use survtime::curves::SurvivalCurves;
use survtime::dataset::{load_covariates_csv, load_csv, write_csv, Standardizer, SurvivalDataset};
use survtime::deephit::fit_deephit;
use survtime::metrics::evaluate;
use survtime::neural::{
    fit_cox_mlp_batchpl, fit_cox_mlp_cc, fit_cox_sgd_linear, fit_cox_time, linear_model_from_beta, EpochRecord,
};
use survtime::sim::{draw_dataset, ScenarioKind, SimScenario};

use config::{ModelChoice, RunConfig};
use error::CliError;
use model_file::{Fitted, ModelFile, FORMAT_VERSION};

/// Environment variable that overrides every seed (config or flag).
const SEED_ENV: &str = "SURVTIME_SEED";

#[derive(Parser)]
#[command(name = "survtime", version, about = "Continuous-time survival prediction from CSV files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a dataset from a simulation scenario.
    Simulate {
        /// linear-ph, nonlinear-ph or nonproportional.
        #[arg(long)]
        scenario: ScenarioKind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the hidden event/censoring times and true risk.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Train a model; per-epoch losses go to standard output as CSV.
    Fit {
        /// JSON run configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long)]
        out_model: Option<PathBuf>,
    },
    /// Write survival curves (`time,s_row0,...`) for every row of a CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Covariate CSV; `duration` and `event` columns are ignored.
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated increasing times; the model's own grid otherwise.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        #[arg(long)]
        out_curves: PathBuf,
    },
    /// Concordance, integrated Brier score and binomial log-likelihood.
    Evaluate {
        #[arg(long, conflicts_with = "curves", required_unless_present = "curves")]
        model: Option<PathBuf>,
        /// Previously predicted curves, one column per test row.
        #[arg(long)]
        curves: Option<PathBuf>,
        #[arg(long)]
        test: PathBuf,
        /// Points of the integration grid over the test durations.
        #[arg(long, default_value_t = 100)]
        grid_points: usize,
        /// JSON report path; standard output otherwise.
        #[arg(long)]
        out_report: Option<PathBuf>,
    },
    /// K-means on predicted curves.
    Cluster {
        #[arg(long)]
        curves: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Grid intervals the curves are evaluated on.
        #[arg(long, default_value_t = 100)]
        points: usize,
        /// Upper end of the grid; the curves' last time otherwise.
        #[arg(long)]
        span: Option<f64>,
        #[arg(long, default_value_t = 300)]
        max_iter: usize,
        /// Cluster centers CSV (`time,cluster_0,...`).
        #[arg(long)]
        out: PathBuf,
        /// Proportions JSON path; standard output otherwise.
        #[arg(long)]
        out_proportions: Option<PathBuf>,
    },
}

fn seed_override() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::usage(format!("{SEED_ENV} must be an unsigned integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

fn effective_seed(seed: u64) -> Result<u64, CliError> {
    Ok(seed_override()?.unwrap_or(seed))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::usage(format!("cannot open {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn read_dataset(path: &Path) -> Result<SurvivalDataset, CliError> {
    load_csv(open(path)?).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

/// Writes to standard output; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(anyhow::Error::new(e).context("writing to standard output").into()),
        _ => Ok(()),
    }
}

fn write_json<T: serde::Serialize>(value: &T, path: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).context("serializing JSON")?;
    match path {
        Some(p) => {
            let mut w = create(p)?;
            writeln!(w, "{text}").with_context(|| format!("writing {}", p.display()))?;
            w.flush().with_context(|| format!("writing {}", p.display()))?;
        }
        None => emit(&format!("{text}\n"))?,
    }
    Ok(())
}

fn cmd_simulate(
    scenario: ScenarioKind,
    n: usize,
    seed: u64,
    out: &Path,
    truth: Option<&Path>,
) -> Result<(), CliError> {
    let data = draw_dataset(&SimScenario::new(scenario), n, effective_seed(seed)?)?;
    let mut w = create(out)?;
    write_csv(&data.dataset, &mut w)?;
    w.flush().with_context(|| format!("writing {}", out.display()))?;
    if let Some(p) = truth {
        let mut w = create(p)?;
        data.write_truth_csv(&mut w)?;
        w.flush().with_context(|| format!("writing {}", p.display()))?;
    }
    let censored = 1.0 - data.dataset.n_events() as f64 / n as f64;
    eprintln!("{scenario}: {n} rows, {:.1}% censored", 100.0 * censored);
    Ok(())
}

fn print_history(history: &[EpochRecord]) -> Result<(), CliError> {
    let mut text = String::from("epoch,train_loss,val_loss\n");
    for r in history {
        let val = r.val_loss.map(|v| v.to_string()).unwrap_or_default();
        text.push_str(&format!("{},{},{val}\n", r.epoch, r.train_loss));
    }
    emit(&text)
}

/// Linear coefficients mapped back to the raw covariate scale.
fn raw_scale(beta: &[f64], standardizer: Option<&Standardizer>) -> Vec<f64> {
    match standardizer {
        Some(s) => beta.iter().zip(&s.sd).map(|(b, sd)| if *sd > 0.0 { b / sd } else { 0.0 }).collect(),
        None => beta.to_vec(),
    }
}

fn cmd_fit(
    config_path: Option<&Path>,
    train: Option<PathBuf>,
    val: Option<PathBuf>,
    out_model: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut config = match config_path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    config.seed = effective_seed(config.seed)?;
    config.validate()?;
    let train_path = train.or(config.train.clone()).ok_or_else(|| CliError::usage("no training data: pass --train"))?;
    let out_path =
        out_model.or(config.out_model.clone()).ok_or_else(|| CliError::usage("no output path: pass --out-model"))?;
    let val_path = val.or(config.val.clone());

    let raw_train = read_dataset(&train_path)?;
    if raw_train.n_events() == 0 {
        return Err(CliError::usage(format!("{}: no events in training data", train_path.display())));
    }
    let raw_val = val_path.as_deref().map(read_dataset).transpose()?;
    if raw_val.as_ref().is_some_and(|v| v.names() != raw_train.names()) {
        return Err(CliError::usage("validation columns differ from training columns"));
    }
    let standardizer = config.standardize.then(|| Standardizer::fit(&raw_train));
    let (train, val) = match &standardizer {
        Some(s) => (s.apply(&raw_train)?, raw_val.as_ref().map(|v| s.apply(v)).transpose()?),
        None => (raw_train.clone(), raw_val),
    };
    let p = train.n_covariates();
    let spec = config.mlp_spec(p);
    let cc = config.train_config();
    let fitted = match config.model {
        ModelChoice::CoxLinear => {
            let nr = fit_newton_raphson(&train, NewtonOptions::default())?;
            Fitted::RelativeRisk(linear_model_from_beta(&train, &nr.beta)?)
        }
        ModelChoice::CoxSgd => Fitted::RelativeRisk(fit_cox_sgd_linear(&train, &cc)?),
        ModelChoice::CoxMlpCc => Fitted::RelativeRisk(fit_cox_mlp_cc(&train, val.as_ref(), spec, &cc)?),
        ModelChoice::CoxMlpBatchpl => Fitted::RelativeRisk(fit_cox_mlp_batchpl(&train, val.as_ref(), spec, &cc)?),
        ModelChoice::CoxTime => Fitted::RelativeRisk(fit_cox_time(&train, val.as_ref(), spec, &cc)?),
        ModelChoice::Deephit => Fitted::Deephit(fit_deephit(&train, val.as_ref(), spec, &config.deephit_config())?),
    };
    match &fitted {
        Fitted::RelativeRisk(m) => {
            print_history(&m.history)?;
            if let Some(beta) = m.coefficients() {
                let raw = raw_scale(&beta, standardizer.as_ref());
                let shown: Vec<String> = raw.iter().map(|b| format!("{b:.4}")).collect();
                eprintln!("coefficients: [{}]", shown.join(", "));
            }
        }
        Fitted::Deephit(m) => print_history(&m.history)?,
    }
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        model: config.model,
        covariates: raw_train.names().to_vec(),
        standardizer,
        fitted,
    };
    write_json(&file, Some(&out_path))
}

fn cmd_predict(model: &Path, data: &Path, grid: Option<Vec<f64>>, out: &Path) -> Result<(), CliError> {
    let file = ModelFile::read(model)?;
    if let Some(g) = &grid {
        if g.is_empty() || g.windows(2).any(|w| !(w[1] > w[0])) || g.iter().any(|t| !t.is_finite()) {
            return Err(CliError::usage("--grid must be finite and strictly increasing"));
        }
    }
    let (names, x) = load_covariates_csv(open(data)?).map_err(|e| CliError::usage(format!("{}: {e}", data.display())))?;
    let curves = file.predict(&names, &x, grid.as_deref())?;
    let mut w = create(out)?;
    curves.write_csv(&mut w)?;
    w.flush().with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

fn cmd_evaluate(
    model: Option<&Path>,
    curves_path: Option<&Path>,
    test: &Path,
    grid_points: usize,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let ds = read_dataset(test)?;
    let curves = match (model, curves_path) {
        (Some(m), _) => {
            let file = ModelFile::read(m)?;
            file.predict(ds.names(), ds.covariates(), None)?
        }
        (None, Some(c)) => {
            let curves = SurvivalCurves::read_csv(open(c)?)?;
            if curves.n_rows() != ds.len() {
                return Err(CliError::usage(format!(
                    "{} has {} curves but the test set has {} rows",
                    c.display(),
                    curves.n_rows(),
                    ds.len()
                )));
            }
            curves
        }
        (None, None) => return Err(CliError::usage("pass --model or --curves")),
    };
    if grid_points < 2 {
        return Err(CliError::usage("--grid-points must be at least 2"));
    }
    let report = evaluate(&ds, &curves, grid_points)?;
    write_json(&report, out)
}

#[allow(clippy::too_many_arguments)]
fn cmd_cluster(
    curves_path: &Path,
    k: usize,
    seed: u64,
    points: usize,
    span: Option<f64>,
    max_iter: usize,
    out: &Path,
    out_proportions: Option<&Path>,
) -> Result<(), CliError> {
    let curves = SurvivalCurves::read_csv(open(curves_path)?)?;
    let span = match span {
        Some(s) => s,
        None => *curves.times().last().ok_or_else(|| CliError::usage("curves file has no times"))?,
    };
    let matrix = curves_to_matrix(&curves, points, span)?;
    let result = kmeans_curves(&matrix, k, effective_seed(seed)?, max_iter)?;
    let mut w = create(out)?;
    result.write_centers_csv(&matrix.grid, &mut w)?;
    w.flush().with_context(|| format!("writing {}", out.display()))?;
    write_json(&result.proportions_summary(), out_proportions)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { scenario, n, seed, out, truth } => cmd_simulate(scenario, n, seed, &out, truth.as_deref()),
        Command::Fit { config, train, val, out_model } => cmd_fit(config.as_deref(), train, val, out_model),
        Command::Predict { model, data, grid, out_curves } => cmd_predict(&model, &data, grid, &out_curves),
        Command::Evaluate { model, curves, test, grid_points, out_report } => {
            cmd_evaluate(model.as_deref(), curves.as_deref(), &test, grid_points, out_report.as_deref())
        }
        Command::Cluster { curves, k, seed, points, span, max_iter, out, out_proportions } => {
            cmd_cluster(&curves, k, seed, points, span, max_iter, &out, out_proportions.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
