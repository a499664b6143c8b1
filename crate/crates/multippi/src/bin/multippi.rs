//! Command-line front door: covariance estimation, allocation solving,
//! estimation from batch files, and Monte Carlo simulation.
//!
//! Validation failures exit 1, solver non-convergence exits 2; both print a
//! machine-readable {"error", "detail"} object on stderr.

use clap::{Parser, Subcommand, ValueEnum};
use multippi::allocator::AllocatorError;
use multippi::estimators::{
    pipeline_run, BatchSource, CovarianceMethod, EstimatorError, PipelineConfig,
};
use multippi::linalg::Mat;
use multippi::model::{CostModelRepr, Subset};
use multippi::simulator::{run_experiment, write_metrics_csv, ExperimentConfig, SimError};
use multippi::{
    empirical_covariance, ledoit_wolf, solve_multi_budget, solve_single_budget, CostModel,
    CovarianceMatrix, Divisor, PopulationSource, SourceSpec, TargetSpec,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::cell::RefCell;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "multippi", about = "Budget-optimal subset sampling and estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CovMethodArg {
    Empirical,
    LedoitWolf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a covariance matrix from a labeled CSV (header row).
    Covariance {
        /// Samples CSV, one fully labeled row per line.
        input: PathBuf,
        #[arg(long, value_enum, default_value = "ledoit-wolf")]
        method: CovMethodArg,
        #[arg(long, value_enum, default_value = "json")]
        format: FormatArg,
        /// Write here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Solve for the optimal allocation plan.
    Allocate {
        /// Covariance matrix: JSON array-of-arrays or headerless CSV.
        #[arg(long)]
        covariance: PathBuf,
        /// Cost model JSON {"k", "subsets", "costs", "budgets"}.
        #[arg(long)]
        cost_model: PathBuf,
        /// Target coefficients, comma-joined; defaults to e1.
        #[arg(long)]
        target: Option<String>,
        /// Replace the budget vector (repeat per row).
        #[arg(long = "budget")]
        budgets: Vec<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the burn-in pipeline and report a point estimate with interval.
    Estimate {
        /// Burn-in labeled CSV (header row), fully observed rows.
        #[arg(long)]
        labeled: PathBuf,
        #[arg(long)]
        cost_model: PathBuf,
        #[arg(long, value_enum, default_value = "ledoit-wolf")]
        method: CovMethodArg,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Directory of per-subset batch CSVs named "<subset>.csv", e.g. "2,3.csv".
        #[arg(long)]
        batches_dir: Option<PathBuf>,
        /// Synthetic source JSON as an alternative batch supply.
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a Monte Carlo experiment grid and emit metrics CSV.
    Simulate {
        /// Experiment config JSON.
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

struct CliError {
    exit: u8,
    error: &'static str,
    detail: String,
}

impl CliError {
    fn validation(detail: impl ToString) -> Self {
        CliError { exit: 1, error: "validation", detail: detail.to_string() }
    }

    fn io(detail: impl ToString) -> Self {
        CliError { exit: 1, error: "io", detail: detail.to_string() }
    }

    fn parse(detail: impl ToString) -> Self {
        CliError { exit: 1, error: "parse", detail: detail.to_string() }
    }
}

fn allocator_error(e: AllocatorError) -> CliError {
    match e {
        AllocatorError::SolverNotConverged { .. } => {
            CliError { exit: 2, error: "solver", detail: e.to_string() }
        }
        other => CliError::validation(other),
    }
}

fn estimator_error(e: EstimatorError) -> CliError {
    match e {
        EstimatorError::Allocator(a) => allocator_error(a),
        other => CliError::validation(other),
    }
}

fn sim_error(e: SimError) -> CliError {
    match e {
        SimError::Estimator(inner) => estimator_error(inner),
        other => CliError::validation(other),
    }
}

fn read_to_string(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

/// CSV with a header row; every cell must parse as a float.
fn read_samples_csv(path: &Path) -> Result<Mat<f64>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::parse(e))?;
        let row: Result<Vec<f64>, _> =
            record.iter().map(|cell| cell.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| {
            CliError::parse(format!("{}: {e}", path.display()))
        })?);
    }
    if rows.is_empty() {
        return Err(CliError::validation(format!("{}: no data rows", path.display())));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(CliError::parse(format!("{}: ragged rows", path.display())));
    }
    Ok(Mat::from_rows(&rows))
}

/// JSON array-of-arrays or headerless CSV, square.
fn read_matrix(path: &Path) -> Result<Mat<f64>, CliError> {
    let text = read_to_string(path)?;
    let rows: Vec<Vec<f64>> = if text.trim_start().starts_with('[') {
        serde_json::from_str(&text)
            .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?
    } else {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split(',')
                    .map(|c| c.trim().parse::<f64>())
                    .collect::<Result<Vec<f64>, _>>()
            })
            .collect::<Result<Vec<Vec<f64>>, _>>()
            .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?
    };
    if rows.is_empty() || rows.iter().any(|r| r.len() != rows.len()) {
        return Err(CliError::validation(format!("{}: matrix must be square", path.display())));
    }
    Ok(Mat::from_rows(&rows))
}

fn read_cost_model(path: &Path) -> Result<CostModel<f64>, CliError> {
    let text = read_to_string(path)?;
    let repr: CostModelRepr<f64> =
        serde_json::from_str(&text).map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
    CostModel::from_repr(repr).map_err(CliError::validation)
}

fn emit(path: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, contents).map_err(|e| CliError::io(format!("{}: {e}", p.display()))),
        None => {
            println!("{contents}");
            Ok(())
        }
    }
}

fn matrix_rows(m: &Mat<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn cmd_covariance(
    input: &Path,
    method: CovMethodArg,
    format: FormatArg,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let samples = read_samples_csv(input)?;
    let sigma = match method {
        CovMethodArg::Empirical => {
            empirical_covariance(&samples, Divisor::N).map_err(CliError::validation)?
        }
        CovMethodArg::LedoitWolf => ledoit_wolf(&samples).map_err(CliError::validation)?.sigma_lw,
    };
    let rows = matrix_rows(sigma.entries());
    let text = match format {
        FormatArg::Json => serde_json::to_string_pretty(&rows).expect("matrix serializes"),
        FormatArg::Csv => rows
            .iter()
            .map(|r| r.iter().map(f64::to_string).collect::<Vec<_>>().join(","))
            .collect::<Vec<_>>()
            .join("\n"),
    };
    emit(output, &text)
}

fn cmd_allocate(
    covariance: &Path,
    cost_model: &Path,
    target: Option<&str>,
    budgets: &[f64],
    output: Option<&Path>,
) -> Result<(), CliError> {
    let sigma = CovarianceMatrix::new(read_matrix(covariance)?).map_err(CliError::validation)?;
    let mut cm = read_cost_model(cost_model)?;
    if !budgets.is_empty() {
        let mut repr = cm.to_repr();
        if budgets.len() != repr.budgets.len() {
            return Err(CliError::validation(format!(
                "expected {} budget rows, got {}",
                repr.budgets.len(),
                budgets.len()
            )));
        }
        repr.budgets = budgets.to_vec();
        cm = CostModel::from_repr(repr).map_err(CliError::validation)?;
    }
    if cm.k() != sigma.k() {
        return Err(CliError::validation("cost model and covariance dimension differ"));
    }
    let target = match target {
        Some(text) => {
            let coeffs: Result<Vec<f64>, _> =
                text.split(',').map(|c| c.trim().parse::<f64>()).collect();
            TargetSpec::new(coeffs.map_err(CliError::parse)?).map_err(CliError::validation)?
        }
        None => TargetSpec::first_coordinate(sigma.k()),
    };
    let plan = if cm.m() == 1 {
        solve_single_budget(&sigma, &target, &cm).map_err(allocator_error)?.1
    } else {
        solve_multi_budget(&sigma, &target, &cm).map_err(allocator_error)?
    };
    let text = serde_json::to_string_pretty(&plan.to_repr(cm.family())).expect("plan serializes");
    emit(output, &text)
}

/// Serves batches from "<subset>.csv" files, or a synthetic source.
enum BatchSupply {
    Dir { dir: PathBuf, error: RefCell<Option<CliError>> },
    Source { source: PopulationSource, rng: ChaCha8Rng },
}

impl BatchSource<f64> for BatchSupply {
    fn draw(&mut self, subset: &Subset, n: usize) -> Vec<Vec<f64>> {
        match self {
            BatchSupply::Dir { dir, error } => {
                let path = dir.join(format!("{}.csv", subset.label()));
                match read_samples_csv(&path) {
                    Ok(mat) if mat.nrows() >= n && mat.ncols() == subset.len() => (0..n)
                        .map(|r| (0..mat.ncols()).map(|c| mat[(r, c)]).collect())
                        .collect(),
                    Ok(mat) => {
                        *error.borrow_mut() = Some(CliError::validation(format!(
                            "{}: need {n} rows x {} cols, found {} x {}",
                            path.display(),
                            subset.len(),
                            mat.nrows(),
                            mat.ncols()
                        )));
                        Vec::new()
                    }
                    Err(e) => {
                        *error.borrow_mut() = Some(e);
                        Vec::new()
                    }
                }
            }
            BatchSupply::Source { source, rng } => source
                .sample_rows(rng, n)
                .expect("default sources draw with replacement")
                .into_iter()
                .map(|row| subset.indices().iter().map(|&c| row[c]).collect())
                .collect(),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_estimate(
    labeled: &Path,
    cost_model: &Path,
    method: CovMethodArg,
    alpha: f64,
    batches_dir: Option<&Path>,
    source: Option<&Path>,
    seed: u64,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let labeled = read_samples_csv(labeled)?;
    let cm = read_cost_model(cost_model)?;
    let mut supply = match (batches_dir, source) {
        (Some(dir), None) => {
            BatchSupply::Dir { dir: dir.to_path_buf(), error: RefCell::new(None) }
        }
        (None, Some(path)) => {
            let text = read_to_string(path)?;
            let spec: SourceSpec = serde_json::from_str(&text)
                .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
            BatchSupply::Source {
                source: spec.build().map_err(sim_error)?,
                rng: ChaCha8Rng::seed_from_u64(seed),
            }
        }
        _ => {
            return Err(CliError::validation(
                "provide exactly one of --batches-dir and --source",
            ));
        }
    };
    let config = PipelineConfig {
        covariance_method: match method {
            CovMethodArg::Empirical => CovarianceMethod::Empirical,
            CovMethodArg::LedoitWolf => CovarianceMethod::LedoitWolf,
        },
        target: TargetSpec::first_coordinate(cm.k()),
        cost_model: cm,
        alpha,
    };
    let report = pipeline_run(&labeled, &config, &mut supply);
    if let BatchSupply::Dir { error, .. } = &supply {
        if let Some(e) = error.borrow_mut().take() {
            return Err(e);
        }
    }
    let report = report.map_err(estimator_error)?;
    let text = serde_json::to_string_pretty(&report.to_repr()).expect("report serializes");
    emit(output, &text)
}

fn cmd_simulate(config: &Path, output: Option<&Path>) -> Result<(), CliError> {
    let text = read_to_string(config)?;
    let config: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::parse(format!("{}: {e}", config.display())))?;
    let rows = run_experiment(&config).map_err(sim_error)?;
    let mut buf = Vec::new();
    write_metrics_csv(&rows, &mut buf).map_err(sim_error)?;
    let text = String::from_utf8(buf).expect("csv is utf-8");
    emit(output, text.trim_end())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Covariance { input, method, format, output } => {
            cmd_covariance(&input, method, format, output.as_deref())
        }
        Command::Allocate { covariance, cost_model, target, budgets, output } => {
            cmd_allocate(&covariance, &cost_model, target.as_deref(), &budgets, output.as_deref())
        }
        Command::Estimate {
            labeled,
            cost_model,
            method,
            alpha,
            batches_dir,
            source,
            seed,
            output,
        } => cmd_estimate(
            &labeled,
            &cost_model,
            method,
            alpha,
            batches_dir.as_deref(),
            source.as_deref(),
            seed,
            output.as_deref(),
        ),
        Command::Simulate { config, output } => cmd_simulate(&config, output.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::json!({ "error": e.error, "detail": e.detail })
            );
            ExitCode::from(e.exit)
        }
    }
}
