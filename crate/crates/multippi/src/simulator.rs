//! Monte Carlo harness: synthetic populations, cost-structure builders,
//! a paired trial runner producing coverage / CI-width / MSE metrics per
//! (method, budget), and the coverage-decay demonstration.
//!
//! Everything here is concrete `f64`.

use crate::estimators::{
    classical_estimate, pipeline_run, ppi_pp_scalar, ppi_pp_vector,
    BatchSource, CovarianceMethod, EstimateReport, EstimatorError, PipelineConfig,
};
use crate::linalg::{dot, psd_sqrt, Mat};
use crate::model::{
    Allocation, CostModel, CovarianceMatrix, ModelError, SampleBatch, Subset, SubsetFamily,
    TargetSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("empirical source is exhausted: requested {requested} of {available} rows without replacement")]
    ExhaustedEmpiricalRows { requested: usize, available: usize },
    #[error("bad simulation config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("csv write failed: {0}")]
    Io(#[from] io::Error),
}

/// The synthetic population trials draw from.
#[derive(Debug, Clone)]
pub enum PopulationSource {
    Gaussian {
        mean: Vec<f64>,
        sigma: CovarianceMatrix<f64>,
        /// Cached factor L with L L' = Sigma.
        factor: Mat<f64>,
    },
    Empirical {
        rows: Mat<f64>,
        replace: bool,
    },
}

impl PopulationSource {
    pub fn gaussian(mean: Vec<f64>, sigma: CovarianceMatrix<f64>) -> Result<Self, SimError> {
        if mean.len() != sigma.k() {
            return Err(SimError::BadConfig("mean length must match sigma".into()));
        }
        let factor = psd_sqrt(sigma.entries());
        Ok(PopulationSource::Gaussian { mean, sigma, factor })
    }

    pub fn empirical(rows: Mat<f64>, replace: bool) -> Result<Self, SimError> {
        if rows.nrows() < 2 {
            return Err(SimError::BadConfig("empirical source needs at least 2 rows".into()));
        }
        if !rows.is_finite() {
            return Err(SimError::BadConfig("empirical rows must be finite".into()));
        }
        Ok(PopulationSource::Empirical { rows, replace })
    }

    pub fn k(&self) -> usize {
        match self {
            PopulationSource::Gaussian { mean, .. } => mean.len(),
            PopulationSource::Empirical { rows, .. } => rows.ncols(),
        }
    }

    /// The estimand: a'mu, with mu the exact population mean.
    pub fn theta_star(&self, target: &TargetSpec<f64>) -> f64 {
        match self {
            PopulationSource::Gaussian { mean, .. } => dot(target.coefficients(), mean),
            PopulationSource::Empirical { rows, .. } => {
                let n = rows.nrows() as f64;
                (0..rows.ncols())
                    .map(|j| {
                        target.coefficients()[j]
                            * (0..rows.nrows()).map(|i| rows[(i, j)]).sum::<f64>()
                            / n
                    })
                    .sum()
            }
        }
    }

    /// `n` full i.i.d. rows.
    pub fn sample_rows(&self, rng: &mut ChaCha8Rng, n: usize) -> Result<Vec<Vec<f64>>, SimError> {
        match self {
            PopulationSource::Gaussian { mean, factor, .. } => {
                let k = mean.len();
                Ok((0..n)
                    .map(|_| {
                        let z: Vec<f64> =
                            (0..k).map(|_| rng.sample(StandardNormal)).collect();
                        let lz = factor.matvec(&z);
                        (0..k).map(|i| mean[i] + lz[i]).collect()
                    })
                    .collect())
            }
            PopulationSource::Empirical { rows, replace } => {
                let available = rows.nrows();
                if *replace {
                    Ok((0..n)
                        .map(|_| {
                            let r = rng.gen_range(0..available);
                            (0..rows.ncols()).map(|c| rows[(r, c)]).collect()
                        })
                        .collect())
                } else {
                    if n > available {
                        return Err(SimError::ExhaustedEmpiricalRows {
                            requested: n,
                            available,
                        });
                    }
                    let mut picked: Vec<usize> = (0..available).collect();
                    // partial Fisher-Yates
                    for i in 0..n {
                        let j = rng.gen_range(i..available);
                        picked.swap(i, j);
                    }
                    Ok(picked[..n]
                        .iter()
                        .map(|&r| (0..rows.ncols()).map(|c| rows[(r, c)]).collect())
                        .collect())
                }
            }
        }
    }
}

/// Cost structure of the model suite: how much a subset of proxies costs to
/// query once. Coordinate 1 is the gold label and is never priced here; it
/// enters only through the labeled-cap budget row.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "builder", rename_all = "snake_case")]
pub enum CostSpec {
    /// Independent models: querying a subset costs the sum of its members.
    Additive { per_model: Vec<f64> },
    /// Tiered word budgets: c_S = output_rate * max(S) + input_rate * sum(S).
    Cascading { input_rate: f64, output_rate: f64, tiers: Vec<f64> },
}

impl CostSpec {
    /// Number of proxy models (k - 1).
    pub fn n_models(&self) -> usize {
        match self {
            CostSpec::Additive { per_model } => per_model.len(),
            CostSpec::Cascading { tiers, .. } => tiers.len(),
        }
    }

    /// Money cost of one query of the model subset given by 0-based model
    /// positions (position p is coordinate p + 2).
    pub fn subset_cost(&self, positions: &[usize]) -> f64 {
        match self {
            CostSpec::Additive { per_model } => {
                positions.iter().map(|&p| per_model[p]).sum()
            }
            CostSpec::Cascading { input_rate, output_rate, tiers } => {
                let max = positions.iter().map(|&p| tiers[p]).fold(0.0_f64, f64::max);
                let sum: f64 = positions.iter().map(|&p| tiers[p]).sum();
                output_rate * max + input_rate * sum
            }
        }
    }

    /// Cost model over a family, with the money row plus the labeled-cap
    /// row: gold-labeled subsets cost one unit of the cap budget (N) and no
    /// money; pure model subsets cost money and no cap.
    pub fn build(
        &self,
        family: SubsetFamily,
        money_budget: f64,
        n_labeled: usize,
    ) -> Result<CostModel<f64>, ModelError> {
        let mut costs = Vec::with_capacity(family.len());
        for subset in family.subsets() {
            if subset.contains(0) {
                costs.push(vec![0.0, 1.0]);
            } else {
                let positions: Vec<usize> =
                    subset.indices().iter().map(|&i| i - 1).collect();
                costs.push(vec![self.subset_cost(&positions), 0.0]);
            }
        }
        CostModel::new(family, costs, vec![money_budget, n_labeled as f64])
    }
}

/// Full subset plus the powerset of model subsets, the default MultiPPI
/// family for k - 1 proxies.
pub fn full_model_family(k: usize) -> SubsetFamily {
    assert!(k >= 2);
    let mut subsets: Vec<Vec<usize>> = vec![(1..=k).collect()];
    let models: Vec<usize> = (2..=k).collect();
    for mask in 1usize..(1 << models.len()) {
        subsets.push(
            (0..models.len()).filter(|i| mask & (1 << i) != 0).map(|i| models[i]).collect(),
        );
    }
    SubsetFamily::from_one_based(k, &subsets).expect("well-formed family")
}

/// Additive cost model over the full model family.
pub fn cost_additive(
    per_model: &[f64],
    money_budget: f64,
    n_labeled: usize,
) -> Result<CostModel<f64>, ModelError> {
    let spec = CostSpec::Additive { per_model: per_model.to_vec() };
    spec.build(full_model_family(per_model.len() + 1), money_budget, n_labeled)
}

/// Cascading cost model over the full model family.
pub fn cost_cascading(
    input_rate: f64,
    output_rate: f64,
    tiers: &[f64],
    money_budget: f64,
    n_labeled: usize,
) -> Result<CostModel<f64>, ModelError> {
    let spec = CostSpec::Cascading { input_rate, output_rate, tiers: tiers.to_vec() };
    spec.build(full_model_family(tiers.len() + 1), money_budget, n_labeled)
}

/// Materializes batches for an allocation: gold-labeled subsets reuse the
/// leading burn-in rows, everything else is drawn fresh.
pub fn draw_trial(
    source: &PopulationSource,
    family: &SubsetFamily,
    alloc: &Allocation,
    labeled: &Mat<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<SampleBatch<f64>>, SimError> {
    let mut batches = Vec::new();
    for (i, subset) in family.subsets().iter().enumerate() {
        let n = alloc.count(i) as usize;
        if n == 0 {
            continue;
        }
        let rows: Vec<Vec<f64>> = if subset.contains(0) {
            (0..n.min(labeled.nrows()))
                .map(|r| subset.indices().iter().map(|&c| labeled[(r, c)]).collect())
                .collect()
        } else {
            source
                .sample_rows(rng, n)?
                .into_iter()
                .map(|row| subset.indices().iter().map(|&c| row[c]).collect())
                .collect()
        };
        batches.push(SampleBatch::new(subset.clone(), rows)?);
    }
    Ok(batches)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Method {
    Classical,
    MultiPpi,
    /// PPI++ with the single proxy at the given 1-based coordinate (>= 2).
    PpiPpScalar { model: usize },
    PpiPpVector,
    Cascade,
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Classical => "classical".into(),
            Method::MultiPpi => "multippi".into(),
            Method::PpiPpScalar { model } => format!("ppi_scalar_{model}"),
            Method::PpiPpVector => "ppi_vector".into(),
            Method::Cascade => "cascade".into(),
        }
    }

    pub fn parse(s: &str) -> Result<Method, SimError> {
        match s {
            "classical" => Ok(Method::Classical),
            "multippi" => Ok(Method::MultiPpi),
            "ppi_vector" => Ok(Method::PpiPpVector),
            "cascade" => Ok(Method::Cascade),
            other => {
                if let Some(m) = other.strip_prefix("ppi_scalar_") {
                    let model: usize = m
                        .parse()
                        .map_err(|_| SimError::BadConfig(format!("bad method {other:?}")))?;
                    if model < 2 {
                        return Err(SimError::BadConfig(
                            "ppi_scalar model index must be >= 2".into(),
                        ));
                    }
                    Ok(Method::PpiPpScalar { model })
                } else {
                    Err(SimError::BadConfig(format!("unknown method {other:?}")))
                }
            }
        }
    }
}

/// One aggregated output line of the grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub budget: f64,
    pub coverage: f64,
    pub ci_width_fraction: f64,
    pub mse_fraction: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, Copy)]
struct TrialOutcome {
    covered: bool,
    width_sq: f64,
    sq_err: f64,
}

fn outcome(report: &EstimateReport<f64>, theta_star: f64) -> TrialOutcome {
    let (lo, hi) = report.interval;
    TrialOutcome {
        covered: lo <= theta_star && theta_star <= hi,
        width_sq: (hi - lo) * (hi - lo),
        sq_err: (report.point - theta_star) * (report.point - theta_star),
    }
}

fn trial_rng(seed: u64, trial: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ trial.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream);
    rng
}

struct SourceDraws<'a> {
    source: &'a PopulationSource,
    rng: &'a mut ChaCha8Rng,
}

impl BatchSource<f64> for SourceDraws<'_> {
    fn draw(&mut self, subset: &Subset, n: usize) -> Vec<Vec<f64>> {
        self.source
            .sample_rows(self.rng, n)
            .expect("default sources draw with replacement")
            .into_iter()
            .map(|row| subset.indices().iter().map(|&c| row[c]).collect())
            .collect()
    }
}

fn run_method(
    method: &Method,
    source: &PopulationSource,
    labeled: &Mat<f64>,
    cost: &CostSpec,
    budget: f64,
    n_labeled: usize,
    alpha: f64,
    rng: &mut ChaCha8Rng,
) -> Result<EstimateReport<f64>, SimError> {
    let k = source.k();
    match method {
        Method::Classical => {
            let x1: Vec<f64> = (0..labeled.nrows()).map(|r| labeled[(r, 0)]).collect();
            Ok(classical_estimate(&x1, alpha)?)
        }
        Method::MultiPpi => {
            let cm = cost.build(full_model_family(k), budget, n_labeled)?;
            let config = PipelineConfig {
                covariance_method: CovarianceMethod::LedoitWolf,
                cost_model: cm,
                target: TargetSpec::first_coordinate(k),
                alpha,
            };
            let mut draws = SourceDraws { source, rng };
            Ok(pipeline_run(labeled, &config, &mut draws)?)
        }
        Method::PpiPpScalar { model } => {
            if *model > k {
                return Err(SimError::BadConfig(format!("model {model} out of range")));
            }
            let pairs: Vec<(f64, f64)> = (0..labeled.nrows())
                .map(|r| (labeled[(r, 0)], labeled[(r, model - 1)]))
                .collect();
            let c = cost.subset_cost(&[model - 2]);
            let n_unlab = (budget / c).floor() as usize;
            if n_unlab < 2 {
                let x1: Vec<f64> = pairs.iter().map(|&(a, _)| a).collect();
                return Ok(classical_estimate(&x1, alpha)?);
            }
            let unlabeled: Vec<f64> = source
                .sample_rows(rng, n_unlab)?
                .into_iter()
                .map(|row| row[model - 1])
                .collect();
            Ok(ppi_pp_scalar(&pairs, &unlabeled, alpha)?)
        }
        Method::PpiPpVector => {
            let positions: Vec<usize> = (0..k - 1).collect();
            let c = cost.subset_cost(&positions);
            let n_unlab = (budget / c).floor() as usize;
            if n_unlab < 2 {
                let x1: Vec<f64> = (0..labeled.nrows()).map(|r| labeled[(r, 0)]).collect();
                return Ok(classical_estimate(&x1, alpha)?);
            }
            let rows = source.sample_rows(rng, n_unlab)?;
            let unlabeled = Mat::from_fn(n_unlab, k - 1, |r, c| rows[r][c + 1]);
            Ok(ppi_pp_vector(labeled, &unlabeled, alpha)?)
        }
        Method::Cascade => {
            if k != 3 {
                return Err(SimError::BadConfig("cascade needs k = 3".into()));
            }
            let family =
                SubsetFamily::from_one_based(3, &[vec![1, 2], vec![2, 3], vec![3]])?;
            let cm = cost.build(family, budget, n_labeled)?;
            let config = PipelineConfig {
                covariance_method: CovarianceMethod::LedoitWolf,
                cost_model: cm,
                target: TargetSpec::first_coordinate(3),
                alpha,
            };
            let mut draws = SourceDraws { source, rng };
            Ok(pipeline_run(labeled, &config, &mut draws)?)
        }
    }
}

/// Run the full (method x budget) grid: per cell, coverage of theta*, mean
/// squared CI width and MSE as fractions of the classical baseline's.
/// Trials are paired: every method sees the same labeled draw, and each
/// (trial, method, budget) cell owns a deterministic RNG stream.
#[allow(clippy::too_many_arguments)]
pub fn run_grid(
    source: &PopulationSource,
    methods: &[Method],
    budgets: &[f64],
    trials: usize,
    n_labeled: usize,
    alpha: f64,
    seed: u64,
    cost: &CostSpec,
) -> Result<Vec<MetricsRow>, SimError> {
    if trials == 0 {
        return Err(SimError::BadConfig("trials must be >= 1".into()));
    }
    if n_labeled < 2 {
        return Err(SimError::BadConfig("n_labeled must be >= 2".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SimError::BadConfig("alpha must lie in (0,1)".into()));
    }
    let k = source.k();
    if cost.n_models() != k - 1 {
        return Err(SimError::BadConfig("cost spec does not match source dimension".into()));
    }
    let target = TargetSpec::first_coordinate(k);
    let theta_star = source.theta_star(&target);

    // per trial: outcomes[budget][method] plus the classical reference
    type TrialGrid = (Vec<Vec<TrialOutcome>>, TrialOutcome);
    let per_trial: Result<Vec<TrialGrid>, SimError> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut labeled_rng = trial_rng(seed, trial, u64::MAX);
            let rows = source.sample_rows(&mut labeled_rng, n_labeled)?;
            let labeled = Mat::from_fn(n_labeled, k, |r, c| rows[r][c]);
            let x1: Vec<f64> = (0..n_labeled).map(|r| labeled[(r, 0)]).collect();
            let classical = outcome(&classical_estimate(&x1, alpha)?, theta_star);
            let mut grid = Vec::with_capacity(budgets.len());
            for (bi, &budget) in budgets.iter().enumerate() {
                let mut row = Vec::with_capacity(methods.len());
                for (mi, method) in methods.iter().enumerate() {
                    let stream = ((mi as u64) << 32) | bi as u64;
                    let mut rng = trial_rng(seed, trial, stream);
                    let report = run_method(
                        method, source, &labeled, cost, budget, n_labeled, alpha, &mut rng,
                    )?;
                    row.push(outcome(&report, theta_star));
                }
                grid.push(row);
            }
            Ok((grid, classical))
        })
        .collect();
    let per_trial = per_trial?;

    let t = trials as f64;
    let mut class_width_sq = 0.0;
    let mut class_mse = 0.0;
    for (_, c) in &per_trial {
        class_width_sq += c.width_sq;
        class_mse += c.sq_err;
    }
    class_width_sq /= t;
    class_mse /= t;

    let mut out = Vec::new();
    for (mi, method) in methods.iter().enumerate() {
        for (bi, &budget) in budgets.iter().enumerate() {
            let mut covered = 0usize;
            let mut width_sq = 0.0;
            let mut mse = 0.0;
            for (grid, _) in &per_trial {
                let o = grid[bi][mi];
                covered += o.covered as usize;
                width_sq += o.width_sq;
                mse += o.sq_err;
            }
            width_sq /= t;
            mse /= t;
            out.push(MetricsRow {
                method: method.label(),
                budget,
                coverage: covered as f64 / t,
                ci_width_fraction: width_sq / class_width_sq,
                mse_fraction: mse / class_mse,
                trials,
            });
        }
    }
    Ok(out)
}

/// Bias of the reused-weight scalar PPI++ as the unlabeled pool grows:
/// n labeled pairs are held fixed while N_unlab sweeps the grid.
pub fn coverage_decay_demo(
    n_labeled: usize,
    n_unlab_grid: &[usize],
    trials: usize,
    rho: f64,
    seed: u64,
) -> Result<Vec<(usize, f64)>, SimError> {
    // The bias of the reused-lambda estimator is N/(n+N) * Cov(X_1, betahat),
    // betahat the sample regression slope of Y onto the proxy X. That
    // covariance is exactly zero for jointly Gaussian pairs, so the label
    // carries a quadratic component in X (scaled with rho, keeping Var Y = 1
    // and Cov(X, Y) = rho). rho = 0 leaves Y independent of X.
    let skew = 0.4 * rho;
    let resid_var = 1.0 - rho * rho - skew * skew;
    if resid_var < 0.0 {
        return Err(SimError::BadConfig(format!("rho {rho} out of range for the decay demo")));
    }
    let noise = resid_var.sqrt();
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let mut curve = Vec::with_capacity(n_unlab_grid.len());
    for (gi, &n_unlab) in n_unlab_grid.iter().enumerate() {
        let sum: Result<f64, SimError> = (0..trials as u64)
            .into_par_iter()
            .map(|trial| {
                // reuse the labeled panel across grid points so curve
                // differences are not drowned by labeled-sample noise
                let mut lab_rng = trial_rng(seed, trial, u64::MAX);
                let pairs: Vec<(f64, f64)> = (0..n_labeled)
                    .map(|_| {
                        let x: f64 = lab_rng.sample(StandardNormal);
                        let eps: f64 = lab_rng.sample(StandardNormal);
                        let y = rho * x + skew * (x * x - 1.0) * inv_sqrt2 + noise * eps;
                        (y, x)
                    })
                    .collect();
                let mut unlab_rng = trial_rng(seed.wrapping_add(1), trial, gi as u64);
                let unlabeled: Vec<f64> =
                    (0..n_unlab).map(|_| unlab_rng.sample(StandardNormal)).collect();
                let report = ppi_pp_scalar(&pairs, &unlabeled, 0.05)?;
                Ok(report.point)
            })
            .sum();
        curve.push((n_unlab, sum? / trials as f64));
    }
    Ok(curve)
}

// ---------------------------------------------------------------------------
// External configuration and output
// ---------------------------------------------------------------------------

fn default_replace() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceSpec {
    Gaussian { mean: Vec<f64>, sigma: Vec<Vec<f64>> },
    Empirical {
        rows: Vec<Vec<f64>>,
        #[serde(default = "default_replace")]
        replace: bool,
    },
}

impl SourceSpec {
    pub fn build(&self) -> Result<PopulationSource, SimError> {
        match self {
            SourceSpec::Gaussian { mean, sigma } => {
                let mat = Mat::from_rows(sigma);
                PopulationSource::gaussian(mean.clone(), CovarianceMatrix::new(mat)?)
            }
            SourceSpec::Empirical { rows, replace } => {
                PopulationSource::empirical(Mat::from_rows(rows), *replace)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: SourceSpec,
    pub methods: Vec<String>,
    pub budgets: Vec<f64>,
    pub trials: usize,
    pub n_labeled: usize,
    pub alpha: f64,
    pub seed: u64,
    pub cost_model: CostSpec,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<MetricsRow>, SimError> {
    let source = config.source.build()?;
    let methods: Result<Vec<Method>, SimError> =
        config.methods.iter().map(|s| Method::parse(s)).collect();
    run_grid(
        &source,
        &methods?,
        &config.budgets,
        config.trials,
        config.n_labeled,
        config.alpha,
        config.seed,
        &config.cost_model,
    )
}

/// `method,budget,coverage,ci_width_fraction,mse_fraction,trials`
pub fn write_metrics_csv<W: io::Write>(rows: &[MetricsRow], out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "budget", "coverage", "ci_width_fraction", "mse_fraction", "trials"])
        .map_err(io::Error::other)?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.budget.to_string(),
            r.coverage.to_string(),
            r.ci_width_fraction.to_string(),
            r.mse_fraction.to_string(),
            r.trials.to_string(),
        ])
        .map_err(io::Error::other)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sigma3(r12: f64, r13: f64, r23: f64) -> CovarianceMatrix<f64> {
        CovarianceMatrix::new(Mat::from_rows(&[
            vec![1.0, r12, r13],
            vec![r12, 1.0, r23],
            vec![r13, r23, 1.0],
        ]))
        .unwrap()
    }

    #[test]
    fn additive_costs_match_price_table() {
        let cm = cost_additive(&[1.25, 0.30], 100.0, 250).unwrap();
        let pos = |label: &str| {
            cm.family().position(&Subset::parse_label(label, 3).unwrap()).unwrap()
        };
        assert_eq!(cm.cost(pos("2"))[0], 1.25);
        assert_eq!(cm.cost(pos("3"))[0], 0.30);
        assert_eq!(cm.cost(pos("2,3"))[0], 1.55);
        // gold-labeled subset is priced only by the cap row
        assert_eq!(cm.cost(pos("1,2,3")), &[0.0, 1.0]);
        assert_eq!(cm.budgets(), &[100.0, 250.0]);
    }

    #[test]
    fn cascading_costs() {
        let spec =
            CostSpec::Cascading { input_rate: 0.0, output_rate: 1.0, tiers: vec![125.0, 500.0] };
        assert_eq!(spec.subset_cost(&[0]), 125.0);
        assert_eq!(spec.subset_cost(&[1]), 500.0);
        assert_eq!(spec.subset_cost(&[0, 1]), 500.0);
        // direct arithmetic: 250 + 375
        let spec2 =
            CostSpec::Cascading { input_rate: 1.0, output_rate: 1.0, tiers: vec![125.0, 250.0] };
        assert_eq!(spec2.subset_cost(&[0, 1]), 625.0);
    }

    #[test]
    fn empirical_single_distinct_row_repeats() {
        let rows = Mat::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]);
        let source = PopulationSource::empirical(rows, true).unwrap();
        let mut rng = trial_rng(1, 0, 0);
        for row in source.sample_rows(&mut rng, 20).unwrap() {
            assert_eq!(row, vec![1.0, 2.0]);
        }
    }

    #[test]
    fn without_replacement_exhausts() {
        let rows = Mat::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]);
        let source = PopulationSource::empirical(rows, false).unwrap();
        let mut rng = trial_rng(1, 0, 0);
        assert!(matches!(
            source.sample_rows(&mut rng, 4),
            Err(SimError::ExhaustedEmpiricalRows { requested: 4, available: 3 })
        ));
        let got = source.sample_rows(&mut rng, 3).unwrap();
        let mut vals: Vec<f64> = got.iter().map(|r| r[0]).collect();
        vals.sort_by(f64::total_cmp);
        assert_eq!(vals, vec![1.0, 2.0, 3.0]);
    }

    // MC oracle: marginal means of the gaussian source.
    #[test]
    fn gaussian_marginals_hit_mu() {
        let source =
            PopulationSource::gaussian(vec![3.0, -1.0, 0.5], sigma3(0.6, 0.2, 0.1)).unwrap();
        let mut rng = trial_rng(42, 0, 0);
        let rows = source.sample_rows(&mut rng, 100_000).unwrap();
        for (j, &mu) in [3.0, -1.0, 0.5].iter().enumerate() {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64;
            // sd of the mean is ~1/316
            assert!((mean - mu).abs() < 0.02, "coordinate {j}: {mean} vs {mu}");
        }
        let theta = source.theta_star(&TargetSpec::first_coordinate(3));
        assert_eq!(theta, 3.0);
    }

    #[test]
    fn empirical_theta_star_is_column_mean() {
        let rows = Mat::from_rows(&[vec![1.0, 5.0], vec![3.0, 7.0]]);
        let source = PopulationSource::empirical(rows, true).unwrap();
        assert_eq!(source.theta_star(&TargetSpec::first_coordinate(2)), 2.0);
    }

    #[test]
    fn classical_fractions_are_exactly_one() {
        let source =
            PopulationSource::gaussian(vec![0.0, 0.0, 0.0], sigma3(0.8, 0.4, 0.3)).unwrap();
        let cost = CostSpec::Additive { per_model: vec![1.25, 0.30] };
        let rows = run_grid(
            &source,
            &[Method::Classical],
            &[50.0, 100.0],
            40,
            30,
            0.05,
            9,
            &cost,
        )
        .unwrap();
        for row in &rows {
            assert_eq!(row.ci_width_fraction, 1.0);
            assert_eq!(row.mse_fraction, 1.0);
            assert_eq!(row.trials, 40);
        }
    }

    #[test]
    fn grid_is_reproducible() {
        let source =
            PopulationSource::gaussian(vec![0.0, 0.0, 0.0], sigma3(0.8, 0.4, 0.3)).unwrap();
        let cost = CostSpec::Additive { per_model: vec![1.25, 0.30] };
        let methods = [Method::MultiPpi, Method::PpiPpScalar { model: 3 }];
        let run = || {
            run_grid(&source, &methods, &[80.0], 25, 40, 0.05, 1234, &cost).unwrap()
        };
        let a = run();
        let b = run();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.coverage, y.coverage);
            assert_eq!(x.ci_width_fraction, y.ci_width_fraction);
            assert_eq!(x.mse_fraction, y.mse_fraction);
        }
    }

    // With an uncorrelated proxy there is no signal: MultiPPI's MSE matches
    // classical within MC error.
    #[test]
    fn no_signal_means_no_gain() {
        let sigma = CovarianceMatrix::new(Mat::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
        ]))
        .unwrap();
        let source = PopulationSource::gaussian(vec![0.0, 0.0], sigma).unwrap();
        let cost = CostSpec::Additive { per_model: vec![0.5] };
        let rows = run_grid(
            &source,
            &[Method::MultiPpi],
            &[200.0],
            400,
            60,
            0.05,
            7,
            &cost,
        )
        .unwrap();
        assert!(
            (rows[0].mse_fraction - 1.0).abs() < 0.25,
            "mse_fraction {}",
            rows[0].mse_fraction
        );
    }

    #[test]
    fn cascade_and_vector_run_end_to_end() {
        let source =
            PopulationSource::gaussian(vec![0.0, 0.0, 0.0], sigma3(0.85, 0.5, 0.55)).unwrap();
        let cost = CostSpec::Additive { per_model: vec![1.25, 0.30] };
        let rows = run_grid(
            &source,
            &[Method::Cascade, Method::PpiPpVector, Method::PpiPpScalar { model: 2 }],
            &[120.0],
            20,
            50,
            0.05,
            3,
            &cost,
        )
        .unwrap();
        assert_eq!(rows.len(), 3);
        for row in &rows {
            assert!(row.mse_fraction.is_finite() && row.mse_fraction > 0.0);
            assert!((0.0..=1.0).contains(&row.coverage));
        }
    }

    #[test]
    fn decay_demo_runs_and_independent_proxy_is_unbiased() {
        let curve = coverage_decay_demo(20, &[10, 100], 400, 0.0, 5).unwrap();
        for &(_, bias) in &curve {
            assert!(bias.abs() < 0.05, "bias {bias}");
        }
    }

    #[test]
    fn config_round_trip_and_csv_shape() {
        let config = ExperimentConfig {
            source: SourceSpec::Gaussian {
                mean: vec![0.0, 0.0],
                sigma: vec![vec![1.0, 0.5], vec![0.5, 1.0]],
            },
            methods: vec!["classical".into(), "ppi_scalar_2".into()],
            budgets: vec![30.0],
            trials: 10,
            n_labeled: 20,
            alpha: 0.05,
            seed: 11,
            cost_model: CostSpec::Additive { per_model: vec![0.4] },
        };
        let text = serde_json::to_string(&config).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        let rows = run_experiment(&back).unwrap();
        let mut buf = Vec::new();
        write_metrics_csv(&rows, &mut buf).unwrap();
        let csv_text = String::from_utf8(buf).unwrap();
        let mut lines = csv_text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "method,budget,coverage,ci_width_fraction,mse_fraction,trials"
        );
        assert_eq!(lines.count(), rows.len());
    }
}
