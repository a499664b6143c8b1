//! MultiPPI: budget-optimal sampling allocations and unbiased linear
//! estimators for a linear functional of a mean vector, observed through
//! heterogeneously priced coordinate subsets.

pub mod allocator;
pub mod covariance;
pub mod estimators;
pub mod linalg;
pub mod model;
pub mod num;
pub mod simulator;

pub use allocator::{
    allocation_variance, information_matrix, low_budget_winner, multiple_correlation,
    optimal_weights, restricted_family, round_allocation, solve_multi_budget,
    solve_single_budget, AllocationPlan, AllocatorError, SocpSolution,
};
pub use covariance::{
    empirical_covariance, ledoit_wolf, CovarianceError, Divisor, LedoitWolfResult,
};
pub use estimators::{
    cascade_estimate, classical_estimate, confidence_interval, multippi_point, normal_quantile,
    pipeline_run, ppi_estimate, ppi_pp_lambda, ppi_pp_scalar, ppi_pp_vector,
    ppi_pp_vector_lambda, BatchSource, CovarianceMethod, EstimateReport, EstimatorError,
    PipelineConfig,
};
pub use simulator::{
    cost_additive, cost_cascading, coverage_decay_demo, draw_trial, full_model_family,
    run_experiment, run_grid, write_metrics_csv, CostSpec, ExperimentConfig, Method, MetricsRow,
    PopulationSource, SimError, SourceSpec,
};
pub use model::{
    Allocation, CostModel, CovarianceMatrix, FractionalAllocation, ModelError, SampleBatch,
    Subset, SubsetFamily, TargetSpec, WeightScheme,
};

/// Concrete double-precision aliases for the common case.
pub type CovarianceMatrixF64 = CovarianceMatrix<f64>;
pub type CostModelF64 = CostModel<f64>;
pub type TargetSpecF64 = TargetSpec<f64>;
pub type AllocationPlanF64 = AllocationPlan<f64>;
pub type EstimateReportF64 = EstimateReport<f64>;
