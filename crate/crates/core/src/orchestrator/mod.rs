//! The federated round loop: client sampling, local-update dispatch,
//! aggregation, distillation, memory refresh, evaluation, and metrics.

mod config;
mod runner;

pub use config::{
    DataSource, DatasetSpec, ExperimentConfig, ExperimentMethod, PartitionSpec,
};
pub use runner::{
    evaluate, export_boundary_grid, run_experiment, run_experiment_observed, run_round,
    sample_clients, ExperimentOutcome, GridPoint, PreparedData, RoundMetrics, RoundRecord,
};
