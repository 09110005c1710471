//! Synthetic data generators and the replicate bias experiment.

mod experiment;
mod generators;

pub use experiment::{
    model_data_for, run_experiment, BiasRow, BiasSummary, ExperimentResult, ReplicateFailure,
};
pub use generators::{friedman_mean, gen_friedman, gen_tree_sim, tree_sim_mean, Generator, SimConfig, SimData, Truth};
