//! Fixtures shared by the benchmarks.

use cspbart_core::sim::{gen_tree_sim, model_data_for, Generator, SimConfig};
use cspbart_core::{Hyperparameters, Mode, ModelData, RngStream};

/// Tree-structured synthetic data prepared for `mode`.
pub fn tree_sim_data(n: usize, p: usize, mode: Mode, seed: u64) -> ModelData {
    let cfg = SimConfig { n, p, ..SimConfig::desk(Generator::TreeSim) };
    let sim = gen_tree_sim(&cfg, &mut RngStream::new(seed, 0)).expect("valid config");
    model_data_for(&sim, mode).expect("valid data")
}

/// A long-running configuration so that benchmarks never exhaust the chain.
pub fn bench_hyper(trees: usize) -> Hyperparameters {
    Hyperparameters { trees, iterations: usize::MAX / 2, burn_in: usize::MAX / 2 - 1, ..Hyperparameters::default() }
}
