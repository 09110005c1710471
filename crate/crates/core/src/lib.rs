//! Semi-parametric Bayesian additive regression trees: a linear mixed model
//! combined with a sum-of-trees term, fitted by Gibbs sampling with
//! Metropolis-Hastings tree updates.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod random;
pub mod sampler;
pub mod sim;
pub mod moves;
pub mod tree;

pub use error::{Error, ErrorCategory, Result};
pub use linalg::{Cholesky, Matrix};
pub use random::{RngPosition, RngStream};
pub use moves::{MoveKind, MoveProbabilities, MoveSettings};
pub use tree::{CovariateKind, Forest, SplitRule, Threshold, Tree, TreeCovariates};
pub use sampler::{run_chain, Hyperparameters, Mode, ModelData, PosteriorDraws, ResponseKind};
pub use data::{encode_design, load_table, parse_formula, scale_response, Design, Encoding, Formula, ModelSpec, ScalingRecord, Table, X2Selection};
pub use diagnostics::{detect_interactions, summarize, variable_inclusion, InteractionReport, PosteriorSummary};
