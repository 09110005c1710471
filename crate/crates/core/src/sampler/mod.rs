//! Gibbs samplers for the combined, separated and trees-only models, with
//! probit augmentation and random-effect stacking.

mod chain;
mod draws;
mod hyper;
mod model;
mod updates;

pub use chain::{calibrate_lambda, run_chain, Chain, ChainState, Checkpoint, CHECKPOINT_VERSION};
pub use draws::{MoveStats, PosteriorDraws, TraceEvent, TraceRecord};
pub use hyper::{Hyperparameters, Mode, ResponseKind};
pub use model::ModelData;
pub use updates::{
    augment_probit, beta_conditional, check_binary, stack_random_effects, update_beta,
    update_omega, update_sigma2, StackedDesign,
};
