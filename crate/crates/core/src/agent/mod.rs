//! Deep Q-learning over the discrete primary actions.

mod adam;
mod checkpoint;
mod dqn;
mod nn;
mod replay;
mod train;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, MAGIC, VERSION};
pub use dqn::{
    compute_targets, compute_targets_double, decay_epsilon, greedy, loss_and_grad, select_action,
    soft_update, Agent, AgentConfig, Normalizer,
};
pub use nn::{argmax, Layer, QNetwork, Trace};
pub use replay::{ReplayBuffer, Transition};
pub use train::{expected_cost, fit_normalizer, initialize, train, EpochMetrics};
