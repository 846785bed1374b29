//! Real-time microgrid dispatch: an AC network model with an interior-point
//! OPF, a nonlinear battery, the dispatch MDP, a deep Q-learning agent, and
//! DP/myopic reference policies.

pub mod agent;
pub mod baselines;
pub mod battery;
pub mod commands;
pub mod config;
pub mod env;
pub mod error;
pub mod grid;
pub mod powerflow;
pub mod scenario;

pub use error::{Error, Result};
