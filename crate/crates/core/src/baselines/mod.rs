//! Reference policies: the DP oracle, the myopic policy, and the harness
//! that runs any policy over a scenario set.

mod dp;
mod policy;

pub use dp::{
    dp_optimal, dp_tables, ramps_never_bind, snap_to_grid, truncate, DpConfig, DpResult, DpTables,
    SocGrid,
};
pub use policy::{
    evaluate_policy, myopic_policy, optimality_gap, run_episode, GreedyPolicy, MyopicPolicy,
    Policy, PolicyResult, ReplayPolicy, StepRecord,
};
