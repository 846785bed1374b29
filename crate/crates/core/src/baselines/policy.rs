use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::agent::Checkpoint;
use crate::env::{features, Env, Exogenous, PenaltyKind, SystemState};
use crate::error::{Error, Result};
use crate::powerflow::OpfSolution;
use crate::scenario::Scenario;

/// Anything that maps a state to an action index.
pub trait Policy {
    fn name(&self) -> &str;
    fn decide(&mut self, env: &Env, state: &SystemState, next: &Exogenous) -> usize;
}

/// Greedy action of a trained checkpoint.
pub struct GreedyPolicy<'a> {
    pub checkpoint: &'a Checkpoint,
}

impl Policy for GreedyPolicy<'_> {
    fn name(&self) -> &str {
        "dqn"
    }

    fn decide(&mut self, _env: &Env, state: &SystemState, _next: &Exogenous) -> usize {
        let f = features(state, self.checkpoint.config.window);
        self.checkpoint.act(&f).expect("feature width checked at load")
    }
}

/// Action with the best immediate reward; ties go to the lowest index.
pub fn myopic_policy(env: &Env, state: &SystemState, next: &Exogenous) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for a in 0..env.n_actions() {
        let r = env.step_index(state, a, next).reward;
        if r > best.1 {
            best = (a, r);
        }
    }
    best.0
}

pub struct MyopicPolicy;

impl Policy for MyopicPolicy {
    fn name(&self) -> &str {
        "myopic"
    }

    fn decide(&mut self, env: &Env, state: &SystemState, next: &Exogenous) -> usize {
        myopic_policy(env, state, next)
    }
}

/// Plays back a fixed action sequence, indexed by the state's step.
pub struct ReplayPolicy {
    pub actions: Vec<usize>,
}

impl Policy for ReplayPolicy {
    fn name(&self) -> &str {
        "replay"
    }

    fn decide(&mut self, _env: &Env, state: &SystemState, _next: &Exogenous) -> usize {
        self.actions[state.t]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub action: usize,
    pub reward: f64,
    pub penalty: PenaltyKind,
    pub p_bat: f64,
    /// SOC at the start of the step.
    pub soc: f64,
    pub opf: Option<OpfSolution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyResult {
    /// Operating cost, `-sum(rewards)`.
    pub total_cost: f64,
    pub steps: Vec<StepRecord>,
    pub final_soc: f64,
    /// Wall-clock time per decision (ms). Not deterministic; excluded from
    /// reproducible outputs unless requested.
    pub decision_ms: Vec<f64>,
}

impl PolicyResult {
    pub fn actions(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.action).collect()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn penalized_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.penalty != PenaltyKind::None).count()
    }

    pub fn avg_decision_ms(&self) -> f64 {
        if self.decision_ms.is_empty() {
            return 0.0;
        }
        self.decision_ms.iter().sum::<f64>() / self.decision_ms.len() as f64
    }
}

/// One episode of `policy` through the environment.
pub fn run_episode(env: &Env, scenario: &Scenario, policy: &mut dyn Policy, initial_soc: f64) -> PolicyResult {
    let mut state = env.initial_state(&scenario.exogenous(0), initial_soc);
    let mut steps = Vec::with_capacity(scenario.horizon());
    let mut decision_ms = Vec::with_capacity(scenario.horizon());
    let mut total_reward = 0.0;
    for t in 0..scenario.horizon() {
        let next = scenario.exogenous(t + 1);
        let start = Instant::now();
        let action = policy.decide(env, &state, &next);
        decision_ms.push(start.elapsed().as_secs_f64() * 1e3);
        let out = env.step_index(&state, action, &next);
        total_reward += out.reward;
        steps.push(StepRecord {
            action,
            reward: out.reward,
            penalty: out.penalty,
            p_bat: out.p_bat,
            soc: state.soc,
            opf: out.secondary,
        });
        state = out.next_state;
    }
    PolicyResult {
        total_cost: -total_reward,
        steps,
        final_soc: state.soc,
        decision_ms,
    }
}

/// Run `policy` on every scenario in order. Policies carry no learning
/// state, so repeated evaluations agree.
pub fn evaluate_policy(
    policy: &mut dyn Policy,
    scenarios: &[Scenario],
    env: &Env,
    initial_soc: f64,
) -> Vec<PolicyResult> {
    scenarios
        .iter()
        .map(|s| run_episode(env, s, policy, initial_soc))
        .collect()
}

/// `(cost - dp_cost) / dp_cost`.
pub fn optimality_gap(cost: f64, dp_cost: f64) -> Result<f64> {
    if !(dp_cost > 0.0) {
        return Err(Error::Domain(format!("reference cost must be > 0, got {dp_cost}")));
    }
    Ok((cost - dp_cost) / dp_cost)
}
