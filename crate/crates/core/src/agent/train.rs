use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::dqn::{decay_epsilon, select_action, Agent, AgentConfig, Normalizer};
use super::nn::QNetwork;
use super::replay::{ReplayBuffer, Transition};
use crate::baselines::{evaluate_policy, GreedyPolicy};
use crate::env::{feature_len, features, Env};
use crate::error::{Error, Result};
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub cumulative_reward: f64,
    /// Mean greedy-policy cost over the test scenarios, on test epochs only.
    pub test_expected_cost: Option<f64>,
}

/// Feature ranges implied by the training data: commitment bits in [0, 1],
/// exogenous signals over every realised and forecast value, SOC over its
/// admissible band.
pub fn fit_normalizer(env: &Env, scenarios: &[Scenario], window: usize) -> Normalizer {
    let n_dgs = env.n_dgs();
    let range = |vals: &mut dyn Iterator<Item = f64>| {
        vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let pv = range(&mut scenarios.iter().flat_map(|s| s.pv.iter().copied().chain(s.day_ahead.iter().map(|p| p[0]))));
    let wt = range(&mut scenarios.iter().flat_map(|s| s.wind.iter().copied().chain(s.day_ahead.iter().map(|p| p[1]))));
    let price = range(&mut scenarios.iter().flat_map(|s| s.price.iter().copied().chain(s.day_ahead.iter().map(|p| p[2]))));
    let load = range(&mut scenarios.iter().flat_map(|s| s.load.iter().copied().chain(s.day_ahead.iter().map(|p| p[3]))));
    let bat = env.battery();
    let mut min = vec![0.0; n_dgs];
    let mut max = vec![1.0; n_dgs];
    for (lo, hi) in [pv, wt, load, price, (bat.soc_min, bat.soc_max)] {
        min.push(lo);
        max.push(hi);
    }
    for _ in 0..window {
        for (lo, hi) in [pv, wt, price, load] {
            min.push(lo);
            max.push(hi);
        }
    }
    for k in 0..min.len() {
        if !min[k].is_finite() || !max[k].is_finite() {
            min[k] = 0.0;
            max[k] = 1.0;
        }
    }
    debug_assert_eq!(min.len(), feature_len(n_dgs, window));
    Normalizer { min, max }
}

/// Fresh agent and normaliser, before any training.
pub fn initialize(
    env: &Env,
    scenarios: &[Scenario],
    config: &AgentConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Agent, Normalizer)> {
    let n_in = feature_len(env.n_dgs(), config.window);
    let net = QNetwork::init(&config.widths(n_in, env.n_actions()), rng)?;
    Ok((Agent::new(net, config.clone()), fit_normalizer(env, scenarios, config.window)))
}

/// Mean greedy cost of a checkpoint over scenarios.
pub fn expected_cost(env: &Env, checkpoint: &Checkpoint, scenarios: &[Scenario]) -> f64 {
    let mut policy = GreedyPolicy { checkpoint };
    let results = evaluate_policy(&mut policy, scenarios, env, checkpoint.config.initial_soc);
    results.iter().map(|r| r.total_cost).sum::<f64>() / results.len().max(1) as f64
}

/// Experience-replay training: one scenario per epoch, epsilon-greedy
/// actions, a gradient step every environment step once the buffer holds a
/// full batch. Everything random flows from `seed`. With `keep_best` and a
/// non-empty validation set the returned weights are the best-scoring ones.
#[allow(clippy::too_many_arguments)]
pub fn train(
    env: &Env,
    train_set: &[Scenario],
    validation_set: &[Scenario],
    test_set: &[Scenario],
    config: &AgentConfig,
    epochs: usize,
    seed: u64,
    mut progress: impl FnMut(&EpochMetrics),
) -> Result<(Checkpoint, Vec<EpochMetrics>)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("no training scenarios".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut agent, norm) = initialize(env, train_set, config, &mut rng)?;
    let mut buffer = ReplayBuffer::new(config.memory_size);
    let mut epsilon = config.epsilon0;
    let mut step: u64 = 0;
    let mut metrics = Vec::with_capacity(epochs);

    let snapshot = |agent: &Agent, step, epsilon| Checkpoint {
        net: agent.net.clone(),
        target: agent.target.clone(),
        norm: norm.clone(),
        config: config.clone(),
        step,
        epsilon,
    };
    let selecting = config.keep_best && !validation_set.is_empty();
    let mut best: Option<(f64, Checkpoint)> = None;

    for epoch in 1..=epochs {
        let scenario = &train_set[rng.random_range(0..train_set.len())];
        let horizon = scenario.horizon();
        let mut state = env.initial_state(&scenario.exogenous(0), config.initial_soc);
        let mut feats = norm.apply(&features(&state, config.window));
        let mut cumulative = 0.0;
        for t in 0..horizon {
            let action = select_action(&agent.net, &feats, epsilon, &mut rng);
            let out = env.step_index(&state, action, &scenario.exogenous(t + 1));
            cumulative += out.reward;
            let next_feats = norm.apply(&features(&out.next_state, config.window));
            buffer.push(Transition {
                state: feats,
                action,
                reward: out.reward * config.reward_scale,
                next_state: next_feats.clone(),
                terminal: t + 1 == horizon,
            });
            if buffer.len() >= config.batch_size {
                agent.train_step(&buffer, &mut rng);
            }
            epsilon = decay_epsilon(config, epsilon);
            step += 1;
            state = out.next_state;
            feats = next_feats;
        }
        if !agent.net.is_finite() {
            return Err(Error::Domain(format!("network parameters diverged at epoch {epoch}")));
        }
        let on_cadence = epoch % config.test_every == 0;
        if selecting && on_cadence {
            let online = snapshot(&agent, step, epsilon);
            let mut target = online.clone();
            target.net = online.target.clone();
            for cand in [online, target] {
                let cost = expected_cost(env, &cand, validation_set);
                if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                    best = Some((cost, cand));
                }
            }
        }
        let test_expected_cost = (!test_set.is_empty() && on_cadence)
            .then(|| expected_cost(env, &snapshot(&agent, step, epsilon), test_set));
        let m = EpochMetrics {
            epoch,
            cumulative_reward: cumulative,
            test_expected_cost,
        };
        progress(&m);
        metrics.push(m);
    }
    let last = snapshot(&agent, step, epsilon);
    if selecting {
        let final_cost = expected_cost(env, &last, validation_set);
        if let Some((cost, ck)) = best {
            if cost < final_cost {
                return Ok((ck, metrics));
            }
        }
    }
    Ok((last, metrics))
}
