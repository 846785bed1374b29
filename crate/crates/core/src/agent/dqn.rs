use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::nn::{argmax, QNetwork};
use super::replay::{ReplayBuffer, Transition};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub gamma: f64,
    /// Adam learning rate.
    pub beta: f64,
    pub epsilon0: f64,
    pub delta_epsilon: f64,
    pub epsilon_min: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub memory_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub hidden: Vec<usize>,
    /// Forecast window length included in the features.
    pub window: usize,
    /// Select the bootstrap action with the evaluate network and score it
    /// with the target network, instead of a plain max over the target.
    pub double_q: bool,
    /// Rewards are multiplied by this before they enter the replay buffer.
    pub reward_scale: f64,
    /// Battery SOC at the start of every episode.
    pub initial_soc: f64,
    /// Evaluate the greedy policy on the test set every this many epochs.
    pub test_every: usize,
    /// On the same cadence, score the online and target networks on the
    /// validation set and return the best weights seen instead of the last.
    pub keep_best: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.99,
            beta: 0.01,
            epsilon0: 1.0,
            delta_epsilon: 5e-5,
            epsilon_min: 0.01,
            tau: 0.001,
            batch_size: 32,
            memory_size: 10_000,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            hidden: vec![50, 100, 100, 50],
            window: 0,
            double_q: false,
            reward_scale: 1.0,
            initial_soc: 0.5,
            test_every: 5,
            keep_best: true,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must be in [0, 1], got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must be in (0, 1], got {}", self.tau));
        }
        if !(self.beta > 0.0) {
            return bad(format!("beta must be > 0, got {}", self.beta));
        }
        if !(0.0 <= self.epsilon_min
            && self.epsilon_min <= self.epsilon0
            && self.epsilon0 <= 1.0)
        {
            return bad("need 0 <= epsilon_min <= epsilon0 <= 1".into());
        }
        if !(self.delta_epsilon >= 0.0) {
            return bad("delta_epsilon must be >= 0".into());
        }
        if self.batch_size == 0 || self.memory_size < self.batch_size {
            return bad("need 0 < batch_size <= memory_size".into());
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return bad("hidden widths must be positive".into());
        }
        if !(self.reward_scale > 0.0) {
            return bad("reward_scale must be > 0".into());
        }
        if self.test_every == 0 {
            return bad("test_every must be >= 1".into());
        }
        Ok(())
    }

    pub fn widths(&self, n_inputs: usize, n_actions: usize) -> Vec<usize> {
        let mut w = vec![n_inputs];
        w.extend(&self.hidden);
        w.push(n_actions);
        w
    }
}

/// Per-feature min-max scaling onto `[0, 1]`. Constant features map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Normalizer {
    pub fn identity(n: usize) -> Self {
        Normalizer {
            min: vec![0.0; n],
            max: vec![1.0; n],
        }
    }

    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>, n: usize) -> Self {
        let mut min = vec![f64::INFINITY; n];
        let mut max = vec![f64::NEG_INFINITY; n];
        for row in rows {
            for (k, &v) in row.iter().enumerate() {
                min[k] = min[k].min(v);
                max[k] = max[k].max(v);
            }
        }
        for k in 0..n {
            if !min[k].is_finite() || !max[k].is_finite() {
                min[k] = 0.0;
                max[k] = 1.0;
            }
        }
        Normalizer { min, max }
    }

    pub fn len(&self) -> usize {
        self.min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.min.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
            .collect()
    }
}

pub fn decay_epsilon(config: &AgentConfig, epsilon: f64) -> f64 {
    (epsilon - config.delta_epsilon).max(config.epsilon_min)
}

/// Epsilon-greedy choice. The uniform draw is always consumed so the random
/// stream does not depend on the network's outputs.
pub fn select_action(net: &QNetwork, features: &[f64], epsilon: f64, rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    if u < epsilon {
        rng.random_range(0..net.n_outputs())
    } else {
        greedy(net, features)
    }
}

pub fn greedy(net: &QNetwork, features: &[f64]) -> usize {
    argmax(&net.trace(features).acts.pop().expect("output"))
}

fn bootstrap(values: &[f64]) -> f64 {
    values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// `y = r` on terminal transitions, `r + gamma * max_a Q_target(s', a)`
/// otherwise.
pub fn compute_targets(target: &QNetwork, batch: &[&Transition], gamma: f64) -> Vec<f64> {
    batch
        .iter()
        .map(|t| {
            if t.terminal {
                t.reward
            } else {
                let q = target.trace(&t.next_state).acts.pop().expect("output");
                t.reward + gamma * bootstrap(&q)
            }
        })
        .collect()
}

/// Double-Q variant: the evaluate network picks the action, the target
/// network scores it.
pub fn compute_targets_double(
    net: &QNetwork,
    target: &QNetwork,
    batch: &[&Transition],
    gamma: f64,
) -> Vec<f64> {
    batch
        .iter()
        .map(|t| {
            if t.terminal {
                t.reward
            } else {
                let a = greedy(net, &t.next_state);
                let q = target.trace(&t.next_state).acts.pop().expect("output");
                t.reward + gamma * q[a]
            }
        })
        .collect()
}

/// `target <- (1 - tau) target + tau net`.
pub fn soft_update(target: &mut QNetwork, net: &QNetwork, tau: f64) -> Result<()> {
    if !target.same_shape(net) {
        return Err(Error::Architecture(format!(
            "target {:?} vs evaluate {:?}",
            target.widths(),
            net.widths()
        )));
    }
    for (t, &p) in target.params_mut().zip(net.params()) {
        *t = (1.0 - tau) * *t + tau * p;
    }
    Ok(())
}

/// Mean squared TD error over a batch and its gradient.
pub fn loss_and_grad(net: &QNetwork, batch: &[&Transition], targets: &[f64]) -> (f64, QNetwork) {
    let mut grad = QNetwork::zeros(&net.widths()).expect("valid widths");
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut dout = vec![0.0; net.n_outputs()];
    for (t, &y) in batch.iter().zip(targets) {
        let trace = net.trace(&t.state);
        let q = trace.acts.last().expect("output")[t.action];
        let diff = q - y;
        loss += diff * diff;
        dout.fill(0.0);
        dout[t.action] = 2.0 * diff / n;
        net.backward(&trace, &dout, &mut grad);
    }
    (loss / n, grad)
}

/// Evaluate network, target network and optimiser state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub net: QNetwork,
    pub target: QNetwork,
    pub adam: Adam,
    pub config: AgentConfig,
}

impl Agent {
    pub fn new(net: QNetwork, config: AgentConfig) -> Self {
        let adam = Adam::new(
            net.n_params(),
            config.beta,
            config.adam_beta1,
            config.adam_beta2,
            config.adam_eps,
        );
        Agent {
            target: net.clone(),
            net,
            adam,
            config,
        }
    }

    /// Sample a minibatch, take one Adam step on the TD loss, then move the
    /// target towards the evaluate network. Returns the pre-update loss.
    pub fn train_step(&mut self, buffer: &ReplayBuffer, rng: &mut impl Rng) -> f64 {
        let batch = buffer.sample(self.config.batch_size, rng);
        let targets = if self.config.double_q {
            compute_targets_double(&self.net, &self.target, &batch, self.config.gamma)
        } else {
            compute_targets(&self.target, &batch, self.config.gamma)
        };
        let (loss, grad) = loss_and_grad(&self.net, &batch, &targets);
        self.adam.step(&mut self.net, &grad);
        soft_update(&mut self.target, &self.net, self.config.tau).expect("same shape");
        loss
    }
}
