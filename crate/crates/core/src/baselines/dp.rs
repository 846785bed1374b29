//! Backward induction over (step, commitment, capped ON/OFF durations, SOC
//! grid cell). Stage rewards come from the environment itself, so the DP and
//! any replay of its decisions agree on every cost.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::policy::{run_episode, Policy, PolicyResult};
use crate::env::{Env, Exogenous, PenaltyKind, SystemState};
use crate::error::{Error, Result};
use crate::grid::GeneratorSpec;
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpConfig {
    /// SOC spacing of the value grid.
    pub soc_resolution: f64,
    /// Steps to optimise; the whole scenario when absent.
    pub horizon: Option<usize>,
    /// Restrict the search to these action indices (all when absent).
    pub allowed_actions: Option<Vec<usize>>,
    pub initial_soc: f64,
}

impl Default for DpConfig {
    fn default() -> Self {
        DpConfig {
            soc_resolution: 0.01,
            horizon: None,
            allowed_actions: None,
            initial_soc: 0.5,
        }
    }
}

/// Evenly spaced SOC points covering `[soc_min, soc_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
    pub n: usize,
}

impl SocGrid {
    pub fn new(soc_min: f64, soc_max: f64, resolution: f64) -> Result<Self> {
        if !(resolution > 0.0) {
            return Err(Error::Config(format!("soc resolution must be > 0, got {resolution}")));
        }
        let cells = (soc_max - soc_min) / resolution;
        let rounded = cells.round();
        if (cells - rounded).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "soc resolution {resolution} does not divide [{soc_min}, {soc_max}]"
            )));
        }
        if rounded < 4.0 {
            return Err(Error::Config(format!(
                "soc resolution {resolution} leaves only {rounded} cells; need >= 4"
            )));
        }
        Ok(SocGrid {
            min: soc_min,
            max: soc_max,
            step: resolution,
            n: rounded as usize + 1,
        })
    }

    pub fn value(&self, k: usize) -> f64 {
        if k + 1 == self.n {
            // Land exactly on the top bound despite rounding in the product.
            self.max
        } else {
            self.min + self.step * k as f64
        }
    }

    /// Nearest grid point.
    pub fn nearest(&self, soc: f64) -> usize {
        let k = ((soc - self.min) / self.step).round();
        k.clamp(0.0, (self.n - 1) as f64) as usize
    }
}

/// Indexing of the discrete state space.
#[derive(Debug, Clone)]
struct Space {
    caps: Vec<u32>,
    soc: SocGrid,
}

impl Space {
    fn new(gens: &[GeneratorSpec], soc: SocGrid) -> Self {
        Space {
            caps: gens.iter().map(|g| g.t_on_min.max(g.t_off_min).max(1)).collect(),
            soc,
        }
    }

    fn n_commit_states(&self) -> usize {
        // Each unit: on or off, with a duration in 1..=cap.
        self.caps.iter().map(|&c| 2 * c as usize).product()
    }

    fn len(&self) -> usize {
        self.n_commit_states() * self.soc.n
    }

    fn index(&self, state: &SystemState) -> usize {
        let mut idx = 0;
        for (g, &cap) in self.caps.iter().enumerate() {
            let dur = if state.commitment[g] {
                state.on_duration[g]
            } else {
                state.off_duration[g]
            };
            let d = dur.clamp(1, cap) as usize - 1;
            let local = usize::from(state.commitment[g]) * cap as usize + d;
            idx = idx * 2 * cap as usize + local;
        }
        idx * self.soc.n + self.soc.nearest(state.soc)
    }

    /// Representative state for index `idx` at step `t`.
    fn state(&self, idx: usize, t: usize, exo: &Exogenous, gens: &[GeneratorSpec]) -> SystemState {
        let k = idx % self.soc.n;
        let mut rest = idx / self.soc.n;
        let n = self.caps.len();
        let mut commitment = vec![false; n];
        let mut on = vec![0; n];
        let mut off = vec![0; n];
        for g in (0..n).rev() {
            let cap = self.caps[g] as usize;
            let local = rest % (2 * cap);
            rest /= 2 * cap;
            let dur = (local % cap + 1) as u32;
            if local >= cap {
                commitment[g] = true;
                on[g] = dur;
            } else {
                off[g] = dur;
            }
        }
        let prev_dispatch = gens
            .iter()
            .zip(&commitment)
            .map(|(s, &c)| if c { 0.5 * (s.p_min + s.p_max) } else { 0.0 })
            .collect();
        SystemState {
            commitment,
            prev_dispatch,
            on_duration: on,
            off_duration: off,
            p_pv: exo.p_pv,
            p_wt: exo.p_wt,
            d: exo.d,
            q: exo.q,
            price: exo.price,
            soc: self.soc.value(k),
            forecast: exo.forecast.clone(),
            t,
        }
    }

    /// The discrete state a continuous one lands in.
    fn snap(&self, state: &SystemState) -> SystemState {
        let mut s = state.clone();
        s.soc = self.soc.value(self.soc.nearest(state.soc));
        for (g, &cap) in self.caps.iter().enumerate() {
            s.on_duration[g] = s.on_duration[g].min(cap);
            s.off_duration[g] = s.off_duration[g].min(cap);
        }
        s
    }
}

/// True when no ramp window can ever be tighter than the output limits, in
/// which case the previous dispatch never affects a stage cost.
pub fn ramps_never_bind(gens: &[GeneratorSpec]) -> bool {
    gens.iter().all(|g| {
        let span = g.p_max - g.p_min;
        g.ramp_up >= span && g.ramp_down >= span
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpResult {
    /// Trajectory realised by following the DP decisions through the
    /// environment from the exact initial state.
    pub result: PolicyResult,
    /// Optimal cost on the grid model (SOC snapped after every step) from the
    /// snapped initial state.
    pub grid_cost: f64,
}

/// Value tables `values[t][state]` and the grid machinery behind them.
pub struct DpTables {
    space: Space,
    actions: Vec<usize>,
    values: Vec<Vec<f64>>,
}

impl DpTables {
    fn value(&self, t: usize, state: &SystemState) -> f64 {
        self.values[t][self.space.index(state)]
    }

    /// Best allowed action from `state` at step `state.t`: immediate reward
    /// plus the grid value of the landing cell. Ties go to the lowest index.
    pub fn best_action(&self, env: &Env, state: &SystemState, next: &Exogenous) -> (usize, f64) {
        let mut best = (self.actions[0], f64::NEG_INFINITY);
        for &a in &self.actions {
            let out = env.step_index(state, a, next);
            let q = out.reward + self.value(state.t + 1, &out.next_state);
            if q > best.1 {
                best = (a, q);
            }
        }
        best
    }
}

struct DpPolicy<'a> {
    tables: &'a DpTables,
}

impl Policy for DpPolicy<'_> {
    fn name(&self) -> &str {
        "dp"
    }

    fn decide(&mut self, env: &Env, state: &SystemState, next: &Exogenous) -> usize {
        self.tables.best_action(env, state, next).0
    }
}

pub fn dp_tables(env: &Env, scenario: &Scenario, config: &DpConfig) -> Result<DpTables> {
    let gens = env.generators();
    if !ramps_never_bind(gens) {
        log::warn!("ramp limits can bind; the DP uses a mid-range previous dispatch per cell");
    }
    let bat = env.battery();
    let grid = SocGrid::new(bat.soc_min, bat.soc_max, config.soc_resolution)?;
    let space = Space::new(gens, grid);
    let horizon = config.horizon.unwrap_or(scenario.horizon());
    if horizon == 0 || horizon > scenario.horizon() {
        return Err(Error::Config(format!(
            "dp horizon {horizon} outside 1..={}",
            scenario.horizon()
        )));
    }
    let actions = match &config.allowed_actions {
        Some(a) if a.is_empty() => return Err(Error::Config("allowed_actions is empty".into())),
        Some(a) => {
            if let Some(&bad) = a.iter().find(|&&x| x >= env.n_actions()) {
                return Err(Error::Config(format!("action {bad} out of range")));
            }
            let mut a = a.clone();
            a.sort_unstable();
            a.dedup();
            a
        }
        None => (0..env.n_actions()).collect(),
    };

    let mut values = vec![vec![0.0; space.len()]; horizon + 1];
    let mut tables = DpTables {
        space,
        actions,
        values: Vec::new(),
    };
    for t in (0..horizon).rev() {
        let exo = scenario.exogenous(t);
        let next = scenario.exogenous(t + 1);
        let later = &values[t + 1];
        let space = &tables.space;
        let actions = &tables.actions;
        let row: Vec<f64> = (0..space.len())
            .into_par_iter()
            .map(|idx| {
                let state = space.state(idx, t, &exo, gens);
                let mut best = f64::NEG_INFINITY;
                for &a in actions {
                    let out = env.step_index(&state, a, &next);
                    let q = out.reward + later[space.index(&out.next_state)];
                    if q > best {
                        best = q;
                    }
                }
                best
            })
            .collect();
        values[t] = row;
    }
    tables.values = values;
    Ok(tables)
}

/// Optimal (on the SOC grid) dispatch for a fully known scenario.
pub fn dp_optimal(env: &Env, scenario: &Scenario, config: &DpConfig) -> Result<DpResult> {
    let tables = dp_tables(env, scenario, config)?;
    let horizon = tables.values.len() - 1;
    let start = env.initial_state(&scenario.exogenous(0), config.initial_soc);
    let grid_cost = -tables.value(0, &tables.space.snap(&start));

    let truncated;
    let scenario = if horizon < scenario.horizon() {
        truncated = truncate(scenario, horizon);
        &truncated
    } else {
        scenario
    };
    let mut policy = DpPolicy { tables: &tables };
    let result = run_episode(env, scenario, &mut policy, config.initial_soc);
    if let Some(t) = result.steps.iter().position(|s| s.penalty != PenaltyKind::None) {
        return Err(Error::Infeasible(format!(
            "every action sequence incurs a penalty (first at step {t})"
        )));
    }
    Ok(DpResult { result, grid_cost })
}

/// The first `horizon` steps of a scenario.
pub fn truncate(scenario: &Scenario, horizon: usize) -> Scenario {
    let mut s = scenario.clone();
    s.wind.truncate(horizon);
    s.pv.truncate(horizon);
    s.load.truncate(horizon);
    s.q.truncate(horizon);
    s.price.truncate(horizon);
    s.day_ahead.truncate(horizon);
    s
}

/// Snap a state onto the DP grid (nearest SOC point, capped durations).
pub fn snap_to_grid(env: &Env, state: &SystemState, resolution: f64) -> Result<SystemState> {
    let bat = env.battery();
    let grid = SocGrid::new(bat.soc_min, bat.soc_max, resolution)?;
    Ok(Space::new(env.generators(), grid).snap(state))
}
