//! The dispatch MDP: state bookkeeping, the fixed constraint-handling
//! procedure around each step, and the per-step reward.
//!
//! A step runs, in order: the minimum ON/OFF screen (penalty `m2`, commitment
//! rejected), the battery clamp, the OPF for the continuous setpoints
//! (penalty `m1` on divergence), and finally the cost-based reward.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::battery::{self, BatteryParams};
use crate::error::{Error, Result};
use crate::grid::GeneratorSpec;
use crate::powerflow::{solve_opf, NetworkModel, OpfConfig, OpfProblem, OpfSolution};

/// Number of forecast signals per window step: pv, wind, price, load.
pub const FORECAST_SIGNALS: usize = 4;

/// One step of the look-ahead window, `[p_pv, p_wt, price, d]`.
pub type ForecastPoint = [f64; FORECAST_SIGNALS];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    /// Commitment in force during the previous step.
    pub commitment: Vec<bool>,
    /// Generator output during the previous step (kW).
    pub prev_dispatch: Vec<f64>,
    pub on_duration: Vec<u32>,
    pub off_duration: Vec<u32>,
    pub p_pv: f64,
    pub p_wt: f64,
    pub d: f64,
    pub q: f64,
    pub price: f64,
    pub soc: f64,
    pub forecast: Vec<ForecastPoint>,
    pub t: usize,
}

/// Exogenous data for the step the environment moves into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exogenous {
    pub p_pv: f64,
    pub p_wt: f64,
    pub d: f64,
    pub q: f64,
    pub price: f64,
    pub forecast: Vec<ForecastPoint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PrimaryAction {
    pub commitment: Vec<bool>,
    pub battery_level: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKind {
    None,
    OpfDiverged,
    MinTimeViolation,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub fuel: f64,
    pub startup: f64,
    pub grid: f64,
    pub battery: f64,
}

impl RewardBreakdown {
    pub fn total(&self) -> f64 {
        self.fuel + self.startup + self.grid + self.battery
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub reward: f64,
    pub next_state: SystemState,
    pub secondary: Option<OpfSolution>,
    pub penalty: PenaltyKind,
    pub breakdown: RewardBreakdown,
    /// Battery power actually applied after clamping (kW).
    pub p_bat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PenaltyConfig {
    pub m1: f64,
    pub m2: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            m1: -200.0,
            m2: -200.0,
        }
    }
}

impl PenaltyConfig {
    /// Both penalties must sit strictly below `-worst_cost`, the most
    /// expensive feasible step.
    pub fn validate(&self, worst_cost: f64) -> Result<()> {
        for (name, m) in [("m1", self.m1), ("m2", self.m2)] {
            if !(m < 0.0) {
                return Err(Error::Config(format!("{name} must be negative, got {m}")));
            }
            if !(m < -worst_cost) {
                return Err(Error::Config(format!(
                    "{name} = {m} does not dominate the worst feasible step cost {worst_cost:.3}"
                )));
            }
        }
        Ok(())
    }
}

/// Evenly spaced battery powers from the charge rating to the discharge
/// rating. `levels` must be odd so zero is on the ladder.
pub fn battery_ladder(params: &BatteryParams, levels: usize) -> Result<Vec<f64>> {
    if levels < 3 || levels % 2 == 0 {
        return Err(Error::Config(format!(
            "battery ladder needs an odd level count >= 3, got {levels}"
        )));
    }
    let half = (levels / 2) as f64;
    let mid = levels / 2;
    Ok((0..levels)
        .map(|k| {
            if k < mid {
                params.p_c_min * (mid - k) as f64 / half
            } else {
                params.p_d_max * (k - mid) as f64 / half
            }
        })
        .collect())
}

pub fn action_space_size(n_dgs: usize, levels: usize) -> usize {
    (1usize << n_dgs) * levels
}

/// First generator whose minimum ON/OFF time the commitment would violate.
pub fn check_min_on_off(
    generators: &[GeneratorSpec],
    state: &SystemState,
    commitment: &[bool],
) -> std::result::Result<(), usize> {
    for (g, spec) in generators.iter().enumerate() {
        let prev = f64::from(u8::from(state.commitment[g]));
        let next = f64::from(u8::from(commitment[g]));
        let on = (prev - next) * (f64::from(state.on_duration[g]) - f64::from(spec.t_on_min));
        let off = (next - prev) * (f64::from(state.off_duration[g]) - f64::from(spec.t_off_min));
        if on < 0.0 || off < 0.0 {
            return Err(g);
        }
    }
    Ok(())
}

/// Clamp a requested battery power into the SOC-dependent window, then pull
/// it back so the step lands exactly on a SOC bound rather than past it.
pub fn clamp_battery(params: &BatteryParams, soc: f64, p_requested: f64, dt: f64) -> (f64, f64) {
    let (pd, pc) = match battery::power_bounds(params, soc) {
        Ok(b) => b,
        Err(_) => return (0.0, soc),
    };
    let p = p_requested.clamp(pc.min(0.0), pd.max(0.0));
    let next = battery::soc_step(params, soc, p, dt);
    let bound = if next < params.soc_min {
        params.soc_min
    } else if next > params.soc_max {
        params.soc_max
    } else {
        return (p, next);
    };
    if (p > 0.0 && soc <= params.soc_min) || (p < 0.0 && soc >= params.soc_max) {
        return (0.0, soc);
    }
    // soc_step is decreasing in p; bracket the root between 0 and p.
    let (mut lo, mut hi) = if p > 0.0 { (0.0, p) } else { (p, 0.0) };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if battery::soc_step(params, soc, mid, dt) > bound {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Take the endpoint on the admissible side of the bound.
    let p_eff = if p > 0.0 { lo } else { hi };
    (p_eff, bound)
}

/// Fuel cost of one generator over a step; zero when off.
pub fn fuel_cost(spec: &GeneratorSpec, on: bool, p: f64, dt: f64) -> f64 {
    if !on {
        return 0.0;
    }
    spec.fuel_a * (p * dt).powi(2) + spec.fuel_b * p * dt + spec.fuel_c
}

/// Most expensive feasible single step: every unit at full output after a
/// start-up, maximum import at the highest price, and a full-rate discharge.
pub fn worst_step_cost(model: &NetworkModel, max_price: f64, dt: f64) -> f64 {
    let net = &model.network;
    let fuel: f64 = net
        .generators
        .iter()
        .map(|g| fuel_cost(g, true, g.p_max, dt) + g.startup_cost)
        .sum();
    let b = &net.battery;
    let charge_loss = b.loss_raw(b.soc_min, b.p_c_min);
    let discharge_loss = b.loss_raw(b.soc_min, b.p_d_max);
    let bat = b.c_bat * (b.p_d_max + discharge_loss).max(charge_loss) * dt;
    fuel + max_price.max(0.0) * net.grid_exchange_limit * dt + bat
}

type CacheKey = Vec<u64>;

/// The environment for one network. Cheap to clone; clones share the OPF
/// cache, which is keyed on the resolved problem so hits are bit-identical
/// to fresh solves.
#[derive(Debug, Clone)]
pub struct Env {
    pub model: Arc<NetworkModel>,
    pub ladder: Vec<f64>,
    pub penalties: PenaltyConfig,
    pub opf: OpfConfig,
    pub dt: f64,
    cache: Option<Arc<Mutex<HashMap<CacheKey, OpfSolution>>>>,
}

const CACHE_LIMIT: usize = 250_000;

impl Env {
    pub fn new(
        model: Arc<NetworkModel>,
        levels: usize,
        penalties: PenaltyConfig,
        opf: OpfConfig,
        dt: f64,
    ) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Config(format!("dt must be > 0, got {dt}")));
        }
        let ladder = battery_ladder(&model.network.battery, levels)?;
        Ok(Env {
            model,
            ladder,
            penalties,
            opf,
            dt,
            cache: Some(Arc::new(Mutex::new(HashMap::new()))),
        })
    }

    /// Disable OPF memoisation (every step re-solves).
    pub fn without_cache(mut self) -> Self {
        self.cache = None;
        self
    }

    pub fn n_dgs(&self) -> usize {
        self.model.network.generators.len()
    }

    pub fn levels(&self) -> usize {
        self.ladder.len()
    }

    pub fn n_actions(&self) -> usize {
        action_space_size(self.n_dgs(), self.levels())
    }

    pub fn generators(&self) -> &[GeneratorSpec] {
        &self.model.network.generators
    }

    pub fn battery(&self) -> &BatteryParams {
        &self.model.network.battery
    }

    /// `index = commitment_code * levels + level`, with generator `g`
    /// contributing bit `g` of the commitment code.
    pub fn decode(&self, index: usize) -> PrimaryAction {
        let levels = self.levels();
        let code = index / levels;
        PrimaryAction {
            commitment: (0..self.n_dgs()).map(|g| code >> g & 1 == 1).collect(),
            battery_level: index % levels,
        }
    }

    pub fn encode(&self, action: &PrimaryAction) -> usize {
        let code: usize = action
            .commitment
            .iter()
            .enumerate()
            .map(|(g, &on)| usize::from(on) << g)
            .sum();
        code * self.levels() + action.battery_level
    }

    /// Starting state: every unit off and free to start, no prior output.
    pub fn initial_state(&self, first: &Exogenous, soc: f64) -> SystemState {
        let n = self.n_dgs();
        SystemState {
            commitment: vec![false; n],
            prev_dispatch: vec![0.0; n],
            on_duration: vec![0; n],
            off_duration: self
                .generators()
                .iter()
                .map(|g| g.t_off_min.max(1))
                .collect(),
            p_pv: first.p_pv,
            p_wt: first.p_wt,
            d: first.d,
            q: first.q,
            price: first.price,
            soc,
            forecast: first.forecast.clone(),
            t: 0,
        }
    }

    fn solve(&self, problem: &OpfProblem) -> OpfSolution {
        let Some(cache) = &self.cache else {
            return solve_opf(&self.model, problem, &self.opf);
        };
        let key = crate::powerflow::problem_key(&self.model, problem);
        if let Some(hit) = cache.lock().expect("opf cache poisoned").get(&key) {
            return hit.clone();
        }
        let sol = solve_opf(&self.model, problem, &self.opf);
        let mut guard = cache.lock().expect("opf cache poisoned");
        if guard.len() >= CACHE_LIMIT {
            guard.clear();
        }
        guard.insert(key, sol.clone());
        sol
    }

    pub fn step_index(&self, state: &SystemState, index: usize, next: &Exogenous) -> StepOutcome {
        self.step(state, &self.decode(index), next)
    }

    pub fn step(&self, state: &SystemState, action: &PrimaryAction, next: &Exogenous) -> StepOutcome {
        assert_eq!(action.commitment.len(), self.n_dgs(), "commitment length");
        assert!(action.battery_level < self.levels(), "battery level out of range");
        let gens = self.generators();
        let bat = self.battery();

        let min_time_ok = check_min_on_off(gens, state, &action.commitment).is_ok();
        let commitment = if min_time_ok {
            action.commitment.clone()
        } else {
            state.commitment.clone()
        };
        let (p_bat, soc_next) =
            clamp_battery(bat, state.soc, self.ladder[action.battery_level], self.dt);

        let mut next_state = SystemState {
            commitment: commitment.clone(),
            prev_dispatch: state.prev_dispatch.clone(),
            on_duration: state.on_duration.clone(),
            off_duration: state.off_duration.clone(),
            p_pv: next.p_pv,
            p_wt: next.p_wt,
            d: next.d,
            q: next.q,
            price: next.price,
            soc: soc_next,
            forecast: next.forecast.clone(),
            t: state.t + 1,
        };
        for g in 0..gens.len() {
            if commitment[g] {
                next_state.on_duration[g] = if state.commitment[g] {
                    state.on_duration[g] + 1
                } else {
                    1
                };
                next_state.off_duration[g] = 0;
            } else {
                next_state.off_duration[g] = if state.commitment[g] {
                    1
                } else {
                    state.off_duration[g] + 1
                };
                next_state.on_duration[g] = 0;
            }
        }

        let penalized = |kind, reward, next_state| StepOutcome {
            reward,
            next_state,
            secondary: None,
            penalty: kind,
            breakdown: RewardBreakdown::default(),
            p_bat,
        };
        if !min_time_ok {
            return penalized(PenaltyKind::MinTimeViolation, self.penalties.m2, next_state);
        }

        let problem = OpfProblem {
            commitment: commitment.clone(),
            prev_commitment: state.commitment.clone(),
            prev_dispatch: state.prev_dispatch.clone(),
            p_bat,
            p_pv: state.p_pv,
            p_wt: state.p_wt,
            d: state.d,
            q: state.q,
            price: state.price,
            dt: self.dt,
        };
        let sol = self.solve(&problem);
        if !sol.converged {
            // No dispatch to carry forward: units staying on keep their last
            // output, units starting up are assumed at minimum output.
            for (g, spec) in gens.iter().enumerate() {
                next_state.prev_dispatch[g] = match (state.commitment[g], commitment[g]) {
                    (_, false) => 0.0,
                    (true, true) => state.prev_dispatch[g].clamp(spec.p_min, spec.p_max),
                    (false, true) => spec.p_min,
                };
            }
            return penalized(PenaltyKind::OpfDiverged, self.penalties.m1, next_state);
        }

        let breakdown = RewardBreakdown {
            fuel: gens
                .iter()
                .enumerate()
                .map(|(g, spec)| fuel_cost(spec, commitment[g], sol.p_g[g], self.dt))
                .sum(),
            startup: gens
                .iter()
                .enumerate()
                .filter(|(g, _)| commitment[*g] && !state.commitment[*g])
                .map(|(_, spec)| spec.startup_cost)
                .sum(),
            grid: state.price * sol.p_grid * self.dt,
            battery: battery::degradation_cost(bat, state.soc, p_bat, self.dt),
        };
        next_state.prev_dispatch = sol.p_g.clone();
        StepOutcome {
            reward: -breakdown.total(),
            next_state,
            secondary: Some(sol),
            penalty: PenaltyKind::None,
            breakdown,
            p_bat,
        }
    }
}

/// Agent-visible features: previous commitment, current renewables, load,
/// price and SOC, then `window` forecast steps of `[pv, wind, price, load]`.
pub fn features(state: &SystemState, window: usize) -> Vec<f64> {
    let mut f: Vec<f64> = state
        .commitment
        .iter()
        .map(|&on| f64::from(u8::from(on)))
        .collect();
    f.extend([state.p_pv, state.p_wt, state.d, state.price, state.soc]);
    for k in 0..window {
        let point = state
            .forecast
            .get(k)
            .or(state.forecast.last())
            .copied()
            .unwrap_or([state.p_pv, state.p_wt, state.price, state.d]);
        f.extend(point);
    }
    f
}

pub fn feature_len(n_dgs: usize, window: usize) -> usize {
    n_dgs + 5 + FORECAST_SIGNALS * window
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen(t_on: u32, t_off: u32) -> GeneratorSpec {
        GeneratorSpec {
            name: "g".into(),
            bus: 0,
            p_min: 10.0,
            p_max: 30.0,
            q_min: -10.0,
            q_max: 10.0,
            ramp_up: 20.0,
            ramp_down: 20.0,
            t_on_min: t_on,
            t_off_min: t_off,
            fuel_a: 0.00051,
            fuel_b: 0.0397,
            fuel_c: 0.4,
            startup_cost: 2.0,
        }
    }

    fn state_with(on: bool, on_d: u32, off_d: u32) -> SystemState {
        SystemState {
            commitment: vec![on],
            prev_dispatch: vec![if on { 20.0 } else { 0.0 }],
            on_duration: vec![on_d],
            off_duration: vec![off_d],
            p_pv: 0.0,
            p_wt: 0.0,
            d: 0.0,
            q: 0.0,
            price: 0.0,
            soc: 0.5,
            forecast: vec![],
            t: 0,
        }
    }

    #[test]
    fn ladder_levels() {
        let p = BatteryParams::default();
        assert_eq!(
            battery_ladder(&p, 9).unwrap(),
            vec![-12.0, -9.0, -6.0, -3.0, 0.0, 3.0, 6.0, 9.0, 12.0]
        );
        assert_eq!(battery_ladder(&p, 3).unwrap(), vec![-12.0, 0.0, 12.0]);
        let big = BatteryParams {
            p_d_max: 360.0,
            p_c_min: -360.0,
            ..p
        };
        let l = battery_ladder(&big, 9).unwrap();
        assert_eq!(l[0], -360.0);
        assert_eq!(l[1], -270.0);
        assert_eq!(l[8], 360.0);
        assert!(battery_ladder(&p, 4).is_err());
        assert!(battery_ladder(&p, 1).is_err());
    }

    #[test]
    fn action_space_sizes() {
        assert_eq!(action_space_size(2, 9), 36);
        assert_eq!(action_space_size(1, 3), 6);
        assert_eq!(action_space_size(4, 9), 144);
    }

    #[test]
    fn min_on_off_screen() {
        let g = [gen(2, 2)];
        assert_eq!(check_min_on_off(&g, &state_with(true, 1, 0), &[false]), Err(0));
        assert_eq!(check_min_on_off(&g, &state_with(true, 3, 0), &[false]), Ok(()));
        assert_eq!(check_min_on_off(&g, &state_with(true, 1, 0), &[true]), Ok(()));
        assert_eq!(check_min_on_off(&g, &state_with(false, 0, 1), &[false]), Ok(()));
        assert_eq!(check_min_on_off(&g, &state_with(false, 0, 1), &[true]), Err(0));
    }

    #[test]
    fn clamp_at_bounds() {
        let p = BatteryParams::default();
        assert_eq!(clamp_battery(&p, p.soc_max, -6.0, 1.0), (0.0, p.soc_max));
        assert_eq!(clamp_battery(&p, p.soc_min, 6.0, 1.0), (0.0, p.soc_min));
        let (pe, s) = clamp_battery(&p, 0.32, 12.0, 1.0);
        assert_eq!(s, 0.3);
        assert!(pe > 0.0 && pe < 12.0);
        assert!((battery::soc_step(&p, 0.32, pe, 1.0) - 0.3).abs() < 1e-9);
    }

    #[test]
    fn fuel_cost_values() {
        let mt = gen(1, 1);
        assert!((fuel_cost(&mt, true, 30.0, 1.0) - 2.050).abs() < 1e-12);
        assert_eq!(fuel_cost(&mt, false, 30.0, 1.0), 0.0);
    }

    #[test]
    fn feature_layout() {
        let mut s = state_with(true, 1, 0);
        s.forecast = vec![[1.0, 2.0, 3.0, 4.0]];
        let f = features(&s, 2);
        assert_eq!(f.len(), feature_len(1, 2));
        assert_eq!(&f[6..], &[1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0, 4.0]);
    }
}
