mod common;

use common::*;
use microdispatch::baselines::*;
use microdispatch::env::{Env, PenaltyKind, SystemState};
use microdispatch::scenario::Scenario;

const RES: f64 = 0.175;

/// Best total reward over every action sequence on the snapped SOC grid,
/// summed from the last step backwards.
fn brute_force(env: &Env, sc: &Scenario, state: &SystemState, t: usize, horizon: usize, actions: &[usize]) -> f64 {
    if t == horizon {
        return 0.0;
    }
    let mut best = f64::NEG_INFINITY;
    for &a in actions {
        let out = env.step_index(state, a, &sc.exogenous(t + 1));
        let next = snap_to_grid(env, &out.next_state, RES).unwrap();
        best = best.max(out.reward + brute_force(env, sc, &next, t + 1, horizon, actions));
    }
    best
}

#[test]
fn dp_matches_exhaustive_search() {
    let env = mg10_env();
    let day = mg10_scenario(0);
    // Idle, full charge with both off, MT on idle, both on at full discharge.
    let actions = vec![4, 0, 13, 35];
    for (start, soc) in [(0, 0.5), (7, 0.3), (16, 1.0)] {
        let sc = truncate(&shift(&day, start), 4);
        let cfg = DpConfig {
            soc_resolution: RES,
            allowed_actions: Some(actions.clone()),
            initial_soc: soc,
            ..DpConfig::default()
        };
        let dp = dp_optimal(&env, &sc, &cfg).unwrap();
        let s0 = snap_to_grid(&env, &env.initial_state(&sc.exogenous(0), soc), RES).unwrap();
        let oracle = -brute_force(&env, &sc, &s0, 0, 4, &actions);
        assert!((dp.grid_cost - oracle).abs() < 1e-9, "dp {} brute {oracle}", dp.grid_cost);
    }
}

fn shift(sc: &Scenario, start: usize) -> Scenario {
    let mut s = sc.clone();
    s.wind.drain(..start);
    s.pv.drain(..start);
    s.load.drain(..start);
    s.q.drain(..start);
    s.price.drain(..start);
    s.day_ahead.drain(..start);
    s
}

#[test]
fn one_step_dp_is_myopic() {
    let env = mg10_env();
    let day = mg10_scenario(0);
    for start in [0, 5, 12, 20] {
        let sc = shift(&day, start);
        let cfg = DpConfig { horizon: Some(1), ..DpConfig::default() };
        let dp = dp_optimal(&env, &sc, &cfg).unwrap();
        let s0 = env.initial_state(&sc.exogenous(0), cfg.initial_soc);
        assert_eq!(dp.result.steps[0].action, myopic_policy(&env, &s0, &sc.exogenous(1)));
    }
}

#[test]
fn replaying_dp_decisions_reproduces_its_cost() {
    let env = mg10_env();
    let sc = mg10_scenario(0);
    let dp = dp_optimal(&env, &sc, &DpConfig::default()).unwrap();
    assert_eq!(dp.result.penalized_steps(), 0);
    let mut replay = ReplayPolicy { actions: dp.result.actions() };
    let again = run_episode(&env, &sc, &mut replay, 0.5);
    assert_eq!(again.total_cost, dp.result.total_cost);
    assert_eq!(again.rewards(), dp.result.rewards());
    let myopic = run_episode(&env, &sc, &mut MyopicPolicy, 0.5);
    assert!(dp.result.total_cost < myopic.total_cost);
    assert!(myopic.steps.iter().all(|s| s.penalty == PenaltyKind::None));
}

#[test]
fn refining_the_soc_grid_converges() {
    let env = mg10_env();
    let sc = mg10_scenario(0);
    let cost = |r| {
        dp_optimal(&env, &sc, &DpConfig { soc_resolution: r, ..DpConfig::default() })
            .unwrap()
            .result
            .total_cost
    };
    let (c1, c2) = (cost(0.01), cost(0.005));
    assert!((c1 - c2).abs() <= 0.01 * c2.abs(), "{c1} vs {c2}");
}

#[test]
fn gap_definition() {
    assert!((optimality_gap(110.0, 100.0).unwrap() - 0.1).abs() < 1e-12);
    assert!(optimality_gap(1.0, 0.0).is_err());
}

#[test]
fn bad_dp_settings_are_rejected() {
    let env = mg10_env();
    let sc = mg10_scenario(0);
    let bad = |cfg: DpConfig| dp_optimal(&env, &sc, &cfg).is_err();
    assert!(bad(DpConfig { soc_resolution: 0.3, ..DpConfig::default() }));
    assert!(bad(DpConfig { horizon: Some(0), ..DpConfig::default() }));
    assert!(bad(DpConfig { horizon: Some(99), ..DpConfig::default() }));
    assert!(bad(DpConfig { allowed_actions: Some(vec![]), ..DpConfig::default() }));
    assert!(bad(DpConfig { allowed_actions: Some(vec![36]), ..DpConfig::default() }));
}
