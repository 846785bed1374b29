mod common;

use common::*;
use microdispatch::powerflow::*;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn max_mismatch(model: &NetworkModel, sol: &PowerFlowSolution, p: &[f64], q: &[f64]) -> f64 {
    let s = model.injections_pu(&sol.v, &sol.delta);
    let slack = model.network.slack_bus();
    let sb = model.s_base();
    let mut worst: f64 = 0.0;
    for i in 0..model.n_bus() {
        if i == slack {
            continue;
        }
        worst = worst.max((s[i].re - p[i] / sb).abs());
        if model.network.buses[i].kind == microdispatch::grid::BusKind::Pq {
            worst = worst.max((s[i].im - q[i] / sb).abs());
        }
    }
    worst
}

#[test]
fn zero_injection_is_flat() {
    let model = mg10_model();
    let n = model.n_bus();
    let sol = solve_power_flow(&PowerFlowCase::new(&model, vec![0.0; n], vec![0.0; n]), 1e-10, 20);
    assert!(sol.converged);
    for i in 0..n {
        assert!((sol.v[i] - 1.0).abs() < 1e-12);
        assert!(sol.delta[i].abs() < 1e-12);
    }
    assert!(sol.slack_p.abs() < 1e-9);
}

/// Fixed-point solution of the two-bus case, written from the complex
/// power equation at bus 1: V2 = V1 + conj(S2)/(y conj(V2)), S2 the injection.
fn two_bus_oracle(p_kw: f64, q_kvar: f64) -> Complex64 {
    let net = two_bus();
    let br = &net.branches[0];
    let z_base = net.v_base_kv * net.v_base_kv * 1e3 / net.s_base_kva;
    let z = Complex64::new(br.r_ohm_per_km, br.x_ohm_per_km) * br.length_km / z_base;
    let y = z.inv();
    let s = Complex64::new(p_kw, q_kvar) / net.s_base_kva; // injection at bus 1
    let v1 = Complex64::new(1.0, 0.0);
    let mut v2 = v1;
    for _ in 0..500 {
        v2 = v1 + s.conj() / (y * v2.conj());
    }
    v2
}

#[test]
fn voltage_controlled_buses_hold_their_setpoint() {
    let model = mg10_model();
    let n = model.n_bus();
    let (p, q) = (vec![3.0; n], vec![1.0; n]);
    let sol = solve_power_flow(&PowerFlowCase::new(&model, p.clone(), q.clone()), 1e-10, 30);
    assert!(sol.converged);
    assert!(max_mismatch(&model, &sol, &p, &q) <= 1e-6);
    for (i, b) in model.network.buses.iter().enumerate() {
        if b.kind != microdispatch::grid::BusKind::Pq {
            assert_eq!(sol.v[i], 1.0);
        }
    }
}

#[test]
fn two_bus_matches_oracle() {
    let model = NetworkModel::new(two_bus()).unwrap();
    for (p, q) in [(-20.0, -5.0), (-45.0, -20.0), (10.0, 3.0), (-60.0, 10.0)] {
        let sol = solve_power_flow(&PowerFlowCase::new(&model, vec![0.0, p], vec![0.0, q]), 1e-12, 30);
        assert!(sol.converged);
        let v2 = two_bus_oracle(p, q);
        assert!((sol.v[1] - v2.norm()).abs() < 1e-8, "v {} vs {}", sol.v[1], v2.norm());
        assert!((sol.delta[1] - v2.arg()).abs() < 1e-8);
    }
}

#[test]
fn converged_solutions_satisfy_the_balance() {
    // Voltage-controlled buses on these resistive feeders need very large
    // reactive injections; the random sweep uses the all-PQ copy.
    let model = NetworkModel::new(all_pq(&mg10())).unwrap();
    let n = model.n_bus();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(-8.0..6.0)).collect();
        let q: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..3.0)).collect();
        let sol = solve_power_flow(&PowerFlowCase::new(&model, p.clone(), q.clone()), 1e-10, 30);
        assert!(sol.converged, "{} {}", sol.iterations, sol.max_residual);
        assert!(max_mismatch(&model, &sol, &p, &q) <= 1e-6);
        // Losses are positive when anything flows, and the slack covers them.
        let losses = model.losses_kw(&sol.v, &sol.delta);
        assert!(losses > 0.0);
        let net: f64 = p.iter().enumerate().filter(|(i, _)| *i != 0).map(|(_, v)| v).sum();
        let s = model.injections_pu(&sol.v, &sol.delta);
        let total: f64 = s.iter().map(|c| c.re).sum::<f64>() * model.s_base();
        assert!((total - losses).abs() < 1e-7, "losses {losses} vs {total}");
        assert!((sol.slack_p + net - losses).abs() < 1e-6);
    }
}

fn problem(commitment: [bool; 2], d: f64, pv: f64, wt: f64, p_bat: f64, price: f64) -> OpfProblem {
    OpfProblem {
        commitment: commitment.to_vec(),
        prev_commitment: commitment.to_vec(),
        prev_dispatch: vec![20.0, 20.0],
        p_bat,
        p_pv: pv,
        p_wt: wt,
        d,
        q: d * 0.4843,
        price,
        dt: 1.0,
    }
}

#[test]
fn opf_solutions_are_balanced_and_within_limits() {
    let model = mg10_model();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut converged = 0;
    for _ in 0..30 {
        let p = problem(
            [rng.random_bool(0.7), rng.random_bool(0.7)],
            rng.random_range(40.0..100.0),
            rng.random_range(0.0..27.0),
            rng.random_range(9.0..28.0),
            rng.random_range(-12.0..12.0),
            rng.random_range(0.03..0.2),
        );
        let sol = solve_opf(&model, &p, &OpfConfig::default());
        if !sol.converged {
            continue;
        }
        converged += 1;
        assert!(sol.max_mismatch <= 1e-6);
        assert!(check_limits(&sol, &model, 1e-6).is_empty(), "{:?}", check_limits(&sol, &model, 1e-6));
        assert!(sol.p_grid.abs() <= model.network.grid_exchange_limit + 1e-6);
        let cost = dispatch_cost(&model, &p, &sol.p_g, sol.p_grid);
        assert!((cost - sol.objective).abs() < 1e-9);
    }
    assert!(converged >= 15, "only {converged} converged");
}

#[test]
fn opf_is_deterministic() {
    let model = mg10_model();
    let p = problem([true, false], 70.0, 10.0, 20.0, 3.0, 0.1);
    let a = solve_opf(&model, &p, &OpfConfig::default());
    let b = solve_opf(&model, &p, &OpfConfig::default());
    assert_eq!(a, b);
}

#[test]
fn free_generation_runs_flat_out() {
    let mut net = mg10();
    for g in &mut net.generators {
        g.fuel_a = 0.0;
        g.fuel_b = 0.0;
        g.fuel_c = 0.0;
    }
    let model = NetworkModel::new(net).unwrap();
    let p = problem([true, true], 60.0, 10.0, 15.0, 0.0, 0.1);
    let sol = solve_opf(&model, &p, &OpfConfig::default());
    assert!(sol.converged);
    for &pg in &sol.p_g {
        assert!((pg - 30.0).abs() < 1e-4, "{pg}");
    }
    assert!(sol.objective < 0.0);
}

#[test]
fn infeasible_ramp_or_exchange_is_reported() {
    let model = mg10_model();
    // Everything off and a load well beyond the exchange limit.
    let p = problem([false, false], 100.0, 0.0, 0.0, 0.0, 0.1);
    assert!(!solve_opf(&model, &p, &OpfConfig::default()).converged);
}

/// Lowest-cost dispatch on a 0.5 kW mesh over both unit outputs, with the
/// power flow's slack as the grid exchange and zero unit reactive output.
fn grid_search_oracle(model: &NetworkModel, p: &OpfProblem) -> Option<f64> {
    let pq_net = all_pq(&model.network);
    let pq = NetworkModel::new(pq_net).unwrap();
    let mut best: Option<f64> = None;
    let steps: Vec<f64> = (0..=40).map(|k| 10.0 + 0.5 * k as f64).collect();
    let range = |on: bool| if on { steps.clone() } else { vec![0.0] };
    for &a in &range(p.commitment[0]) {
        for &b in &range(p.commitment[1]) {
            let (pi, qi) = injections(&pq, p, &[a, b], &[0.0, 0.0], 0.0);
            let sol = solve_power_flow(&PowerFlowCase::new(&pq, pi, qi), 1e-10, 30);
            if !sol.converged {
                continue;
            }
            let limits = check_profile(&pq, &sol.v, &sol.delta, 1e-9);
            if !limits.is_empty() || sol.slack_p.abs() > pq.network.grid_exchange_limit || sol.slack_q.abs() > pq.network.grid_exchange_limit {
                continue;
            }
            let c = dispatch_cost(&pq, p, &[a, b], sol.slack_p);
            if best.is_none_or(|x| c < x) {
                best = Some(c);
            }
        }
    }
    best
}

#[test]
fn opf_beats_grid_search() {
    let model = mg10_model();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut checked = 0;
    while checked < 10 {
        let p = problem(
            [true, rng.random_bool(0.6)],
            rng.random_range(45.0..95.0),
            rng.random_range(0.0..25.0),
            rng.random_range(9.0..28.0),
            [-6.0, 0.0, 6.0][rng.random_range(0..3)],
            rng.random_range(0.03..0.2),
        );
        let Some(oracle) = grid_search_oracle(&model, &p) else { continue };
        let sol = solve_opf(&model, &p, &OpfConfig::default());
        assert!(sol.converged);
        assert!(sol.objective <= oracle + 0.005 * oracle.abs(), "opf {} oracle {oracle}", sol.objective);
        checked += 1;
    }
}
