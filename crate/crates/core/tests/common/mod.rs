#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use microdispatch::env::{Env, PenaltyConfig};
use microdispatch::grid::{load_network, parse_network, BusKind, Network};
use microdispatch::powerflow::{NetworkModel, OpfConfig, OpfProblem, PowerFlowCase};
use microdispatch::scenario::{load_timeseries, Forecasts, Scenario};

pub fn repo(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

pub fn mg10() -> Network {
    load_network(repo("cases/mg10.case")).unwrap()
}

pub fn mg10_model() -> Arc<NetworkModel> {
    Arc::new(NetworkModel::new(mg10()).unwrap())
}

pub fn mg10_day() -> Forecasts {
    load_timeseries(repo("data/mg10_day.csv")).unwrap()
}

pub fn mg10_env() -> Env {
    Env::new(mg10_model(), 9, PenaltyConfig::default(), OpfConfig::default(), 1.0).unwrap()
}

pub fn mg10_scenario(window: usize) -> Scenario {
    Scenario::deterministic(&mg10_day(), 0.9, window)
}

pub const TWO_BUS: &str = "\
[grid]
s_base_kva = 100
v_base_kv = 0.4
tie_bus = 0
exchange_limit_kw = 50

[buses]
0 slack 0.9 1.1 -0.5 0.5 0 0
1 pq 0.9 1.1 -0.5 0.5 1 1

[branches]
0 1 0.64 0.1 0.05 500

[generators]

[sources]

[battery]
bus = 1
r_in = 0.005
k_b = 0.0005
v_r = 48
c_r = 60
soc_min = 0.3
soc_max = 1
p_d_max = 12
p_c_min = -12
eta_d_min = 0.95
eta_c_min = 0.95
c_bat = 0.059
q_max_kvar = 0
";

pub fn two_bus() -> Network {
    parse_network(TWO_BUS).unwrap()
}

/// Per-bus injections (kW, kVar) for a dispatch: generators, renewables at
/// availability, battery, minus the bus shares of the load.
pub fn injections(model: &NetworkModel, p: &OpfProblem, p_g: &[f64], q_g: &[f64], q_bat: f64) -> (Vec<f64>, Vec<f64>) {
    let net = &model.network;
    let n = net.n_bus();
    let mut pi = vec![0.0; n];
    let mut qi = vec![0.0; n];
    for (k, b) in net.buses.iter().enumerate() {
        pi[k] -= p.d * b.p_share;
        qi[k] -= p.q * b.q_share;
    }
    for (g, spec) in net.generators.iter().enumerate() {
        pi[spec.bus] += p_g[g];
        qi[spec.bus] += q_g[g];
    }
    let cap = |kind| net.installed_capacity(kind);
    for r in &net.renewables {
        let total = match r.kind {
            microdispatch::grid::RenewableKind::Wind => p.p_wt,
            microdispatch::grid::RenewableKind::Pv => p.p_pv,
        };
        pi[r.bus] += total * r.capacity_kw / cap(r.kind);
    }
    pi[net.battery_bus] += p.p_bat;
    qi[net.battery_bus] += q_bat;
    (pi, qi)
}

/// A copy of the network with every non-slack bus treated as PQ.
pub fn all_pq(net: &Network) -> Network {
    let mut n = net.clone();
    for b in &mut n.buses {
        if b.kind == BusKind::Pv {
            b.kind = BusKind::Pq;
        }
    }
    n
}

pub fn flat_case(model: &NetworkModel, p: Vec<f64>, q: Vec<f64>) -> PowerFlowCase<'_> {
    PowerFlowCase::new(model, p, q)
}
