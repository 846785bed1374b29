use nalgebra::{DMatrix, DVector};

use super::{ac, NetworkModel};
use crate::grid::BusKind;

/// Net injections (generation minus load) per bus. The slack entries are
/// ignored; slack injections are solved for.
#[derive(Debug, Clone)]
pub struct PowerFlowCase<'a> {
    pub model: &'a NetworkModel,
    pub p_inj_kw: Vec<f64>,
    pub q_inj_kvar: Vec<f64>,
    /// Voltage magnitude held at the slack and PV buses.
    pub v_set: Vec<f64>,
    /// Initial `(v, delta)`; flat start when absent.
    pub warm_start: Option<(Vec<f64>, Vec<f64>)>,
}

impl<'a> PowerFlowCase<'a> {
    pub fn new(model: &'a NetworkModel, p_inj_kw: Vec<f64>, q_inj_kvar: Vec<f64>) -> Self {
        let n = model.n_bus();
        PowerFlowCase {
            model,
            p_inj_kw,
            q_inj_kvar,
            v_set: vec![1.0; n],
            warm_start: None,
        }
    }

    pub fn slack_bus(&self) -> usize {
        self.model.network.slack_bus()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    pub v: Vec<f64>,
    pub delta: Vec<f64>,
    pub slack_p: f64,
    pub slack_q: f64,
    /// From-end active flow per branch (kW).
    pub branch_flows: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Largest active/reactive mismatch at the last iterate (per unit).
    pub max_residual: f64,
}

/// Newton-Raphson on the polar mismatch equations. Non-convergence is
/// reported through `converged = false`.
pub fn solve_power_flow(case: &PowerFlowCase<'_>, tol: f64, max_iter: usize) -> PowerFlowSolution {
    solve_inner(case, tol, max_iter, false)
}

/// Variant that treats every non-slack bus as PQ, for solves where all
/// reactive setpoints are already fixed.
pub(crate) fn solve_power_flow_pq(
    case: &PowerFlowCase<'_>,
    tol: f64,
    max_iter: usize,
) -> PowerFlowSolution {
    solve_inner(case, tol, max_iter, true)
}

fn solve_inner(case: &PowerFlowCase<'_>, tol: f64, max_iter: usize, all_pq: bool) -> PowerFlowSolution {
    let model = case.model;
    let net = &model.network;
    let n = net.n_bus();
    let sb = model.s_base();
    let slack = case.slack_bus();

    let (mut v, mut delta) = match &case.warm_start {
        Some((v, d)) => (v.clone(), d.clone()),
        None => (vec![1.0; n], vec![0.0; n]),
    };
    let is_pq = |i: usize| all_pq || net.buses[i].kind == BusKind::Pq;
    for i in 0..n {
        if !is_pq(i) || i == slack {
            v[i] = case.v_set[i];
        }
    }
    delta[slack] = 0.0;

    // Unknown angles: every non-slack bus. Unknown magnitudes: PQ buses.
    let ang: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let mag: Vec<usize> = (0..n)
        .filter(|&i| i != slack && is_pq(i))
        .collect();
    let p_spec: Vec<f64> = case.p_inj_kw.iter().map(|p| p / sb).collect();
    let q_spec: Vec<f64> = case.q_inj_kvar.iter().map(|q| q / sb).collect();

    let mismatch = |v: &[f64], d: &[f64]| -> Vec<f64> {
        let s = model.injections_pu(v, d);
        ang.iter()
            .map(|&i| s[i].re - p_spec[i])
            .chain(mag.iter().map(|&i| s[i].im - q_spec[i]))
            .collect()
    };
    let inf_norm = |f: &[f64]| f.iter().fold(0.0f64, |m, x| m.max(x.abs()));

    let mut f = mismatch(&v, &delta);
    let mut residual = inf_norm(&f);
    let mut iterations = 0;
    let mut converged = residual <= tol;
    while !converged && iterations < max_iter {
        iterations += 1;
        let vc = ac::phasors(&v, &delta);
        let (dva, dvm) = ac::ds_dv(&model.y, &vc);
        let dim = ang.len() + mag.len();
        let mut jac = DMatrix::zeros(dim, dim);
        for (r, &i) in ang.iter().enumerate() {
            for (c, &j) in ang.iter().enumerate() {
                jac[(r, c)] = dva[(i, j)].re;
            }
            for (c, &j) in mag.iter().enumerate() {
                jac[(r, ang.len() + c)] = dvm[(i, j)].re;
            }
        }
        for (r, &i) in mag.iter().enumerate() {
            for (c, &j) in ang.iter().enumerate() {
                jac[(ang.len() + r, c)] = dva[(i, j)].im;
            }
            for (c, &j) in mag.iter().enumerate() {
                jac[(ang.len() + r, ang.len() + c)] = dvm[(i, j)].im;
            }
        }
        let rhs = -DVector::from_vec(f.clone());
        let Some(dx) = jac.lu().solve(&rhs) else {
            break;
        };
        for (r, &i) in ang.iter().enumerate() {
            delta[i] += dx[r];
        }
        for (r, &i) in mag.iter().enumerate() {
            v[i] += dx[ang.len() + r];
        }
        f = mismatch(&v, &delta);
        residual = inf_norm(&f);
        if !residual.is_finite() || v.iter().any(|&m| !(m > 0.0)) {
            break;
        }
        converged = residual <= tol;
    }

    let s = model.injections_pu(&v, &delta);
    PowerFlowSolution {
        branch_flows: model.branch_flows_kw(&v, &delta),
        slack_p: s[slack].re * sb,
        slack_q: s[slack].im * sb,
        v,
        delta,
        converged,
        iterations,
        max_residual: residual,
    }
}
