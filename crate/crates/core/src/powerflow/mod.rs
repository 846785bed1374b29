//! AC power flow and the single-period optimal power flow that fixes the
//! continuous dispatch once commitment and battery power are chosen.

pub mod ac;
pub mod ipm;
mod limits;
mod newton;
mod opf;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::Result;
use crate::grid::{build_admittance, Network};

pub use limits::{check_limits, LimitKind, Violation};
pub use newton::{solve_power_flow, PowerFlowCase, PowerFlowSolution};
pub use opf::{dispatch_cost, solve_opf, OpfConfig, OpfProblem, OpfSolution};
pub(crate) use opf::problem_key;
pub use limits::check_profile;

/// A validated network together with its admittance matrix. Immutable once
/// built; share it freely between workers.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    pub network: Network,
    pub y: DMatrix<Complex64>,
    branch_y: Vec<Complex64>,
}

impl NetworkModel {
    pub fn new(network: Network) -> Result<Self> {
        network.validate()?;
        let y = build_admittance(&network)?;
        let branch_y = network
            .branches
            .iter()
            .map(|b| network.branch_admittance_pu(b))
            .collect();
        Ok(NetworkModel {
            network,
            y,
            branch_y,
        })
    }

    pub fn n_bus(&self) -> usize {
        self.network.n_bus()
    }

    pub fn s_base(&self) -> f64 {
        self.network.s_base_kva
    }

    /// From-end active power of every branch, in kW.
    pub fn branch_flows_kw(&self, v: &[f64], delta: &[f64]) -> Vec<f64> {
        self.network
            .branches
            .iter()
            .zip(&self.branch_y)
            .map(|(br, &yb)| {
                let (f, t) = (br.from_bus, br.to_bus);
                ac::branch_flow(yb, delta[f], delta[t], v[f], v[t]).0 * self.s_base()
            })
            .collect()
    }

    /// To-end active power of every branch (flow leaving the to-bus), in kW.
    pub fn branch_flows_to_kw(&self, v: &[f64], delta: &[f64]) -> Vec<f64> {
        self.network
            .branches
            .iter()
            .zip(&self.branch_y)
            .map(|(br, &yb)| {
                let (f, t) = (br.from_bus, br.to_bus);
                ac::branch_flow(yb, delta[t], delta[f], v[t], v[f]).0 * self.s_base()
            })
            .collect()
    }

    /// Total series losses in kW for a voltage profile.
    pub fn losses_kw(&self, v: &[f64], delta: &[f64]) -> f64 {
        self.branch_flows_kw(v, delta)
            .iter()
            .zip(self.branch_flows_to_kw(v, delta))
            .map(|(a, b)| a + b)
            .sum()
    }

    /// Complex injections (per unit) implied by a voltage profile.
    pub fn injections_pu(&self, v: &[f64], delta: &[f64]) -> Vec<Complex64> {
        ac::injections(&self.y, &ac::phasors(v, delta))
    }

    pub(crate) fn branch_y(&self) -> &[Complex64] {
        &self.branch_y
    }
}
