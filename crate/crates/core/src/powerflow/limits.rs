use std::fmt;

use serde::{Deserialize, Serialize};

use super::{NetworkModel, OpfSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitKind {
    VoltageHigh,
    VoltageLow,
    AngleHigh,
    AngleLow,
    /// Either end of a branch carrying more than its rating.
    BranchFlow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: LimitKind,
    /// Bus index for voltage/angle limits, branch index for flows.
    pub index: usize,
    /// Amount by which the limit is exceeded (p.u., rad, or kW).
    pub magnitude: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (what, unit) = match self.kind {
            LimitKind::VoltageHigh => ("upper voltage limit at bus", "p.u."),
            LimitKind::VoltageLow => ("lower voltage limit at bus", "p.u."),
            LimitKind::AngleHigh => ("upper angle limit at bus", "rad"),
            LimitKind::AngleLow => ("lower angle limit at bus", "rad"),
            LimitKind::BranchFlow => ("flow limit on branch", "kW"),
        };
        write!(f, "{what} {} exceeded by {:.6} {unit}", self.index, self.magnitude)
    }
}

/// Voltage, angle and branch-flow violations of a bus profile. Flow excess is
/// compared against `s_base * tol` so all three share the per-unit tolerance.
pub fn check_profile(model: &NetworkModel, v: &[f64], delta: &[f64], tol: f64) -> Vec<Violation> {
    let net = &model.network;
    let mut out = Vec::new();
    let mut push = |kind, index, magnitude: f64, tol: f64| {
        if magnitude > tol {
            out.push(Violation {
                kind,
                index,
                magnitude,
            });
        }
    };
    for (i, b) in net.buses.iter().enumerate() {
        push(LimitKind::VoltageHigh, i, v[i] - b.v_max, tol);
        push(LimitKind::VoltageLow, i, b.v_min - v[i], tol);
        push(LimitKind::AngleHigh, i, delta[i] - b.delta_max, tol);
        push(LimitKind::AngleLow, i, b.delta_min - delta[i], tol);
    }
    let from = model.branch_flows_kw(v, delta);
    let to = model.branch_flows_to_kw(v, delta);
    for (k, br) in net.branches.iter().enumerate() {
        let worst = from[k].abs().max(to[k].abs());
        push(LimitKind::BranchFlow, k, worst - br.p_max_kw, tol * model.s_base());
    }
    out
}

pub fn check_limits(solution: &OpfSolution, model: &NetworkModel, tol: f64) -> Vec<Violation> {
    check_profile(model, &solution.v, &solution.delta, tol)
}
