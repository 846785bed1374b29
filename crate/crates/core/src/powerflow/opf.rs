use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ipm::{self, Evaluation, IpmOptions, Nlp};
use super::newton::{solve_power_flow_pq, PowerFlowCase};
use super::{ac, NetworkModel};
use crate::grid::{GeneratorSpec, RenewableKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpfConfig {
    /// Power-balance feasibility tolerance (per unit).
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub max_iter: usize,
    /// Let renewables be dispatched below their availability.
    pub allow_curtailment: bool,
}

impl Default for OpfConfig {
    fn default() -> Self {
        OpfConfig {
            feas_tol: 1e-6,
            opt_tol: 1e-6,
            max_iter: 100,
            allow_curtailment: false,
        }
    }
}

/// One single-period dispatch problem. Commitment and battery power are
/// fixed inputs; generator, grid and battery-reactive setpoints are solved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpfProblem {
    pub commitment: Vec<bool>,
    pub prev_commitment: Vec<bool>,
    /// Generator output at the previous step (kW).
    pub prev_dispatch: Vec<f64>,
    /// Battery active power (kW, discharge positive).
    pub p_bat: f64,
    pub p_pv: f64,
    pub p_wt: f64,
    /// System active (kW) and reactive (kVar) load.
    pub d: f64,
    pub q: f64,
    /// Grid price ($/kWh).
    pub price: f64,
    /// Step length (h).
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpfSolution {
    pub p_g: Vec<f64>,
    pub q_g: Vec<f64>,
    pub p_grid: f64,
    pub q_grid: f64,
    pub q_bat: f64,
    /// Dispatched output of each renewable site (kW).
    pub p_renewable: Vec<f64>,
    pub v: Vec<f64>,
    pub delta: Vec<f64>,
    pub branch_flows: Vec<f64>,
    /// Single-period variable cost ($).
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Largest power-balance mismatch of the returned point (per unit).
    pub max_mismatch: f64,
    /// Scaled feasibility measure per interior-point iteration.
    pub history: Vec<f64>,
}

/// Fuel, constant and grid-exchange cost of a dispatch.
pub fn dispatch_cost(
    model: &NetworkModel,
    problem: &OpfProblem,
    p_g: &[f64],
    p_grid: f64,
) -> f64 {
    let dt = problem.dt;
    let fuel: f64 = model
        .network
        .generators
        .iter()
        .zip(&problem.commitment)
        .zip(p_g)
        .filter(|((_, on), _)| **on)
        .map(|((g, _), &p)| g.fuel_a * (p * dt).powi(2) + g.fuel_b * p * dt + g.fuel_c)
        .sum();
    fuel + problem.price * p_grid * dt
}

/// Output range allowed by the output limits and the ramp constraints for a
/// generator, written with the commitment big-M terms as in the model. `None`
/// when no output satisfies them.
pub(crate) fn generator_p_range(
    g: &GeneratorSpec,
    on: bool,
    prev_on: bool,
    prev_p: f64,
) -> Option<(f64, f64)> {
    const TOL: f64 = 1e-9;
    let s = f64::from(u8::from(on));
    let sp = f64::from(u8::from(prev_on));
    let up = s * g.ramp_up + g.p_min * (s - sp) + g.p_max * (1.0 - s);
    let dn = sp * g.ramp_down + g.p_min * (sp - s) + g.p_max * (1.0 - sp);
    let (ramp_lo, ramp_hi) = (prev_p - dn, prev_p + up);
    if on {
        let lo = g.p_min.max(ramp_lo);
        let hi = g.p_max.min(ramp_hi);
        (lo <= hi + TOL).then(|| (lo, hi.max(lo)))
    } else {
        (ramp_lo <= TOL && ramp_hi >= -TOL).then_some((0.0, 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PRole {
    Gen(usize),
    Grid,
    Renewable(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum QRole {
    Gen(usize),
    Grid,
    Battery,
}

#[derive(Debug, Clone, Copy)]
struct Var<R> {
    role: R,
    bus: usize,
    lo: f64,
    hi: f64,
}

/// The OPF written as a dense NLP over `[theta; V; P vars; Q vars]`, all in
/// per unit.
struct OpfNlp<'a> {
    model: &'a NetworkModel,
    n: usize,
    slack: usize,
    pvars: Vec<Var<PRole>>,
    qvars: Vec<Var<QRole>>,
    /// Fixed net injection per bus (fixed sources minus load), per unit.
    p_fixed: Vec<f64>,
    q_fixed: Vec<f64>,
    /// `(a, b)` cost coefficients for each P variable in per-unit terms.
    cost: Vec<(f64, f64)>,
    cost_const: f64,
    n_iq: usize,
}

impl OpfNlp<'_> {
    fn nx(&self) -> usize {
        2 * self.n + self.pvars.len() + self.qvars.len()
    }

    fn p_off(&self) -> usize {
        2 * self.n
    }

    fn q_off(&self) -> usize {
        2 * self.n + self.pvars.len()
    }

    fn bus_voltages<'x>(&self, x: &'x DVector<f64>) -> (&'x [f64], &'x [f64]) {
        let s = x.as_slice();
        (&s[..self.n], &s[self.n..2 * self.n])
    }

    fn initial_point(&self) -> DVector<f64> {
        let net = &self.model.network;
        let mut x = DVector::zeros(self.nx());
        for (i, b) in net.buses.iter().enumerate() {
            x[self.n + i] = if b.v_min < 1.0 && 1.0 < b.v_max {
                1.0
            } else {
                0.5 * (b.v_min + b.v_max)
            };
        }
        for (k, v) in self.pvars.iter().enumerate() {
            x[self.p_off() + k] = 0.5 * (v.lo + v.hi);
        }
        for (k, v) in self.qvars.iter().enumerate() {
            x[self.q_off() + k] = 0.5 * (v.lo + v.hi);
        }
        x
    }
}

impl Nlp for OpfNlp<'_> {
    fn n_vars(&self) -> usize {
        self.nx()
    }

    fn evaluate(&self, x: &DVector<f64>) -> Evaluation {
        let n = self.n;
        let nx = self.nx();
        let (delta, v) = self.bus_voltages(x);
        let vc = ac::phasors(v, delta);
        let s = ac::injections(&self.model.y, &vc);
        let (dva, dvm) = ac::ds_dv(&self.model.y, &vc);

        let mut f = self.cost_const;
        let mut df = DVector::zeros(nx);
        for (k, &(a, b)) in self.cost.iter().enumerate() {
            let p = x[self.p_off() + k];
            f += a * p * p + b * p;
            df[self.p_off() + k] = 2.0 * a * p + b;
        }

        let neq = 2 * n + 1;
        let mut g = DVector::zeros(neq);
        let mut jg = DMatrix::zeros(neq, nx);
        for i in 0..n {
            g[i] = s[i].re - self.p_fixed[i];
            g[n + i] = s[i].im - self.q_fixed[i];
            for j in 0..n {
                jg[(i, j)] = dva[(i, j)].re;
                jg[(i, n + j)] = dvm[(i, j)].re;
                jg[(n + i, j)] = dva[(i, j)].im;
                jg[(n + i, n + j)] = dvm[(i, j)].im;
            }
        }
        for (k, pv) in self.pvars.iter().enumerate() {
            g[pv.bus] -= x[self.p_off() + k];
            jg[(pv.bus, self.p_off() + k)] = -1.0;
        }
        for (k, qv) in self.qvars.iter().enumerate() {
            g[n + qv.bus] -= x[self.q_off() + k];
            jg[(n + qv.bus, self.q_off() + k)] = -1.0;
        }
        g[2 * n] = x[self.slack];
        jg[(2 * n, self.slack)] = 1.0;

        let mut h = DVector::zeros(self.n_iq);
        let mut jh = DMatrix::zeros(self.n_iq, nx);
        let mut row = 0;
        let mut bound = |h: &mut DVector<f64>, jh: &mut DMatrix<f64>, col: usize, lo: f64, hi: f64| {
            h[row] = x[col] - hi;
            jh[(row, col)] = 1.0;
            h[row + 1] = lo - x[col];
            jh[(row + 1, col)] = -1.0;
            row += 2;
        };
        let net = &self.model.network;
        for (i, b) in net.buses.iter().enumerate() {
            bound(&mut h, &mut jh, n + i, b.v_min, b.v_max);
            if i != self.slack {
                bound(&mut h, &mut jh, i, b.delta_min, b.delta_max);
            }
        }
        for (k, pv) in self.pvars.iter().enumerate() {
            bound(&mut h, &mut jh, self.p_off() + k, pv.lo, pv.hi);
        }
        for (k, qv) in self.qvars.iter().enumerate() {
            bound(&mut h, &mut jh, self.q_off() + k, qv.lo, qv.hi);
        }
        let sb = self.model.s_base();
        for (br, &yb) in net.branches.iter().zip(self.model.branch_y()) {
            let pmax = br.p_max_kw / sb;
            let (a, b) = (br.from_bus, br.to_bus);
            for (u, w) in [(a, b), (b, a)] {
                let (p, grad, _) = ac::branch_flow(yb, delta[u], delta[w], v[u], v[w]);
                let cols = [u, w, n + u, n + w];
                for sign in [1.0, -1.0] {
                    h[row] = sign * p - pmax;
                    for (c, gk) in cols.iter().zip(grad) {
                        jh[(row, *c)] += sign * gk;
                    }
                    row += 1;
                }
            }
        }
        debug_assert_eq!(row, self.n_iq);
        Evaluation { f, df, g, jg, h, jh }
    }

    fn hessian(&self, x: &DVector<f64>, lam: &DVector<f64>, mu: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n;
        let nx = self.nx();
        let (delta, v) = self.bus_voltages(x);
        let vc = ac::phasors(v, delta);
        let mut hess = DMatrix::zeros(nx, nx);
        for (k, &(a, _)) in self.cost.iter().enumerate() {
            hess[(self.p_off() + k, self.p_off() + k)] = 2.0 * a;
        }
        let lam_p: Vec<f64> = (0..n).map(|i| lam[i]).collect();
        let lam_q: Vec<f64> = (0..n).map(|i| lam[n + i]).collect();
        let (paa, pav, pva, pvv) = ac::d2s_dv2(&self.model.y, &vc, &lam_p);
        let (qaa, qav, qva, qvv) = ac::d2s_dv2(&self.model.y, &vc, &lam_q);
        for i in 0..n {
            for j in 0..n {
                hess[(i, j)] += paa[(i, j)].re + qaa[(i, j)].im;
                hess[(i, n + j)] += pav[(i, j)].re + qav[(i, j)].im;
                hess[(n + i, j)] += pva[(i, j)].re + qva[(i, j)].im;
                hess[(n + i, n + j)] += pvv[(i, j)].re + qvv[(i, j)].im;
            }
        }
        // Flow rows follow the linear bound rows.
        let net = &self.model.network;
        let mut row = self.n_iq - 4 * net.branches.len();
        for (br, &yb) in net.branches.iter().zip(self.model.branch_y()) {
            let (a, b) = (br.from_bus, br.to_bus);
            for (u, w) in [(a, b), (b, a)] {
                let (_, _, hs) = ac::branch_flow(yb, delta[u], delta[w], v[u], v[w]);
                let cols = [u, w, n + u, n + w];
                let weight = mu[row] - mu[row + 1];
                row += 2;
                if weight == 0.0 {
                    continue;
                }
                for r in 0..4 {
                    for c in 0..4 {
                        hess[(cols[r], cols[c])] += weight * hs[r][c];
                    }
                }
            }
        }
        hess
    }
}

fn failed(model: &NetworkModel, iterations: usize, history: Vec<f64>) -> OpfSolution {
    let n = model.n_bus();
    let ng = model.network.generators.len();
    OpfSolution {
        p_g: vec![0.0; ng],
        q_g: vec![0.0; ng],
        p_grid: 0.0,
        q_grid: 0.0,
        q_bat: 0.0,
        p_renewable: vec![0.0; model.network.renewables.len()],
        v: vec![1.0; n],
        delta: vec![0.0; n],
        branch_flows: vec![0.0; model.network.branches.len()],
        objective: f64::NAN,
        converged: false,
        iterations,
        max_mismatch: f64::INFINITY,
        history,
    }
}

/// Renewable availability of each site, splitting the system totals by
/// installed capacity.
pub(crate) fn renewable_availability(model: &NetworkModel, p_pv: f64, p_wt: f64) -> Vec<f64> {
    let net = &model.network;
    let cap_wt = net.installed_capacity(RenewableKind::Wind);
    let cap_pv = net.installed_capacity(RenewableKind::Pv);
    net.renewables
        .iter()
        .map(|r| match r.kind {
            RenewableKind::Wind => p_wt * r.capacity_kw / cap_wt,
            RenewableKind::Pv => p_pv * r.capacity_kw / cap_pv,
        })
        .collect()
}

/// Minimise single-period cost over the continuous setpoints. Infeasible
/// ramp windows, interior-point failure, or a failed power-flow polish all
/// come back as `converged = false`.
pub fn solve_opf(model: &NetworkModel, problem: &OpfProblem, config: &OpfConfig) -> OpfSolution {
    let net = &model.network;
    let n = net.n_bus();
    let sb = model.s_base();
    let dt = problem.dt;
    let ng = net.generators.len();
    assert_eq!(problem.commitment.len(), ng, "commitment length");
    assert_eq!(problem.prev_commitment.len(), ng, "previous commitment length");
    assert_eq!(problem.prev_dispatch.len(), ng, "previous dispatch length");

    let mut p_fixed = vec![0.0; n];
    let mut q_fixed = vec![0.0; n];
    for (i, b) in net.buses.iter().enumerate() {
        p_fixed[i] -= b.p_share * problem.d / sb;
        q_fixed[i] -= b.q_share * problem.q / sb;
    }
    p_fixed[net.battery_bus] += problem.p_bat / sb;

    let mut pvars: Vec<Var<PRole>> = Vec::new();
    let mut cost = Vec::new();
    let mut cost_const = 0.0;
    let mut fixed_gen_p = vec![0.0; ng];
    for (k, g) in net.generators.iter().enumerate() {
        let on = problem.commitment[k];
        let Some((lo, hi)) =
            generator_p_range(g, on, problem.prev_commitment[k], problem.prev_dispatch[k])
        else {
            return failed(model, 0, Vec::new());
        };
        if !on {
            continue;
        }
        cost_const += g.fuel_c;
        if hi - lo < 1e-9 {
            fixed_gen_p[k] = lo;
            p_fixed[g.bus] += lo / sb;
            cost_const += g.fuel_a * (lo * dt).powi(2) + g.fuel_b * lo * dt;
        } else {
            pvars.push(Var {
                role: PRole::Gen(k),
                bus: g.bus,
                lo: lo / sb,
                hi: hi / sb,
            });
            cost.push((g.fuel_a * (sb * dt).powi(2), g.fuel_b * sb * dt));
        }
    }
    let lim = net.grid_exchange_limit / sb;
    pvars.push(Var {
        role: PRole::Grid,
        bus: net.grid_tie_bus,
        lo: -lim,
        hi: lim,
    });
    cost.push((0.0, problem.price * sb * dt));

    let avail = renewable_availability(model, problem.p_pv, problem.p_wt);
    for (k, (r, &a)) in net.renewables.iter().zip(&avail).enumerate() {
        if config.allow_curtailment && a > 1e-9 {
            pvars.push(Var {
                role: PRole::Renewable(k),
                bus: r.bus,
                lo: 0.0,
                hi: a / sb,
            });
            cost.push((0.0, 0.0));
        } else {
            p_fixed[r.bus] += a / sb;
        }
    }

    let mut qvars: Vec<Var<QRole>> = Vec::new();
    for (k, g) in net.generators.iter().enumerate() {
        if problem.commitment[k] {
            qvars.push(Var {
                role: QRole::Gen(k),
                bus: g.bus,
                lo: g.q_min / sb,
                hi: g.q_max / sb,
            });
        }
    }
    qvars.push(Var {
        role: QRole::Grid,
        bus: net.grid_tie_bus,
        lo: -lim,
        hi: lim,
    });
    if net.battery_q_max > 0.0 {
        let qb = net.battery_q_max / sb;
        qvars.push(Var {
            role: QRole::Battery,
            bus: net.battery_bus,
            lo: -qb,
            hi: qb,
        });
    }

    let n_iq = 2 * n + 2 * (n - 1) + 2 * pvars.len() + 2 * qvars.len() + 4 * net.branches.len();
    let nlp = OpfNlp {
        model,
        n,
        slack: net.slack_bus(),
        pvars,
        qvars,
        p_fixed,
        q_fixed,
        cost,
        cost_const,
        n_iq,
    };
    let opts = IpmOptions {
        feas_tol: config.feas_tol,
        grad_tol: config.opt_tol,
        comp_tol: config.opt_tol,
        cost_tol: config.opt_tol,
        max_iter: config.max_iter,
        ..IpmOptions::default()
    };
    let res = ipm::solve(&nlp, nlp.initial_point(), &opts);
    if !res.converged {
        return failed(model, res.iterations, res.history);
    }

    let x = &res.x;
    let mut p_g = fixed_gen_p;
    let mut q_g = vec![0.0; ng];
    let mut q_bat = 0.0;
    let mut p_renewable = avail;
    for (k, pv) in nlp.pvars.iter().enumerate() {
        let val = x[nlp.p_off() + k] * sb;
        match pv.role {
            PRole::Gen(g) => p_g[g] = val,
            PRole::Grid => {}
            PRole::Renewable(r) => p_renewable[r] = val,
        }
    }
    for (k, qv) in nlp.qvars.iter().enumerate() {
        let val = x[nlp.q_off() + k] * sb;
        match qv.role {
            QRole::Gen(g) => q_g[g] = val,
            QRole::Grid => {}
            QRole::Battery => q_bat = val,
        }
    }
    let (delta, v) = nlp.bus_voltages(x);

    // Polish the power balance with a Newton solve that keeps every setpoint
    // except the grid exchange, which absorbs the residual at the slack bus.
    let mut p_inj = vec![0.0; n];
    let mut q_inj = vec![0.0; n];
    for (i, b) in net.buses.iter().enumerate() {
        p_inj[i] -= b.p_share * problem.d;
        q_inj[i] -= b.q_share * problem.q;
    }
    p_inj[net.battery_bus] += problem.p_bat;
    q_inj[net.battery_bus] += q_bat;
    for (k, g) in net.generators.iter().enumerate() {
        p_inj[g.bus] += p_g[k];
        q_inj[g.bus] += q_g[k];
    }
    for (r, &p) in net.renewables.iter().zip(&p_renewable) {
        p_inj[r.bus] += p;
    }
    let slack = net.slack_bus();
    let mut case = PowerFlowCase::new(model, p_inj.clone(), q_inj.clone());
    case.v_set[slack] = v[slack];
    case.warm_start = Some((v.to_vec(), delta.to_vec()));
    let pf = solve_power_flow_pq(&case, 1e-11, 10);
    if !pf.converged {
        return failed(model, res.iterations, res.history);
    }
    // Slack injection = grid exchange plus whatever else sits on the tie bus.
    let p_grid = pf.slack_p - p_inj[slack];
    let q_grid = pf.slack_q - q_inj[slack];

    let objective = dispatch_cost(model, problem, &p_g, p_grid);
    let s = model.injections_pu(&pf.v, &pf.delta);
    let mut max_mismatch = 0.0f64;
    for i in 0..n {
        let mut pi = p_inj[i];
        let mut qi = q_inj[i];
        if i == slack {
            pi += p_grid;
            qi += q_grid;
        }
        max_mismatch = max_mismatch
            .max((s[i].re - pi / sb).abs())
            .max((s[i].im - qi / sb).abs());
    }
    OpfSolution {
        p_g,
        q_g,
        p_grid,
        q_grid,
        q_bat,
        p_renewable,
        branch_flows: model.branch_flows_kw(&pf.v, &pf.delta),
        v: pf.v,
        delta: pf.delta,
        objective,
        converged: true,
        iterations: res.iterations,
        max_mismatch,
        history: res.history,
    }
}

/// Key identifying an OPF problem after ramp windows are resolved. Problems
/// with equal keys have bit-identical solutions.
pub(crate) fn problem_key(model: &NetworkModel, problem: &OpfProblem) -> Vec<u64> {
    let mut key = Vec::with_capacity(16);
    for (k, g) in model.network.generators.iter().enumerate() {
        let range = generator_p_range(
            g,
            problem.commitment[k],
            problem.prev_commitment[k],
            problem.prev_dispatch[k],
        );
        key.push(u64::from(problem.commitment[k]));
        match range {
            Some((lo, hi)) => {
                key.push(lo.to_bits());
                key.push(hi.to_bits());
            }
            None => {
                key.push(u64::MAX);
                key.push(u64::MAX);
            }
        }
    }
    for v in [
        problem.p_bat,
        problem.p_pv,
        problem.p_wt,
        problem.d,
        problem.q,
        problem.price,
        problem.dt,
    ] {
        key.push(v.to_bits());
    }
    key
}
