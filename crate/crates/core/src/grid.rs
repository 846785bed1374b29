//! Electrical network, device fleet, nodal admittance and the case-file format.
//!
//! Case files are line-oriented text split into `[section]` blocks. `[grid]`
//! and `[battery]` hold `key = value` pairs; `[buses]`, `[branches]`,
//! `[generators]` and `[sources]` hold whitespace-separated rows in the
//! column order documented in `cases/README.md`. `#` starts a comment.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::battery::BatteryParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pq,
    Pv,
}

impl BusKind {
    fn as_str(self) -> &'static str {
        match self {
            BusKind::Slack => "slack",
            BusKind::Pq => "pq",
            BusKind::Pv => "pv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    pub v_min: f64,
    pub v_max: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    /// Fraction of system active load at this bus.
    pub p_share: f64,
    /// Fraction of system reactive load at this bus.
    pub q_share: f64,
}

/// A cable; `r` and `x` are per-kilometre values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: usize,
    pub to_bus: usize,
    pub r_ohm_per_km: f64,
    pub x_ohm_per_km: f64,
    pub length_km: f64,
    pub p_max_kw: f64,
}

impl Branch {
    pub fn impedance_ohm(&self) -> Complex64 {
        Complex64::new(self.r_ohm_per_km, self.x_ohm_per_km) * self.length_km
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub name: String,
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub ramp_up: f64,
    pub ramp_down: f64,
    pub t_on_min: u32,
    pub t_off_min: u32,
    pub fuel_a: f64,
    pub fuel_b: f64,
    pub fuel_c: f64,
    pub startup_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenewableKind {
    Wind,
    Pv,
}

impl RenewableKind {
    fn as_str(self) -> &'static str {
        match self {
            RenewableKind::Wind => "wind",
            RenewableKind::Pv => "pv",
        }
    }
}

/// An uncontrollable source. The system-level wind (or PV) series is split
/// across sites of the same kind in proportion to installed capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewableSource {
    pub kind: RenewableKind,
    pub bus: usize,
    pub capacity_kw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<GeneratorSpec>,
    pub renewables: Vec<RenewableSource>,
    pub battery_bus: usize,
    pub battery: BatteryParams,
    /// Converter reactive limit, |Q_bat| <= this (kVar).
    pub battery_q_max: f64,
    pub grid_tie_bus: usize,
    /// Both |P_grid| (kW) and |Q_grid| (kVar) are bounded by this.
    pub grid_exchange_limit: f64,
    pub s_base_kva: f64,
    pub v_base_kv: f64,
}

/// Column index of each source in the bus-source incidence matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceRef {
    Generator(usize),
    Renewable(usize),
    Battery,
    Grid,
}

impl Network {
    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    pub fn slack_bus(&self) -> usize {
        self.grid_tie_bus
    }

    pub fn z_base_ohm(&self) -> f64 {
        let s_mva = self.s_base_kva / 1000.0;
        self.v_base_kv * self.v_base_kv / s_mva
    }

    /// Per-unit series admittance of a branch.
    pub fn branch_admittance_pu(&self, branch: &Branch) -> Complex64 {
        let z_pu = branch.impedance_ohm() / self.z_base_ohm();
        z_pu.inv()
    }

    pub fn installed_capacity(&self, kind: RenewableKind) -> f64 {
        self.renewables
            .iter()
            .filter(|r| r.kind == kind)
            .map(|r| r.capacity_kw)
            .sum()
    }

    /// Sources in incidence-column order: generators, renewables, battery, grid.
    pub fn sources(&self) -> Vec<(SourceRef, usize)> {
        let mut out = Vec::new();
        for (i, g) in self.generators.iter().enumerate() {
            out.push((SourceRef::Generator(i), g.bus));
        }
        for (i, r) in self.renewables.iter().enumerate() {
            out.push((SourceRef::Renewable(i), r.bus));
        }
        out.push((SourceRef::Battery, self.battery_bus));
        out.push((SourceRef::Grid, self.grid_tie_bus));
        out
    }

    /// Bus-source incidence `I[i][s]`: 1 where source `s` sits on bus `i`.
    pub fn incidence(&self) -> DMatrix<f64> {
        let sources = self.sources();
        let mut m = DMatrix::zeros(self.n_bus(), sources.len());
        for (col, (_, bus)) in sources.iter().enumerate() {
            m[(*bus, col)] = 1.0;
        }
        m
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        let n = self.n_bus();
        if n == 0 {
            return fail("network has no buses".into());
        }
        for (i, b) in self.buses.iter().enumerate() {
            if b.id != i {
                return fail(format!("bus ids must be 0..{n} in order; found {} at {i}", b.id));
            }
            if !(b.v_min < b.v_max) {
                return fail(format!("bus {i}: v_min must be < v_max"));
            }
            if !(b.delta_min < b.delta_max) {
                return fail(format!("bus {i}: delta_min must be < delta_max"));
            }
            if b.p_share < 0.0 || b.q_share < 0.0 {
                return fail(format!("bus {i}: load shares must be >= 0"));
            }
        }
        let slacks: Vec<_> = self.buses.iter().filter(|b| b.kind == BusKind::Slack).collect();
        if slacks.len() != 1 {
            return fail(format!("exactly one slack bus required, found {}", slacks.len()));
        }
        if slacks[0].id != self.grid_tie_bus {
            return fail(format!(
                "grid tie bus {} is not the slack bus {}",
                self.grid_tie_bus, slacks[0].id
            ));
        }
        let p_sum: f64 = self.buses.iter().map(|b| b.p_share).sum();
        let q_sum: f64 = self.buses.iter().map(|b| b.q_share).sum();
        if (p_sum - 1.0).abs() > 1e-9 || (q_sum - 1.0).abs() > 1e-9 {
            return fail(format!("load shares must sum to 1 (p {p_sum}, q {q_sum})"));
        }
        for (k, br) in self.branches.iter().enumerate() {
            if br.from_bus >= n || br.to_bus >= n {
                return fail(format!("branch {k}: unknown bus"));
            }
            if br.from_bus == br.to_bus {
                return fail(format!("branch {k}: self-loop on bus {}", br.from_bus));
            }
            if !(br.r_ohm_per_km >= 0.0
                && br.x_ohm_per_km > 0.0
                && br.length_km > 0.0
                && br.p_max_kw > 0.0)
            {
                return fail(format!(
                    "branch {k}: require r >= 0, x > 0, length > 0, p_max > 0"
                ));
            }
        }
        for g in &self.generators {
            if g.bus >= n {
                return fail(format!("generator {}: unknown bus {}", g.name, g.bus));
            }
            if !(0.0 <= g.p_min && g.p_min < g.p_max) {
                return fail(format!("generator {}: require 0 <= p_min < p_max", g.name));
            }
            if !(g.q_min < g.q_max) {
                return fail(format!("generator {}: require q_min < q_max", g.name));
            }
            if !(g.ramp_up > 0.0 && g.ramp_down > 0.0) {
                return fail(format!("generator {}: ramp rates must be > 0", g.name));
            }
            if g.t_on_min < 1 || g.t_off_min < 1 {
                return fail(format!("generator {}: minimum on/off times must be >= 1", g.name));
            }
            if g.fuel_a < 0.0 {
                return fail(format!("generator {}: fuel_a must be >= 0", g.name));
            }
        }
        for r in &self.renewables {
            if r.bus >= n {
                return fail(format!("renewable source: unknown bus {}", r.bus));
            }
            if !(r.capacity_kw > 0.0) {
                return fail("renewable source: capacity must be > 0".into());
            }
        }
        if self.battery_bus >= n {
            return fail(format!("battery: unknown bus {}", self.battery_bus));
        }
        self.battery.validate()?;
        if !(self.battery_q_max >= 0.0) {
            return fail("battery: q_max_kvar must be >= 0".into());
        }
        if !(self.grid_exchange_limit > 0.0) {
            return fail("grid: exchange limit must be > 0".into());
        }
        if !(self.s_base_kva > 0.0 && self.v_base_kv > 0.0) {
            return fail("grid: bases must be > 0".into());
        }
        self.check_connected()
    }

    fn check_connected(&self) -> Result<()> {
        let n = self.n_bus();
        let mut adj = vec![Vec::new(); n];
        for br in &self.branches {
            adj[br.from_bus].push(br.to_bus);
            adj[br.to_bus].push(br.from_bus);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(Error::SingularNetwork(format!("bus {i} is isolated"))),
            None => Ok(()),
        }
    }
}

/// Nodal admittance matrix in per unit. No shunts: `Y[i][j] = -y_ij`,
/// `Y[i][i] = sum_j y_ij`.
pub fn build_admittance(network: &Network) -> Result<DMatrix<Complex64>> {
    network.check_connected()?;
    let n = network.n_bus();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for br in &network.branches {
        let yb = network.branch_admittance_pu(br);
        let (f, t) = (br.from_bus, br.to_bus);
        y[(f, f)] += yb;
        y[(t, t)] += yb;
        y[(f, t)] -= yb;
        y[(t, f)] -= yb;
    }
    Ok(y)
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let text = std::fs::read_to_string(path)?;
    parse_network(&text)
}

pub fn save_network(network: &Network, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, serialize_network(network))?;
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Grid,
    Buses,
    Branches,
    Generators,
    Sources,
    Battery,
}

fn num<T: std::str::FromStr>(line: usize, field: &str, tok: &str) -> Result<T> {
    tok.parse::<T>()
        .map_err(|_| Error::parse(line, format!("invalid value {tok:?} for {field}")))
}

fn take_keys<'a>(
    kv: &'a mut BTreeMap<String, (usize, String)>,
    section: &str,
    header_line: usize,
) -> impl FnMut(&str) -> Result<(usize, String)> + 'a {
    let section = section.to_string();
    move |key: &str| {
        kv.remove(key)
            .ok_or_else(|| Error::parse(header_line, format!("[{section}] missing key {key}")))
    }
}

pub fn parse_network(text: &str) -> Result<Network> {
    let mut section: Option<Section> = None;
    let mut seen_sections: BTreeMap<&'static str, usize> = BTreeMap::new();
    let mut grid_kv: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut battery_kv: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut buses: Vec<(usize, Bus)> = Vec::new();
    let mut branches = Vec::new();
    let mut generators = Vec::new();
    let mut renewables = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if !line.ends_with(']') {
                return Err(Error::parse(line_no, "unterminated section header"));
            }
            let name = &line[1..line.len() - 1];
            let (sec, key) = match name.trim() {
                "grid" => (Section::Grid, "grid"),
                "buses" => (Section::Buses, "buses"),
                "branches" => (Section::Branches, "branches"),
                "generators" => (Section::Generators, "generators"),
                "sources" => (Section::Sources, "sources"),
                "battery" => (Section::Battery, "battery"),
                other => return Err(Error::parse(line_no, format!("unknown section [{other}]"))),
            };
            if seen_sections.insert(key, line_no).is_some() {
                return Err(Error::parse(line_no, format!("duplicate section [{key}]")));
            }
            section = Some(sec);
            continue;
        }
        let Some(sec) = section else {
            return Err(Error::parse(line_no, "content before first section header"));
        };
        match sec {
            Section::Grid | Section::Battery => {
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| Error::parse(line_no, "expected key = value"))?;
                let map = if sec == Section::Grid {
                    &mut grid_kv
                } else {
                    &mut battery_kv
                };
                let k = k.trim().to_string();
                if map.insert(k.clone(), (line_no, v.trim().to_string())).is_some() {
                    return Err(Error::parse(line_no, format!("duplicate key {k}")));
                }
            }
            Section::Buses => {
                let t: Vec<&str> = line.split_whitespace().collect();
                if t.len() != 8 {
                    return Err(Error::parse(line_no, format!("bus row needs 8 columns, got {}", t.len())));
                }
                let id: usize = num(line_no, "id", t[0])?;
                if buses.iter().any(|(_, b)| b.id == id) {
                    return Err(Error::parse(line_no, format!("duplicate bus id {id}")));
                }
                let kind = match t[1] {
                    "slack" => BusKind::Slack,
                    "pq" => BusKind::Pq,
                    "pv" => BusKind::Pv,
                    other => return Err(Error::parse(line_no, format!("unknown bus kind {other:?}"))),
                };
                buses.push((
                    line_no,
                    Bus {
                        id,
                        kind,
                        v_min: num(line_no, "v_min", t[2])?,
                        v_max: num(line_no, "v_max", t[3])?,
                        delta_min: num(line_no, "delta_min", t[4])?,
                        delta_max: num(line_no, "delta_max", t[5])?,
                        p_share: num(line_no, "p_share", t[6])?,
                        q_share: num(line_no, "q_share", t[7])?,
                    },
                ));
            }
            Section::Branches => {
                let t: Vec<&str> = line.split_whitespace().collect();
                if t.len() != 6 {
                    return Err(Error::parse(line_no, format!("branch row needs 6 columns, got {}", t.len())));
                }
                branches.push(Branch {
                    from_bus: num(line_no, "from", t[0])?,
                    to_bus: num(line_no, "to", t[1])?,
                    r_ohm_per_km: num(line_no, "r", t[2])?,
                    x_ohm_per_km: num(line_no, "x", t[3])?,
                    length_km: num(line_no, "length", t[4])?,
                    p_max_kw: num(line_no, "p_max", t[5])?,
                });
            }
            Section::Generators => {
                let t: Vec<&str> = line.split_whitespace().collect();
                if t.len() != 14 {
                    return Err(Error::parse(line_no, format!("generator row needs 14 columns, got {}", t.len())));
                }
                generators.push(GeneratorSpec {
                    name: t[0].to_string(),
                    bus: num(line_no, "bus", t[1])?,
                    p_min: num(line_no, "p_min", t[2])?,
                    p_max: num(line_no, "p_max", t[3])?,
                    q_min: num(line_no, "q_min", t[4])?,
                    q_max: num(line_no, "q_max", t[5])?,
                    ramp_up: num(line_no, "ramp_up", t[6])?,
                    ramp_down: num(line_no, "ramp_down", t[7])?,
                    t_on_min: num(line_no, "t_on_min", t[8])?,
                    t_off_min: num(line_no, "t_off_min", t[9])?,
                    fuel_a: num(line_no, "fuel_a", t[10])?,
                    fuel_b: num(line_no, "fuel_b", t[11])?,
                    fuel_c: num(line_no, "fuel_c", t[12])?,
                    startup_cost: num(line_no, "startup_cost", t[13])?,
                });
            }
            Section::Sources => {
                let t: Vec<&str> = line.split_whitespace().collect();
                if t.len() != 3 {
                    return Err(Error::parse(line_no, format!("source row needs 3 columns, got {}", t.len())));
                }
                let kind = match t[0] {
                    "wind" => RenewableKind::Wind,
                    "pv" => RenewableKind::Pv,
                    other => return Err(Error::parse(line_no, format!("unknown source kind {other:?}"))),
                };
                renewables.push(RenewableSource {
                    kind,
                    bus: num(line_no, "bus", t[1])?,
                    capacity_kw: num(line_no, "capacity_kw", t[2])?,
                });
            }
        }
    }

    for required in ["grid", "buses", "branches", "battery"] {
        if !seen_sections.contains_key(required) {
            return Err(Error::parse(0, format!("missing section [{required}]")));
        }
    }

    let grid_line = seen_sections["grid"];
    let mut g = take_keys(&mut grid_kv, "grid", grid_line);
    let (l, v) = g("s_base_kva")?;
    let s_base_kva: f64 = num(l, "s_base_kva", &v)?;
    let (l, v) = g("v_base_kv")?;
    let v_base_kv: f64 = num(l, "v_base_kv", &v)?;
    let (l, v) = g("tie_bus")?;
    let grid_tie_bus: usize = num(l, "tie_bus", &v)?;
    let (l, v) = g("exchange_limit_kw")?;
    let grid_exchange_limit: f64 = num(l, "exchange_limit_kw", &v)?;
    drop(g);
    if let Some((k, (l, _))) = grid_kv.into_iter().next() {
        return Err(Error::parse(l, format!("[grid] unknown key {k}")));
    }

    let bat_line = seen_sections["battery"];
    let mut b = take_keys(&mut battery_kv, "battery", bat_line);
    let mut f = |key: &str| -> Result<f64> {
        let (l, v) = b(key)?;
        num(l, key, &v)
    };
    let battery_bus = f("bus")?;
    if battery_bus.fract() != 0.0 || battery_bus < 0.0 {
        return Err(Error::parse(bat_line, "battery bus must be a non-negative integer"));
    }
    let battery = BatteryParams {
        r_in: f("r_in")?,
        k_b: f("k_b")?,
        v_r: f("v_r")?,
        c_r: f("c_r")?,
        soc_min: f("soc_min")?,
        soc_max: f("soc_max")?,
        p_d_max: f("p_d_max")?,
        p_c_min: f("p_c_min")?,
        eta_d_min: f("eta_d_min")?,
        eta_c_min: f("eta_c_min")?,
        c_bat: f("c_bat")?,
    };
    let battery_q_max = f("q_max_kvar")?;
    drop(f);
    drop(b);
    if let Some((k, (l, _))) = battery_kv.into_iter().next() {
        return Err(Error::parse(l, format!("[battery] unknown key {k}")));
    }

    let mut buses = buses;
    buses.sort_by_key(|(_, b)| b.id);
    let network = Network {
        buses: buses.into_iter().map(|(_, b)| b).collect(),
        branches,
        generators,
        renewables,
        battery_bus: battery_bus as usize,
        battery,
        battery_q_max,
        grid_tie_bus,
        grid_exchange_limit,
        s_base_kva,
        v_base_kv,
    };
    network.validate()?;
    Ok(network)
}

pub fn serialize_network(net: &Network) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "[grid]");
    let _ = writeln!(s, "s_base_kva = {}", net.s_base_kva);
    let _ = writeln!(s, "v_base_kv = {}", net.v_base_kv);
    let _ = writeln!(s, "tie_bus = {}", net.grid_tie_bus);
    let _ = writeln!(s, "exchange_limit_kw = {}", net.grid_exchange_limit);
    let _ = writeln!(s, "\n[buses]");
    let _ = writeln!(s, "# id kind v_min v_max delta_min delta_max p_share q_share");
    for b in &net.buses {
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {} {}",
            b.id,
            b.kind.as_str(),
            b.v_min,
            b.v_max,
            b.delta_min,
            b.delta_max,
            b.p_share,
            b.q_share
        );
    }
    let _ = writeln!(s, "\n[branches]");
    let _ = writeln!(s, "# from to r_ohm_per_km x_ohm_per_km length_km p_max_kw");
    for br in &net.branches {
        let _ = writeln!(
            s,
            "{} {} {} {} {} {}",
            br.from_bus, br.to_bus, br.r_ohm_per_km, br.x_ohm_per_km, br.length_km, br.p_max_kw
        );
    }
    let _ = writeln!(s, "\n[generators]");
    let _ = writeln!(
        s,
        "# name bus p_min p_max q_min q_max ramp_up ramp_down t_on_min t_off_min fuel_a fuel_b fuel_c startup_cost"
    );
    for g in &net.generators {
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {} {} {} {} {} {} {} {}",
            g.name,
            g.bus,
            g.p_min,
            g.p_max,
            g.q_min,
            g.q_max,
            g.ramp_up,
            g.ramp_down,
            g.t_on_min,
            g.t_off_min,
            g.fuel_a,
            g.fuel_b,
            g.fuel_c,
            g.startup_cost
        );
    }
    let _ = writeln!(s, "\n[sources]");
    let _ = writeln!(s, "# kind bus capacity_kw");
    for r in &net.renewables {
        let _ = writeln!(s, "{} {} {}", r.kind.as_str(), r.bus, r.capacity_kw);
    }
    let b = &net.battery;
    let _ = writeln!(s, "\n[battery]");
    let _ = writeln!(s, "bus = {}", net.battery_bus);
    for (k, v) in [
        ("r_in", b.r_in),
        ("k_b", b.k_b),
        ("v_r", b.v_r),
        ("c_r", b.c_r),
        ("soc_min", b.soc_min),
        ("soc_max", b.soc_max),
        ("p_d_max", b.p_d_max),
        ("p_c_min", b.p_c_min),
        ("eta_d_min", b.eta_d_min),
        ("eta_c_min", b.eta_c_min),
        ("c_bat", b.c_bat),
        ("q_max_kvar", net.battery_q_max),
    ] {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn bus(id: usize, kind: BusKind, p_share: f64) -> Bus {
        Bus {
            id,
            kind,
            v_min: 0.9,
            v_max: 1.1,
            delta_min: -1.0,
            delta_max: 1.0,
            p_share,
            q_share: p_share,
        }
    }

    /// Two buses joined by one cable; all load on bus 1.
    pub(crate) fn two_bus() -> Network {
        Network {
            buses: vec![bus(0, BusKind::Slack, 0.0), bus(1, BusKind::Pq, 1.0)],
            branches: vec![Branch {
                from_bus: 0,
                to_bus: 1,
                r_ohm_per_km: 0.64,
                x_ohm_per_km: 0.1,
                length_km: 0.05,
                p_max_kw: 500.0,
            }],
            generators: vec![],
            renewables: vec![],
            battery_bus: 1,
            battery: BatteryParams::default(),
            battery_q_max: 12.0,
            grid_tie_bus: 0,
            grid_exchange_limit: 50.0,
            s_base_kva: 100.0,
            v_base_kv: 0.4,
        }
    }

    #[test]
    fn two_bus_admittance_is_analytic() {
        let net = two_bus();
        let y = build_admittance(&net).unwrap();
        let z_pu = Complex64::new(0.64 * 0.05, 0.1 * 0.05) / 1.6;
        let yb = z_pu.inv();
        assert!((y[(0, 0)] - yb).norm() < 1e-12);
        assert!((y[(1, 1)] - yb).norm() < 1e-12);
        assert!((y[(0, 1)] + yb).norm() < 1e-12);
        assert!((y[(1, 0)] + yb).norm() < 1e-12);
    }

    #[test]
    fn zero_branches_is_singular() {
        let mut net = two_bus();
        net.branches.clear();
        assert!(matches!(build_admittance(&net), Err(Error::SingularNetwork(_))));
    }

    #[test]
    fn single_bus_is_connected() {
        let mut net = two_bus();
        net.buses = vec![Bus {
            p_share: 1.0,
            q_share: 1.0,
            ..bus(0, BusKind::Slack, 1.0)
        }];
        net.branches.clear();
        net.battery_bus = 0;
        net.validate().unwrap();
        let y = build_admittance(&net).unwrap();
        assert_eq!(y.nrows(), 1);
        assert_eq!(y[(0, 0)], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn incidence_has_one_entry_per_column() {
        let net = two_bus();
        let inc = net.incidence();
        for c in 0..inc.ncols() {
            assert_eq!(inc.column(c).iter().filter(|v| **v != 0.0).count(), 1);
        }
    }

    #[test]
    fn validation_catches_violations() {
        let mut net = two_bus();
        net.buses[1].kind = BusKind::Slack;
        assert!(matches!(net.validate(), Err(Error::Validation(_))));

        let mut net = two_bus();
        net.branches[0].to_bus = 0;
        assert!(net.validate().is_err());

        let mut net = two_bus();
        net.buses[1].p_share = 0.5;
        assert!(net.validate().is_err());

        let mut net = two_bus();
        net.branches[0].x_ohm_per_km = 0.0;
        assert!(net.validate().is_err());
    }

    #[test]
    fn round_trip_serialization() {
        let net = two_bus();
        let text = serialize_network(&net);
        let back = parse_network(&text).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn duplicate_bus_id_is_parse_error() {
        let mut text = serialize_network(&two_bus());
        text = text.replace("1 pq", "0 pq");
        match parse_network(&text) {
            Err(Error::Parse { line, msg }) => {
                assert!(msg.contains("duplicate bus id"), "{msg}");
                assert!(line > 0);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn two_slack_buses_is_validation_error() {
        let text = serialize_network(&two_bus()).replace("1 pq", "1 slack");
        assert!(matches!(parse_network(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn bad_number_reports_line() {
        let text = serialize_network(&two_bus()).replace("v_base_kv = 0.4", "v_base_kv = abc");
        match parse_network(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
