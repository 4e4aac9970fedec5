//! Per-unit grid data model.
//!
//! Every power quantity stored here is in per-unit on [`Network::base_mva`],
//! angles are in radians. Branch ratings stay in MVA, matching the case files.

use std::collections::{HashMap, HashSet};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Role of a bus in the power-flow equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BusKind {
    Pq,
    Pv,
    Slack,
}

impl BusKind {
    pub fn matpower_code(self) -> u8 {
        match self {
            BusKind::Pq => 1,
            BusKind::Pv => 2,
            BusKind::Slack => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    pub p_load: f64,
    pub q_load: f64,
    pub g_shunt: f64,
    pub b_shunt: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub v_init: f64,
    pub delta_init: f64,
    /// Case-file bookkeeping columns (area, baseKV, zone) kept for round trips.
    pub area: f64,
    pub base_kv: f64,
    pub zone: f64,
    /// Columns past the 13 standard ones, carried opaquely.
    pub extra: Vec<f64>,
}

impl Bus {
    /// True when the angle bounds are the unconstrained ±π defaults.
    pub fn has_default_angle_bounds(&self) -> bool {
        self.delta_min <= -PI && self.delta_max >= PI
    }
}

/// Polynomial generation cost, highest degree first, in $/hr per (p.u. power)^k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostPolynomial {
    pub coefficients: Vec<f64>,
}

impl CostPolynomial {
    pub fn new(coefficients: Vec<f64>) -> Self {
        Self { coefficients }
    }

    /// Build from MATPOWER-style coefficients that expect the argument in MW.
    pub fn from_mw_coefficients(mw: &[f64], base_mva: f64) -> Self {
        let degree = mw.len().saturating_sub(1);
        let coefficients = mw
            .iter()
            .enumerate()
            .map(|(k, c)| c * base_mva.powi((degree - k) as i32))
            .collect();
        Self { coefficients }
    }

    pub fn to_mw_coefficients(&self, base_mva: f64) -> Vec<f64> {
        let degree = self.degree();
        self.coefficients
            .iter()
            .enumerate()
            .map(|(k, c)| c / base_mva.powi((degree - k) as i32))
            .collect()
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len().saturating_sub(1)
    }

    /// Cost at `p` (p.u.), $/hr.
    pub fn eval(&self, p: f64) -> f64 {
        self.coefficients.iter().fold(0.0, |acc, c| acc * p + c)
    }

    pub fn derivative(&self, p: f64) -> f64 {
        let n = self.degree();
        self.coefficients[..n]
            .iter()
            .enumerate()
            .fold(0.0, |acc, (k, c)| acc * p + c * (n - k) as f64)
    }

    pub fn second_derivative(&self, p: f64) -> f64 {
        let n = self.degree();
        if n < 2 {
            return 0.0;
        }
        self.coefficients[..n - 1]
            .iter()
            .enumerate()
            .fold(0.0, |acc, (k, c)| {
                let e = (n - k) as f64;
                acc * p + c * e * (e - 1.0)
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus_id: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub v_setpoint: f64,
    pub cost: CostPolynomial,
    pub in_service: bool,
    /// Case-file dispatch (Pg, Qg columns), p.u.
    pub p_init: f64,
    pub q_init: f64,
    pub m_base: f64,
    pub cost_startup: f64,
    pub cost_shutdown: f64,
    pub extra: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: usize,
    pub to_bus: usize,
    pub r: f64,
    pub x: f64,
    pub b_charging: f64,
    /// Off-nominal turns ratio, 1.0 for plain lines.
    pub tap: f64,
    /// Phase shift, radians.
    pub shift: f64,
    /// Long-term apparent-power rating in MVA, 0 means unlimited.
    pub rate_mva: f64,
    pub rate_b: f64,
    pub rate_c: f64,
    pub in_service: bool,
    /// Angle-difference limits, radians. Preserved, not enforced.
    pub ang_min: f64,
    pub ang_max: f64,
    pub extra: Vec<f64>,
}

impl Branch {
    pub fn is_limited(&self) -> bool {
        self.in_service && self.rate_mva > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub branches: Vec<Branch>,
}

impl Network {
    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    pub fn n_gen(&self) -> usize {
        self.generators.len()
    }

    /// Bus id -> position in `buses`.
    pub fn bus_index_map(&self) -> HashMap<usize, usize> {
        self.buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id, i))
            .collect()
    }

    pub fn slack_index(&self) -> Option<usize> {
        self.buses.iter().position(|b| b.kind == BusKind::Slack)
    }

    pub fn p_loads(&self) -> Vec<f64> {
        self.buses.iter().map(|b| b.p_load).collect()
    }

    pub fn q_loads(&self) -> Vec<f64> {
        self.buses.iter().map(|b| b.q_load).collect()
    }

    /// Copy of the network with bus demands replaced.
    pub fn with_loads(&self, p_load: &[f64], q_load: &[f64]) -> Network {
        let mut net = self.clone();
        for ((bus, p), q) in net.buses.iter_mut().zip(p_load).zip(q_load) {
            bus.p_load = *p;
            bus.q_load = *q;
        }
        net
    }
}

/// Resolved index structure of a valid network, shared by the solvers.
#[derive(Debug, Clone)]
pub struct Topology {
    pub n_bus: usize,
    pub n_gen: usize,
    pub slack: usize,
    /// Bus position of every generator.
    pub gen_bus: Vec<usize>,
    /// In-service generators attached to each bus.
    pub gens_at_bus: Vec<Vec<usize>>,
    /// Generator whose voltage setpoint governs each bus, if any.
    pub voltage_gen: Vec<Option<usize>>,
    /// First in-service generator on the slack bus; it absorbs the real-power residual.
    pub slack_gen: Option<usize>,
    pub branch_ends: Vec<(usize, usize)>,
}

impl Topology {
    /// Fails with the validation report when the network is not usable.
    pub fn new(net: &Network) -> Result<Self, Vec<String>> {
        let violations = validate(net);
        if !violations.is_empty() {
            return Err(violations);
        }
        let index = net.bus_index_map();
        let n_bus = net.n_bus();
        let slack = net.slack_index().expect("validated");
        let gen_bus: Vec<usize> = net.generators.iter().map(|g| index[&g.bus_id]).collect();
        let mut gens_at_bus = vec![Vec::new(); n_bus];
        for (g, gen) in net.generators.iter().enumerate() {
            if gen.in_service {
                gens_at_bus[gen_bus[g]].push(g);
            }
        }
        let voltage_gen = (0..n_bus)
            .map(|i| match net.buses[i].kind {
                BusKind::Pq => None,
                _ => gens_at_bus[i].first().copied(),
            })
            .collect();
        let slack_gen = gens_at_bus[slack].first().copied();
        let branch_ends = net
            .branches
            .iter()
            .map(|br| (index[&br.from_bus], index[&br.to_bus]))
            .collect();
        Ok(Self {
            n_bus,
            n_gen: net.n_gen(),
            slack,
            gen_bus,
            gens_at_bus,
            voltage_gen,
            slack_gen,
            branch_ends,
        })
    }

    /// A bus holds its voltage magnitude in power flow when it is the slack or a
    /// PV bus with an in-service generator.
    pub fn is_voltage_controlled(&self, bus: usize) -> bool {
        bus == self.slack || self.voltage_gen[bus].is_some()
    }
}

/// Voltage magnitude the slack bus is held at.
pub fn slack_voltage(net: &Network, topo: &Topology) -> f64 {
    match topo.slack_gen {
        Some(g) => net.generators[g].v_setpoint,
        None => net.buses[topo.slack].v_init,
    }
}

/// Check every structural invariant; one message per violation.
pub fn validate(net: &Network) -> Vec<String> {
    let mut out = Vec::new();
    if net.buses.is_empty() {
        out.push("network has no buses".to_string());
    }
    if net.generators.is_empty() {
        out.push("network has no generators".to_string());
    }
    if !(net.base_mva > 0.0) || !net.base_mva.is_finite() {
        out.push(format!("base MVA must be positive, got {}", net.base_mva));
    }

    let mut seen = HashSet::new();
    for bus in &net.buses {
        if !seen.insert(bus.id) {
            out.push(format!("duplicate bus id {}", bus.id));
        }
        if bus.v_min > bus.v_max {
            out.push(format!(
                "bus {}: v_min {} exceeds v_max {}",
                bus.id, bus.v_min, bus.v_max
            ));
        }
        if bus.delta_min > bus.delta_max {
            out.push(format!(
                "bus {}: delta_min {} exceeds delta_max {}",
                bus.id, bus.delta_min, bus.delta_max
            ));
        }
    }
    let slacks: Vec<String> = net
        .buses
        .iter()
        .filter(|b| b.kind == BusKind::Slack)
        .map(|b| b.id.to_string())
        .collect();
    match slacks.len() {
        0 if !net.buses.is_empty() => out.push("no slack bus".to_string()),
        0 | 1 => {}
        _ => out.push(format!(
            "expected exactly one slack bus, found {}: buses {}",
            slacks.len(),
            slacks.join(", ")
        )),
    }

    for (g, gen) in net.generators.iter().enumerate() {
        if !seen.contains(&gen.bus_id) {
            out.push(format!(
                "generator {g}: references missing bus {}",
                gen.bus_id
            ));
        }
        if gen.p_min > gen.p_max {
            out.push(format!(
                "generator {g} (bus {}): p_min {} exceeds p_max {}",
                gen.bus_id, gen.p_min, gen.p_max
            ));
        }
        if gen.q_min > gen.q_max {
            out.push(format!(
                "generator {g} (bus {}): q_min {} exceeds q_max {}",
                gen.bus_id, gen.q_min, gen.q_max
            ));
        }
        if gen.cost.coefficients.is_empty() {
            out.push(format!("generator {g}: empty cost polynomial"));
        } else if gen.p_min.is_finite() && gen.p_max.is_finite() {
            let lo = gen.cost.eval(gen.p_min);
            let hi = gen.cost.eval(gen.p_max);
            if !lo.is_finite() || !hi.is_finite() {
                out.push(format!("generator {g}: cost is not finite over its range"));
            }
        }
    }

    for (l, br) in net.branches.iter().enumerate() {
        for end in [br.from_bus, br.to_bus] {
            if !seen.contains(&end) {
                out.push(format!("branch {l}: references missing bus {end}"));
            }
        }
        if br.r < 0.0 {
            out.push(format!("branch {l}: negative resistance {}", br.r));
        }
        if br.r == 0.0 && br.x == 0.0 {
            out.push(format!(
                "branch {l} ({}-{}): zero impedance",
                br.from_bus, br.to_bus
            ));
        }
        if !(br.tap > 0.0) {
            out.push(format!("branch {l}: non-positive tap ratio {}", br.tap));
        }
    }
    out
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn cost_from_mw_coefficients() {
        let c = CostPolynomial::from_mw_coefficients(&[0.02, 2.0, 0.0], 100.0);
        assert!((c.eval(1.0) - 400.0).abs() < 1e-12);
        assert_eq!(c.eval(0.0), 0.0);
        let back = c.to_mw_coefficients(100.0);
        assert!((back[0] - 0.02).abs() < 1e-15 && (back[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn cost_derivatives() {
        let c = CostPolynomial::new(vec![3.0, -2.0, 5.0, 1.0]);
        let p = 0.7;
        let h = 1e-6;
        let fd = (c.eval(p + h) - c.eval(p - h)) / (2.0 * h);
        assert!((c.derivative(p) - fd).abs() < 1e-8);
        let fd2 = (c.derivative(p + h) - c.derivative(p - h)) / (2.0 * h);
        assert!((c.second_derivative(p) - fd2).abs() < 1e-6);
        assert_eq!(CostPolynomial::new(vec![4.0]).derivative(1.0), 0.0);
    }

    #[test]
    fn two_slack_buses_reported_once() {
        let mut net = two_bus(0.5, 0.1);
        net.buses[1].kind = BusKind::Slack;
        let v = validate(&net);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].contains('1') && v[0].contains('2'));
    }

    #[test]
    fn inverted_generator_limits() {
        let mut net = two_bus(0.5, 0.1);
        net.generators[0].p_min = 3.0;
        let v = validate(&net);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].contains("generator 0"));
    }

    #[test]
    fn dangling_references_and_degenerate_branches() {
        let mut net = two_bus(0.5, 0.1);
        net.generators[0].bus_id = 9;
        net.branches[0].x = 0.0;
        net.branches[0].tap = 0.0;
        assert_eq!(validate(&net).len(), 3);
    }

    #[test]
    fn per_unit_round_trip() {
        let base = 100.0f64;
        for mw in [0.0f64, 21.7, 94.2, 1e-3, 313.0, -3.9] {
            let pu = mw / base;
            assert!((pu * base - mw).abs() <= 1e-12 * mw.abs().max(1.0));
        }
    }

    #[test]
    fn topology_resolves_slack_generator() {
        let net = two_bus(0.5, 0.1);
        let topo = Topology::new(&net).unwrap();
        assert_eq!(topo.slack, 0);
        assert_eq!(topo.slack_gen, Some(0));
        assert!(topo.is_voltage_controlled(0));
        assert!(!topo.is_voltage_controlled(1));
        assert_eq!(slack_voltage(&net, &topo), 1.0);
    }
}
