use std::fmt;

use serde::{Deserialize, Serialize};

use crate::grid::Network;
use crate::powerflow::{PfOptions, PowerFlow, SetpointProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstraintId {
    GenP(usize),
    GenQ(usize),
    BusV(usize),
    BusAngle(usize),
    BranchFrom(usize),
    BranchTo(usize),
}

impl fmt::Display for ConstraintId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::GenP(g) => write!(f, "generator {g} real power"),
            Self::GenQ(g) => write!(f, "generator {g} reactive power"),
            Self::BusV(i) => write!(f, "bus {i} voltage magnitude"),
            Self::BusAngle(i) => write!(f, "bus {i} voltage angle"),
            Self::BranchFrom(l) => write!(f, "branch {l} from-end flow"),
            Self::BranchTo(l) => write!(f, "branch {l} to-end flow"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundSide {
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: ConstraintId,
    pub bound: BoundSide,
    pub value: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegalityReport {
    pub legal: bool,
    pub violations: Vec<Violation>,
    pub pf_converged: bool,
    /// Unit outputs recovered by the power flow, slack included; empty if it failed.
    pub p_gen: Vec<f64>,
}

struct Checker {
    tol_rel: f64,
    violations: Vec<Violation>,
}

impl Checker {
    fn slack(&self, limit: f64) -> f64 {
        self.tol_rel * limit.abs().max(1.0)
    }

    fn range(&mut self, id: ConstraintId, value: f64, lo: f64, hi: f64) {
        if value < lo - self.slack(lo) {
            self.violations.push(Violation { constraint: id, bound: BoundSide::Lower, value, limit: lo });
        }
        if value > hi + self.slack(hi) {
            self.violations.push(Violation { constraint: id, bound: BoundSide::Upper, value, limit: hi });
        }
    }
}

/// Recover the full state from `sp` by power flow and check every operational limit.
///
/// A value is in violation when it passes its limit by more than
/// `tol_rel · max(1, |limit|)`.
pub fn check_legality(net: &Network, sp: &SetpointProfile, tol_rel: f64) -> LegalityReport {
    let illegal = LegalityReport {
        legal: false,
        violations: Vec::new(),
        pf_converged: false,
        p_gen: Vec::new(),
    };
    let Ok(pf) = PowerFlow::new(net) else { return illegal };
    let sol = match pf.solve(sp, &PfOptions::default(), None) {
        Ok(sol) => sol,
        Err(_) => return illegal,
    };
    let mut c = Checker {
        tol_rel,
        violations: Vec::new(),
    };
    for (g, gen) in net.generators.iter().enumerate() {
        if !gen.in_service {
            continue;
        }
        c.range(ConstraintId::GenP(g), sol.p_gen[g], gen.p_min, gen.p_max);
        c.range(ConstraintId::GenQ(g), sol.q_gen[g], gen.q_min, gen.q_max);
    }
    for (i, bus) in net.buses.iter().enumerate() {
        c.range(ConstraintId::BusV(i), sol.state.v_mag[i], bus.v_min, bus.v_max);
        if !bus.has_default_angle_bounds() {
            c.range(ConstraintId::BusAngle(i), sol.state.v_ang[i], bus.delta_min, bus.delta_max);
        }
    }
    for (l, (br, flow)) in net.branches.iter().zip(&sol.branch_flows).enumerate() {
        if !(br.in_service && br.is_limited()) {
            continue;
        }
        let smax = br.rate_mva / net.base_mva;
        c.range(ConstraintId::BranchFrom(l), flow.from.norm(), f64::NEG_INFINITY, smax);
        c.range(ConstraintId::BranchTo(l), flow.to.norm(), f64::NEG_INFINITY, smax);
    }
    LegalityReport {
        legal: c.violations.is_empty(),
        violations: c.violations,
        pf_converged: true,
        p_gen: sol.p_gen,
    }
}
