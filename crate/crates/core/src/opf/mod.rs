//! AC optimal power flow: a primal-dual interior-point solver over the polar
//! formulation with apparent-power branch limits, plus active-set extraction,
//! warm starts built from predicted active sets, and legality checking of
//! setpoint profiles.

mod active;
mod ipm;
mod legality;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Generator, Network};
use crate::powerflow::{PowerFlowState, SetpointProfile};
use crate::ybus::AdmittanceError;

pub use active::{extract_active_set, warm_start_from_active_set, ActiveSetVector, WarmStartHint};
pub use ipm::{solve_acopf, OpfProblem};
pub use legality::{check_legality, BoundSide, ConstraintId, LegalityReport, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpfOptions {
    pub kkt_tol: f64,
    pub max_iter: usize,
    pub barrier_reduction: f64,
    pub step_fraction: f64,
    pub active_eps: f64,
}

impl Default for OpfOptions {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-6,
            max_iter: 50,
            barrier_reduction: 0.1,
            step_fraction: 0.995,
            active_eps: 1e-5,
        }
    }
}

impl OpfOptions {
    pub fn validate(&self) -> Result<(), OpfError> {
        let ok = self.kkt_tol > 0.0
            && self.barrier_reduction > 0.0
            && self.barrier_reduction < 1.0
            && self.step_fraction > 0.0
            && self.step_fraction < 1.0
            && self.active_eps >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(OpfError::InvalidOptions(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpfSolution {
    pub state: PowerFlowState,
    pub p_gen: Vec<f64>,
    pub q_gen: Vec<f64>,
    /// Total generation cost, $/hr.
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub kkt_residual: f64,
    /// Barrier parameter after every iteration.
    pub barrier_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OpfError {
    #[error("invalid network: {}", .0.join("; "))]
    InvalidNetwork(Vec<String>),
    #[error(transparent)]
    Admittance(#[from] AdmittanceError),
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("solver did not converge: {reason} (iterations {}, residual {:.3e})", .best.iterations, .best.kkt_residual)]
    Infeasible { reason: String, best: Box<OpfSolution> },
    #[error("solution is not converged")]
    NotConverged,
}

/// Σ C_i(P_i) over in-service generators, in $/hr.
pub fn evaluate_cost(gens: &[Generator], p_gen: &[f64]) -> f64 {
    assert_eq!(gens.len(), p_gen.len(), "one dispatch value per generator");
    gens.iter()
        .zip(p_gen)
        .filter(|(g, _)| g.in_service)
        .map(|(g, &p)| g.cost.eval(p))
        .sum()
}

impl SetpointProfile {
    /// Dispatch and generator-bus voltages of an OPF solution, with the network's demand.
    pub fn from_opf(net: &Network, sol: &OpfSolution) -> Self {
        let index = net.bus_index_map();
        Self {
            p_gen: sol.p_gen.clone(),
            v_gen: net
                .generators
                .iter()
                .map(|g| sol.state.v_mag[index[&g.bus_id]])
                .collect(),
            p_load: net.p_loads(),
            q_load: net.q_loads(),
        }
    }
}

/// One solve as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub v_mag: Vec<f64>,
    pub v_ang: Vec<f64>,
    pub p_gen: Vec<f64>,
    pub q_gen: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub active_set: String,
}

impl SolutionRecord {
    pub fn new(sol: &OpfSolution, active: &ActiveSetVector) -> Self {
        Self {
            v_mag: sol.state.v_mag.clone(),
            v_ang: sol.state.v_ang.clone(),
            p_gen: sol.p_gen.clone(),
            q_gen: sol.q_gen.clone(),
            objective: sol.objective,
            iterations: sol.iterations,
            converged: sol.converged,
            active_set: active.to_bitstring(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}
