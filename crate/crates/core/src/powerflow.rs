//! Newton-Raphson AC power flow in polar coordinates.
//!
//! Unknowns are the angles of every non-slack bus and the magnitudes of the
//! buses that do not hold their voltage. Reactive limits are not enforced;
//! generators report whatever reactive output the solution requires.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equations::{injection_jacobian, injections};
use crate::grid::{slack_voltage, Network, Topology};
use crate::linalg::{CachedSparseSolver, LinalgError};
use crate::ybus::{build_admittance, AdmittanceError, AdmittanceMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowState {
    pub v_mag: Vec<f64>,
    pub v_ang: Vec<f64>,
}

impl PowerFlowState {
    pub fn flat(n: usize) -> Self {
        Self {
            v_mag: vec![1.0; n],
            v_ang: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.v_mag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_mag.is_empty()
    }
}

/// Controls and demands handed to the power flow. `p_gen` and `v_gen` are
/// indexed like `Network::generators`; the slack generator's real output is
/// ignored because the solution determines it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetpointProfile {
    pub p_gen: Vec<f64>,
    pub v_gen: Vec<f64>,
    pub p_load: Vec<f64>,
    pub q_load: Vec<f64>,
}

impl SetpointProfile {
    /// Case-file dispatch, voltage setpoints and demand.
    pub fn from_network(net: &Network) -> Self {
        Self {
            p_gen: net.generators.iter().map(|g| g.p_init).collect(),
            v_gen: net.generators.iter().map(|g| g.v_setpoint).collect(),
            p_load: net.p_loads(),
            q_load: net.q_loads(),
        }
    }

    pub fn check_dims(&self, net: &Network) -> Result<(), PowerFlowError> {
        let expect = [net.n_gen(), net.n_gen(), net.n_bus(), net.n_bus()];
        let found = [
            self.p_gen.len(),
            self.v_gen.len(),
            self.p_load.len(),
            self.q_load.len(),
        ];
        if expect != found {
            return Err(PowerFlowError::DimensionMismatch {
                expected: expect.to_vec(),
                found: found.to_vec(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchFlow {
    /// Complex power leaving the from end, p.u.
    pub from: Complex64,
    /// Complex power leaving the to end, p.u.
    pub to: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowSolution {
    pub state: PowerFlowState,
    /// Real output per generator, the slack generator's entry recovered.
    pub p_gen: Vec<f64>,
    pub q_gen: Vec<f64>,
    pub p_slack: f64,
    pub branch_flows: Vec<BranchFlow>,
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PfOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PfOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PowerFlowError {
    #[error("invalid network: {}", .0.join("; "))]
    InvalidNetwork(Vec<String>),
    #[error(transparent)]
    Admittance(#[from] AdmittanceError),
    #[error("setpoint dimensions {found:?} do not match network {expected:?}")]
    DimensionMismatch { expected: Vec<usize>, found: Vec<usize> },
    #[error("power flow diverged after {} iterations (mismatch {:.3e})", .best.iterations, .best.max_mismatch)]
    Diverged { best: Box<PowerFlowSolution> },
    #[error("singular Jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },
}

/// Bus injections P_i(V, δ), Q_i(V, δ).
pub fn compute_injections(y: &AdmittanceMatrix, state: &PowerFlowState) -> (Vec<f64>, Vec<f64>) {
    injections(y, &state.v_mag, &state.v_ang)
}

/// Complex power at both ends of every branch; out-of-service branches carry nothing.
pub fn branch_flows(y: &AdmittanceMatrix, n_branches: usize, state: &PowerFlowState) -> Vec<BranchFlow> {
    let zero = Complex64::new(0.0, 0.0);
    (0..n_branches)
        .map(|l| match y.branch(l) {
            None => BranchFlow { from: zero, to: zero },
            Some(ba) => {
                let vf = Complex64::from_polar(state.v_mag[ba.from], state.v_ang[ba.from]);
                let vt = Complex64::from_polar(state.v_mag[ba.to], state.v_ang[ba.to]);
                BranchFlow {
                    from: vf * (ba.yff * vf + ba.yft * vt).conj(),
                    to: vt * (ba.ytf * vf + ba.ytt * vt).conj(),
                }
            }
        })
        .collect()
}

/// Real power dissipated in branches and shunts.
pub fn network_losses(net: &Network, state: &PowerFlowState, flows: &[BranchFlow]) -> f64 {
    let series: f64 = flows.iter().map(|f| f.from.re + f.to.re).sum();
    let shunt: f64 = net
        .buses
        .iter()
        .zip(&state.v_mag)
        .map(|(b, v)| b.g_shunt * v * v)
        .sum();
    series + shunt
}

/// Reusable power-flow engine for one network topology.
#[derive(Debug, Clone)]
pub struct PowerFlow<'a> {
    net: &'a Network,
    topo: Topology,
    y: AdmittanceMatrix,
}

impl<'a> PowerFlow<'a> {
    pub fn new(net: &'a Network) -> Result<Self, PowerFlowError> {
        let topo = Topology::new(net).map_err(PowerFlowError::InvalidNetwork)?;
        let y = build_admittance(net)?;
        Ok(Self { net, topo, y })
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn admittance(&self) -> &AdmittanceMatrix {
        &self.y
    }

    /// Flat start: unit magnitudes, zero angles, controlled buses at their setpoints.
    pub fn flat_state(&self, sp: &SetpointProfile) -> PowerFlowState {
        let mut state = PowerFlowState::flat(self.topo.n_bus);
        self.apply_held_values(&mut state, sp);
        state
    }

    fn apply_held_values(&self, state: &mut PowerFlowState, sp: &SetpointProfile) {
        let topo = &self.topo;
        for i in 0..topo.n_bus {
            if let Some(g) = topo.voltage_gen[i] {
                state.v_mag[i] = sp.v_gen[g];
            }
        }
        if topo.voltage_gen[topo.slack].is_none() {
            state.v_mag[topo.slack] = slack_voltage(self.net, topo);
        }
        state.v_ang[topo.slack] = 0.0;
    }

    /// Net scheduled injections at every bus.
    fn scheduled(&self, sp: &SetpointProfile) -> (Vec<f64>, Vec<f64>) {
        let topo = &self.topo;
        let mut p = vec![0.0; topo.n_bus];
        let mut q = vec![0.0; topo.n_bus];
        for i in 0..topo.n_bus {
            p[i] = -sp.p_load[i];
            q[i] = -sp.q_load[i];
            for &g in &topo.gens_at_bus[i] {
                p[i] += sp.p_gen[g];
                if !topo.is_voltage_controlled(i) {
                    q[i] += self.net.generators[g].q_init;
                }
            }
        }
        (p, q)
    }

    pub fn solve(
        &self,
        sp: &SetpointProfile,
        opts: &PfOptions,
        init: Option<&PowerFlowState>,
    ) -> Result<PowerFlowSolution, PowerFlowError> {
        sp.check_dims(self.net)?;
        let topo = &self.topo;
        let n = topo.n_bus;
        let mut state = match init {
            Some(s) if s.len() == n => s.clone(),
            _ => PowerFlowState::flat(n),
        };
        self.apply_held_values(&mut state, sp);

        // Unknown layout: θ for non-slack buses, then V for buses that do not hold voltage.
        let mut col_map = vec![None; 2 * n];
        let mut dim = 0;
        for i in (0..n).filter(|&i| i != topo.slack) {
            col_map[i] = Some(dim);
            dim += 1;
        }
        for i in (0..n).filter(|&i| !topo.is_voltage_controlled(i)) {
            col_map[n + i] = Some(dim);
            dim += 1;
        }
        // Mismatch equations share the layout: P rows for θ unknowns, Q rows for V unknowns.
        let row_map = col_map.clone();
        let (p_sched, q_sched) = self.scheduled(sp);

        let mismatch = |state: &PowerFlowState| -> (Vec<f64>, f64) {
            let (p, q) = compute_injections(&self.y, state);
            let mut f = vec![0.0; dim];
            for i in 0..n {
                if let Some(r) = row_map[i] {
                    f[r] = p[i] - p_sched[i];
                }
                if let Some(r) = row_map[n + i] {
                    f[r] = q[i] - q_sched[i];
                }
            }
            let norm = f.iter().fold(0.0f64, |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) });
            (f, norm)
        };

        let mut solver = CachedSparseSolver::default();
        let (mut f, mut norm) = mismatch(&state);
        let mut best = (state.clone(), norm, 0usize);
        let mut iterations = 0;
        let mut converged = norm <= opts.tol;
        while !converged && iterations < opts.max_iter && norm.is_finite() {
            let jac = injection_jacobian(&self.y, &state.v_mag, &state.v_ang, &row_map, &col_map, dim);
            let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
            let dx = match solver.solve(&jac, &rhs) {
                Ok(dx) => dx,
                Err(LinalgError::Singular { .. }) | Err(LinalgError::Dimension { .. }) => {
                    return Err(PowerFlowError::SingularJacobian {
                        iteration: iterations,
                    })
                }
            };
            for i in 0..n {
                if let Some(c) = col_map[i] {
                    state.v_ang[i] += dx[c];
                }
                if let Some(c) = col_map[n + i] {
                    state.v_mag[i] += dx[c];
                }
            }
            iterations += 1;
            (f, norm) = mismatch(&state);
            if norm < best.1 {
                best = (state.clone(), norm, iterations);
            }
            converged = norm <= opts.tol;
        }

        if converged {
            Ok(self.assemble(state, sp, iterations, norm, true))
        } else {
            let (state, norm, _) = best;
            let norm = if norm.is_finite() { norm } else { f64::INFINITY };
            Err(PowerFlowError::Diverged {
                best: Box::new(self.assemble(state, sp, iterations, norm, false)),
            })
        }
    }

    fn assemble(
        &self,
        state: PowerFlowState,
        sp: &SetpointProfile,
        iterations: usize,
        max_mismatch: f64,
        converged: bool,
    ) -> PowerFlowSolution {
        let topo = &self.topo;
        let gens = &self.net.generators;
        let (p_inj, q_inj) = compute_injections(&self.y, &state);
        let mut p_gen: Vec<f64> = gens
            .iter()
            .zip(&sp.p_gen)
            .map(|(g, p)| if g.in_service { *p } else { 0.0 })
            .collect();
        let mut q_gen = vec![0.0; gens.len()];

        let mut p_slack = 0.0;
        if let Some(sg) = topo.slack_gen {
            let s = topo.slack;
            let others: f64 = topo.gens_at_bus[s].iter().filter(|&&g| g != sg).map(|&g| sp.p_gen[g]).sum();
            p_slack = p_inj[s] + sp.p_load[s] - others;
            p_gen[sg] = p_slack;
        }

        for i in 0..topo.n_bus {
            let at_bus = &topo.gens_at_bus[i];
            if at_bus.is_empty() {
                continue;
            }
            if !topo.is_voltage_controlled(i) {
                for &g in at_bus {
                    q_gen[g] = gens[g].q_init;
                }
                continue;
            }
            let total = q_inj[i] + sp.q_load[i];
            // Share in proportion to reactive range, measured up from each lower limit, so
            // every unit is within its limits exactly when the bus total is.
            let ranges: Vec<f64> = at_bus.iter().map(|&g| gens[g].q_max - gens[g].q_min).collect();
            let range_sum: f64 = ranges.iter().sum();
            let qmin_sum: f64 = at_bus.iter().map(|&g| gens[g].q_min).sum();
            if at_bus.len() == 1 {
                q_gen[at_bus[0]] = total;
            } else if range_sum > 0.0 && range_sum.is_finite() && qmin_sum.is_finite() {
                for (k, &g) in at_bus.iter().enumerate() {
                    q_gen[g] = gens[g].q_min + (total - qmin_sum) * ranges[k] / range_sum;
                }
            } else {
                for &g in at_bus {
                    q_gen[g] = total / at_bus.len() as f64;
                }
            }
        }

        let flows = branch_flows(&self.y, self.net.branches.len(), &state);
        PowerFlowSolution {
            state,
            p_gen,
            q_gen,
            p_slack,
            branch_flows: flows,
            converged,
            iterations,
            max_mismatch,
        }
    }
}

/// Solve the power flow for one setpoint profile from a flat start.
pub fn solve_newton(
    net: &Network,
    sp: &SetpointProfile,
    opts: &PfOptions,
) -> Result<PowerFlowSolution, PowerFlowError> {
    PowerFlow::new(net)?.solve(sp, opts, None)
}
