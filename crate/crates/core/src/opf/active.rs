use serde::{Deserialize, Serialize};

use crate::grid::Network;
use crate::powerflow::{PfOptions, PowerFlow, PowerFlowState, SetpointProfile};

use super::ipm::OpfProblem;
use super::{OpfError, OpfSolution};

/// One bit per box-constrained variable, laid out `[P_G | Q_G | V | δ]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActiveSetVector {
    pub bits: Vec<bool>,
}

impl ActiveSetVector {
    pub fn zeros(n_gen: usize, n_bus: usize) -> Self {
        Self {
            bits: vec![false; 2 * n_gen + 2 * n_bus],
        }
    }

    pub fn expected_len(net: &Network) -> usize {
        2 * net.n_gen() + 2 * net.n_bus()
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count_active(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn to_bitstring(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn from_bitstring(s: &str) -> Option<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(|bits| Self { bits })
    }

    pub fn inverted(&self) -> Self {
        Self {
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

/// Initial iterate for a warm-started solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmStartHint {
    pub state0: PowerFlowState,
    pub p_gen0: Vec<f64>,
    pub q_gen0: Vec<f64>,
    pub predicted_active: ActiveSetVector,
}

impl WarmStartHint {
    pub fn check_dims(&self, net: &Network) -> Result<(), OpfError> {
        let checks = [
            (net.n_bus(), self.state0.v_mag.len()),
            (net.n_bus(), self.state0.v_ang.len()),
            (net.n_gen(), self.p_gen0.len()),
            (net.n_gen(), self.q_gen0.len()),
            (ActiveSetVector::expected_len(net), self.predicted_active.len()),
        ];
        for (expected, found) in checks {
            if expected != found {
                return Err(OpfError::DimensionMismatch { expected, found });
            }
        }
        Ok(())
    }
}

fn near_bound(x: f64, lo: f64, hi: f64, eps: f64) -> bool {
    let scale = eps * if lo.is_finite() && hi.is_finite() { (hi - lo).max(1.0) } else { 1.0 };
    (x - lo).abs().min((hi - x).abs()) <= scale || x <= lo || x >= hi
}

pub fn extract_active_set(net: &Network, sol: &OpfSolution, active_eps: f64) -> Result<ActiveSetVector, OpfError> {
    if !sol.converged {
        return Err(OpfError::NotConverged);
    }
    let (n, ng) = (net.n_bus(), net.n_gen());
    let mut out = ActiveSetVector::zeros(ng, n);
    for (g, gen) in net.generators.iter().enumerate() {
        if gen.in_service {
            out.bits[g] = near_bound(sol.p_gen[g], gen.p_min, gen.p_max, active_eps);
            out.bits[ng + g] = near_bound(sol.q_gen[g], gen.q_min, gen.q_max, active_eps);
        }
    }
    for (i, bus) in net.buses.iter().enumerate() {
        out.bits[2 * ng + i] = near_bound(sol.state.v_mag[i], bus.v_min, bus.v_max, active_eps);
        if !bus.has_default_angle_bounds() {
            out.bits[2 * ng + n + i] = near_bound(sol.state.v_ang[i], bus.delta_min, bus.delta_max, active_eps);
        }
    }
    Ok(out)
}

/// Warm-start hint from a predicted active set.
///
/// Unflagged variables keep their cold-start values. A flagged variable starts
/// at whichever of its bounds lies nearer its value in the base-case profile,
/// where the profile is completed by one power flow; ties and a failed power
/// flow resolve to the upper bound.
pub fn warm_start_from_active_set(
    net: &Network,
    pred: &ActiveSetVector,
    base_sp: &SetpointProfile,
) -> Result<WarmStartHint, OpfError> {
    let expected = ActiveSetVector::expected_len(net);
    if pred.len() != expected {
        return Err(OpfError::DimensionMismatch {
            expected,
            found: pred.len(),
        });
    }
    base_sp
        .check_dims(net)
        .map_err(|_| OpfError::DimensionMismatch {
            expected: net.n_gen(),
            found: base_sp.p_gen.len(),
        })?;
    let problem = OpfProblem::new(net)?;
    let (n, ng) = (net.n_bus(), net.n_gen());

    let base = PowerFlow::new(net)
        .ok()
        .and_then(|pf| pf.solve(base_sp, &PfOptions::default(), None).ok());
    let reference = |full: usize| -> Option<f64> {
        let b = base.as_ref()?;
        Some(if full < n {
            b.state.v_ang[full]
        } else if full < 2 * n {
            b.state.v_mag[full - n]
        } else if full < 2 * n + ng {
            b.p_gen[full - 2 * n]
        } else {
            b.q_gen[full - 2 * n - ng]
        })
    };

    let bit_of = |full: usize| -> bool {
        if full < n {
            pred.bits[2 * ng + n + full]
        } else if full < 2 * n {
            pred.bits[2 * ng + full - n]
        } else {
            // P and Q bits sit in the same order as their variables.
            pred.bits[full - 2 * n]
        }
    };

    let nfull = 2 * n + 2 * ng;
    let mut x = vec![0.0; nfull];
    for (k, xk) in x.iter_mut().enumerate() {
        *xk = problem.midpoint(k);
        if !problem.is_free(k) || !bit_of(k) {
            continue;
        }
        let (lo, hi) = problem.bounds(k);
        *xk = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => match reference(k) {
                Some(r) if (r - lo).abs() < (hi - r).abs() => lo,
                _ => hi,
            },
            (true, false) => lo,
            (false, true) => hi,
            (false, false) => *xk,
        };
    }
    Ok(WarmStartHint {
        state0: PowerFlowState {
            v_ang: x[..n].to_vec(),
            v_mag: x[n..2 * n].to_vec(),
        },
        p_gen0: x[2 * n..2 * n + ng].to_vec(),
        q_gen0: x[2 * n + ng..].to_vec(),
        predicted_active: pred.clone(),
    })
}
