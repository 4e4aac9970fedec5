//! Primal-dual interior-point method in the style of MATPOWER's MIPS.
//!
//! Decision variables are the full vector `[θ; V; Pg; Qg]`; the slack angle, the
//! slack magnitude, out-of-service units and any variable with equal bounds are
//! held fixed and removed from the Newton system. Box bounds become linear
//! inequalities and branch limits are `|S|² − S_max² ≤ 0` at both ends.

use crate::equations::{end_flow, injection_hessian, injection_jacobian, EndFlow};
use crate::grid::{slack_voltage, Network, Topology};
use crate::linalg::{CachedSparseSolver, Triplets};
use crate::powerflow::PowerFlowState;
use crate::ybus::{build_admittance, AdmittanceMatrix};

use super::{evaluate_cost, OpfError, OpfOptions, OpfSolution, WarmStartHint};

/// Objective multiplier inside the solver; keeps cost gradients comparable to
/// power mismatches in p.u.
const COST_SCALE: f64 = 1e-4;
const Z0: f64 = 1.0;
const MIN_SLACK: f64 = 1e-10;
/// Upper limit on starting multipliers; tiny warm-start slacks would otherwise
/// begin with multipliers of order 1/active_eps.
const MU_CAP: f64 = 1e2;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Ineq {
    /// `x[col] − bound ≤ 0`
    Upper { col: usize, full: usize, bound: f64 },
    /// `bound − x[col] ≤ 0`
    Lower { col: usize, full: usize, bound: f64 },
    /// Apparent power at one end of a branch.
    Flow { branch: usize, to_end: bool, smax2: f64 },
}

/// Values and first derivatives at one iterate.
struct Point {
    f: f64,
    df: Vec<f64>,
    g: Vec<f64>,
    /// Constraint Jacobian rows shifted by `nx`, in the KKT coordinate system.
    dg: Triplets,
    h: Vec<f64>,
    dh: Vec<Vec<(usize, f64)>>,
    flows: Vec<Option<EndFlow>>,
}

/// Starting iterate of one solve.
#[derive(Debug, Clone)]
pub(crate) struct StartPoint {
    pub x_full: Vec<f64>,
    /// Variables (full index) expected to finish at a bound.
    pub active: Vec<bool>,
}

/// One ACOPF instance with its variable layout resolved.
#[derive(Debug, Clone)]
pub struct OpfProblem<'a> {
    net: &'a Network,
    topo: Topology,
    y: AdmittanceMatrix,
    col_map: Vec<Option<usize>>,
    free: Vec<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    fixed: Vec<f64>,
    ineq: Vec<Ineq>,
}

impl<'a> OpfProblem<'a> {
    pub fn new(net: &'a Network) -> Result<Self, OpfError> {
        let topo = Topology::new(net).map_err(OpfError::InvalidNetwork)?;
        let y = build_admittance(net)?;
        let (n, ng) = (topo.n_bus, topo.n_gen);
        let nfull = 2 * n + 2 * ng;
        let mut lower = vec![f64::NEG_INFINITY; nfull];
        let mut upper = vec![f64::INFINITY; nfull];
        let mut fixed: Vec<Option<f64>> = vec![None; nfull];

        for (i, bus) in net.buses.iter().enumerate() {
            if !bus.has_default_angle_bounds() {
                lower[i] = bus.delta_min;
                upper[i] = bus.delta_max;
            }
            lower[n + i] = bus.v_min;
            upper[n + i] = bus.v_max;
        }
        fixed[topo.slack] = Some(0.0);
        fixed[n + topo.slack] = Some(slack_voltage(net, &topo));
        for (g, gen) in net.generators.iter().enumerate() {
            let (p, q) = (2 * n + g, 2 * n + ng + g);
            if gen.in_service {
                lower[p] = gen.p_min;
                upper[p] = gen.p_max;
                lower[q] = gen.q_min;
                upper[q] = gen.q_max;
            } else {
                fixed[p] = Some(0.0);
                fixed[q] = Some(0.0);
            }
        }
        for k in 0..nfull {
            if fixed[k].is_none() && upper[k] - lower[k] <= 0.0 {
                fixed[k] = Some(lower[k]);
            }
        }

        let mut col_map = vec![None; nfull];
        let mut free = Vec::new();
        for k in 0..nfull {
            if fixed[k].is_none() {
                col_map[k] = Some(free.len());
                free.push(k);
            }
        }

        let mut ineq = Vec::new();
        for (col, &full) in free.iter().enumerate() {
            if upper[full].is_finite() {
                ineq.push(Ineq::Upper { col, full, bound: upper[full] });
            }
        }
        for (col, &full) in free.iter().enumerate() {
            if lower[full].is_finite() {
                ineq.push(Ineq::Lower { col, full, bound: lower[full] });
            }
        }
        for (l, br) in net.branches.iter().enumerate() {
            if br.in_service && br.is_limited() {
                let smax = br.rate_mva / net.base_mva;
                for to_end in [false, true] {
                    ineq.push(Ineq::Flow { branch: l, to_end, smax2: smax * smax });
                }
            }
        }

        Ok(Self {
            net,
            topo,
            y,
            col_map,
            free,
            lower,
            upper,
            fixed: fixed.into_iter().map(|v| v.unwrap_or(0.0)).collect(),
            ineq,
        })
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn n_inequalities(&self) -> usize {
        self.ineq.len()
    }

    fn n(&self) -> usize {
        self.topo.n_bus
    }

    fn ng(&self) -> usize {
        self.topo.n_gen
    }

    pub(crate) fn bounds(&self, full: usize) -> (f64, f64) {
        (self.lower[full], self.upper[full])
    }

    pub(crate) fn is_free(&self, full: usize) -> bool {
        self.col_map[full].is_some()
    }

    /// Cold-start value of one variable: the bound midpoint, zero when unbounded.
    pub(crate) fn midpoint(&self, full: usize) -> f64 {
        if !self.is_free(full) {
            return self.fixed[full];
        }
        let (lo, hi) = (self.lower[full], self.upper[full]);
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo,
            (false, true) => hi,
            (false, false) => 0.0,
        }
    }

    pub(crate) fn cold_start(&self) -> StartPoint {
        let nfull = self.fixed.len();
        StartPoint {
            x_full: (0..nfull).map(|k| self.midpoint(k)).collect(),
            active: vec![false; nfull],
        }
    }

    pub(crate) fn start_from_hint(&self, hint: &WarmStartHint) -> StartPoint {
        let (n, ng) = (self.n(), self.ng());
        let mut x_full: Vec<f64> = hint
            .state0
            .v_ang
            .iter()
            .chain(&hint.state0.v_mag)
            .chain(&hint.p_gen0)
            .chain(&hint.q_gen0)
            .copied()
            .collect();
        for (k, x) in x_full.iter_mut().enumerate() {
            if !self.is_free(k) {
                *x = self.fixed[k];
            }
        }
        let bits = &hint.predicted_active.bits;
        let mut active = vec![false; x_full.len()];
        for g in 0..ng {
            active[2 * n + g] = bits[g];
            active[2 * n + ng + g] = bits[ng + g];
        }
        for i in 0..n {
            active[n + i] = bits[2 * ng + i];
            active[i] = bits[2 * ng + n + i];
        }
        StartPoint { x_full, active }
    }

    fn to_state(&self, x_full: &[f64]) -> PowerFlowState {
        let n = self.n();
        PowerFlowState {
            v_ang: x_full[..n].to_vec(),
            v_mag: x_full[n..2 * n].to_vec(),
        }
    }

    fn evaluate(&self, x: &[f64], want_flow_hessian: bool) -> Point {
        let (n, ng) = (self.n(), self.ng());
        let nx = self.free.len();
        let (th, v) = (&x[..n], &x[n..2 * n]);
        let (pg, qg) = (&x[2 * n..2 * n + ng], &x[2 * n + ng..]);

        let mut f = 0.0;
        let mut df = vec![0.0; nx];
        for (g, gen) in self.net.generators.iter().enumerate() {
            if !gen.in_service {
                continue;
            }
            f += COST_SCALE * gen.cost.eval(pg[g]);
            if let Some(c) = self.col_map[2 * n + g] {
                df[c] = COST_SCALE * gen.cost.derivative(pg[g]);
            }
        }

        let (p_inj, q_inj) = crate::equations::injections(&self.y, v, th);
        let mut g = vec![0.0; 2 * n];
        for i in 0..n {
            g[i] = p_inj[i] + self.net.buses[i].p_load;
            g[n + i] = q_inj[i] + self.net.buses[i].q_load;
        }
        let row_map: Vec<Option<usize>> = (0..2 * n).map(|r| Some(nx + r)).collect();
        let mut dg = injection_jacobian(&self.y, v, th, &row_map, &self.col_map, nx + 2 * n);
        for gi in 0..ng {
            let b = self.topo.gen_bus[gi];
            g[b] -= pg[gi];
            g[n + b] -= qg[gi];
            if let Some(c) = self.col_map[2 * n + gi] {
                dg.push(nx + b, c, -1.0);
            }
            if let Some(c) = self.col_map[2 * n + ng + gi] {
                dg.push(nx + n + b, c, -1.0);
            }
        }

        let mut h = Vec::with_capacity(self.ineq.len());
        let mut dh = Vec::with_capacity(self.ineq.len());
        let mut flows = Vec::with_capacity(self.ineq.len());
        for iq in &self.ineq {
            match *iq {
                Ineq::Upper { col, full, bound } => {
                    h.push(x[full] - bound);
                    dh.push(vec![(col, 1.0)]);
                    flows.push(None);
                }
                Ineq::Lower { col, full, bound } => {
                    h.push(bound - x[full]);
                    dh.push(vec![(col, -1.0)]);
                    flows.push(None);
                }
                Ineq::Flow { branch, to_end, smax2 } => {
                    let (e, map) = self.end_flow(x, branch, to_end, want_flow_hessian);
                    h.push(e.p * e.p + e.q * e.q - smax2);
                    let mut row = Vec::with_capacity(4);
                    for s in 0..4 {
                        if let Some(c) = map[s] {
                            row.push((c, 2.0 * (e.p * e.dp[s] + e.q * e.dq[s])));
                        }
                    }
                    dh.push(row);
                    flows.push(Some(e));
                }
            }
        }
        Point { f, df, g, dg, h, dh, flows }
    }

    fn end_flow(&self, x: &[f64], branch: usize, to_end: bool, hess: bool) -> (EndFlow, [Option<usize>; 4]) {
        let n = self.n();
        let ba = self.y.branch(branch).expect("limited branches are in service");
        let (a, b, y_self, y_mut) = if to_end {
            (ba.to, ba.from, ba.ytt, ba.ytf)
        } else {
            (ba.from, ba.to, ba.yff, ba.yft)
        };
        let e = end_flow(y_self, y_mut, x[a], x[b], x[n + a], x[n + b], hess);
        let map = [self.col_map[a], self.col_map[b], self.col_map[n + a], self.col_map[n + b]];
        (e, map)
    }

    fn lagrangian_gradient(&self, pt: &Point, lam: &[f64], mu: &[f64]) -> Vec<f64> {
        let nx = self.free.len();
        let mut lx = pt.df.clone();
        for &(r, c, v) in pt.dg.entries() {
            lx[c] += v * lam[r - nx];
        }
        for (row, &m) in pt.dh.iter().zip(mu) {
            for &(c, v) in row {
                lx[c] += v * m;
            }
        }
        lx
    }

    fn lagrangian_hessian(&self, x: &[f64], pt: &Point, lam: &[f64], mu: &[f64], out: &mut Triplets) {
        let n = self.n();
        for (g, gen) in self.net.generators.iter().enumerate() {
            if let Some(c) = self.col_map[2 * n + g] {
                out.push(c, c, COST_SCALE * gen.cost.second_derivative(x[2 * n + g]));
            }
        }
        injection_hessian(&self.y, &x[n..2 * n], &x[..n], &lam[..n], &lam[n..], &self.col_map, out);
        for (j, iq) in self.ineq.iter().enumerate() {
            let Ineq::Flow { branch, to_end, .. } = *iq else { continue };
            let e = pt.flows[j].as_ref().expect("flow evaluated");
            let (_, map) = self.end_flow(x, branch, to_end, false);
            let w = mu[j];
            for a in 0..4 {
                let Some(ca) = map[a] else { continue };
                for b in 0..4 {
                    let Some(cb) = map[b] else { continue };
                    let hab = 2.0
                        * (e.dp[a] * e.dp[b] + e.dq[a] * e.dq[b] + e.p * e.hp[a][b] + e.q * e.hq[a][b]);
                    out.push(ca, cb, w * hab);
                }
            }
        }
    }

    fn solution(&self, x: &[f64], converged: bool, iterations: usize, resid: f64, hist: Vec<f64>) -> OpfSolution {
        let (n, ng) = (self.n(), self.ng());
        let p_gen = x[2 * n..2 * n + ng].to_vec();
        OpfSolution {
            state: self.to_state(x),
            objective: evaluate_cost(&self.net.generators, &p_gen),
            p_gen,
            q_gen: x[2 * n + ng..].to_vec(),
            converged,
            iterations,
            kkt_residual: resid,
            barrier_history: hist,
        }
    }

    pub(crate) fn solve_from(&self, opts: &OpfOptions, start: &StartPoint) -> Result<OpfSolution, OpfError> {
        opts.validate()?;
        let nx = self.free.len();
        let neq = 2 * self.n();
        let niq = self.ineq.len();
        let mut x = start.x_full.clone();
        let mut pt = self.evaluate(&x, true);

        // Slacks of inequalities expected to bind start just off zero.
        let eps = opts.active_eps.max(MIN_SLACK);
        let mut z: Vec<f64> = self
            .ineq
            .iter()
            .zip(&pt.h)
            .map(|(iq, &h)| match *iq {
                Ineq::Upper { full, bound, .. } | Ineq::Lower { full, bound, .. }
                    if start.active[full] && self.predicted_side(full, bound, start.x_full[full]) =>
                {
                    eps
                }
                _ => Z0.max(-h),
            })
            .collect();
        let mut gamma = 1.0;
        let mut mu: Vec<f64> = z.iter().map(|&zj| (gamma / zj).clamp(Z0, MU_CAP)).collect();
        let mut lam = vec![0.0; neq];
        let mut f_prev = pt.f;
        let mut hist = Vec::new();
        let mut solver = CachedSparseSolver::default();
        let mut iterations = 0;

        loop {
            let lx = self.lagrangian_gradient(&pt, &lam, &mu);
            let x_norm = self.free.iter().map(|&k| x[k].abs()).fold(0.0, f64::max);
            let g_norm = inf_norm(&pt.g);
            let h_max = pt.h.iter().copied().fold(0.0, f64::max);
            let feas = g_norm.max(h_max);
            let grad = inf_norm(&lx) / (1.0 + inf_norm(&lam).max(inf_norm(&mu)));
            let comp = dot(&z, &mu) / (1.0 + x_norm);
            let cost = (pt.f - f_prev).abs() / (1.0 + f_prev.abs());
            let resid = feas.max(grad).max(comp).max(cost);

            if !resid.is_finite() || x_norm > 1e10 {
                return Err(self.fail("numerical failure", &x, iterations, f64::INFINITY, hist));
            }
            // The flow limits are quadratic in |S|, so their slack is held much tighter
            // than the balance residual.
            if feas <= opts.kkt_tol && h_max <= 1e-3 * opts.kkt_tol && grad <= opts.kkt_tol && comp <= opts.kkt_tol && cost <= opts.kkt_tol {
                return Ok(self.solution(&x, true, iterations, resid, hist));
            }
            if iterations >= opts.max_iter {
                return Err(self.fail("iteration limit reached", &x, iterations, resid, hist));
            }

            let mut kkt = Triplets::with_capacity(nx + neq, 4 * pt.dg.entries().len() + 8 * nx);
            self.lagrangian_hessian(&x, &pt, &lam, &mu, &mut kkt);
            let mut rhs = vec![0.0; nx + neq];
            for c in 0..nx {
                rhs[c] = -lx[c];
            }
            for j in 0..niq {
                let w = mu[j] / z[j];
                let shift = (mu[j] * pt.h[j] + gamma) / z[j];
                let row = &pt.dh[j];
                for &(a, va) in row {
                    rhs[a] -= va * shift;
                    for &(b, vb) in row {
                        kkt.push(a, b, w * va * vb);
                    }
                }
            }
            for &(r, c, v) in pt.dg.entries() {
                kkt.push(r, c, v);
                kkt.push(c, r, v);
            }
            for r in 0..neq {
                rhs[nx + r] = -pt.g[r];
            }
            let step = match solver.solve(&kkt, &rhs) {
                Ok(s) if s.iter().all(|v| v.is_finite()) => s,
                _ => return Err(self.fail("singular KKT system", &x, iterations, resid, hist)),
            };
            let (dx, dlam) = step.split_at(nx);

            let mut dz = vec![0.0; niq];
            let mut dmu = vec![0.0; niq];
            for j in 0..niq {
                let dhdx: f64 = pt.dh[j].iter().map(|&(c, v)| v * dx[c]).sum();
                dz[j] = -pt.h[j] - z[j] - dhdx;
                dmu[j] = -mu[j] + (gamma - mu[j] * dz[j]) / z[j];
            }
            let xi = opts.step_fraction;
            let alpha_p = boundary_step(&z, &dz, xi);
            let alpha_d = boundary_step(&mu, &dmu, xi);

            for (c, &k) in self.free.iter().enumerate() {
                x[k] += alpha_p * dx[c];
            }
            for j in 0..niq {
                z[j] += alpha_p * dz[j];
                mu[j] += alpha_d * dmu[j];
            }
            for r in 0..neq {
                lam[r] += alpha_d * dlam[r];
            }
            if niq > 0 {
                gamma = gamma.min(opts.barrier_reduction * dot(&z, &mu) / niq as f64);
            }
            hist.push(gamma);
            iterations += 1;
            f_prev = pt.f;
            pt = self.evaluate(&x, true);
        }
    }

    fn predicted_side(&self, full: usize, bound: f64, x0: f64) -> bool {
        let (lo, hi) = self.bounds(full);
        let other = if bound == hi { lo } else { hi };
        !other.is_finite() || (x0 - bound).abs() <= (x0 - other).abs()
    }

    fn fail(&self, reason: &str, x: &[f64], iterations: usize, resid: f64, hist: Vec<f64>) -> OpfError {
        OpfError::Infeasible {
            reason: reason.to_string(),
            best: Box::new(self.solution(x, false, iterations, resid, hist)),
        }
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest step in (0, 1] keeping `v + α·dv` positive, shortened by `xi`.
fn boundary_step(v: &[f64], dv: &[f64], xi: f64) -> f64 {
    let mut alpha: f64 = 1.0;
    for (&a, &d) in v.iter().zip(dv) {
        if d < 0.0 {
            alpha = alpha.min(xi * a / -d);
        }
    }
    alpha
}

/// Solve the ACOPF for `net`, cold or from a warm-start hint.
pub fn solve_acopf(net: &Network, opts: &OpfOptions, warm: Option<&WarmStartHint>) -> Result<OpfSolution, OpfError> {
    let problem = OpfProblem::new(net)?;
    let start = match warm {
        None => problem.cold_start(),
        Some(hint) => {
            hint.check_dims(net)?;
            problem.start_from_hint(hint)
        }
    };
    problem.solve_from(opts, &start)
}
