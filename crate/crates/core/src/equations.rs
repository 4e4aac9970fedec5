//! Polar power-flow equations and their derivatives.
//!
//! Bus injections and branch end flows are all sums of terms
//! `Vi·Vk·(a·cos(θi − θk) + b·sin(θi − θk))`:
//!
//! ```text
//! P_i = Σ_k V_i V_k (G_ik cos θ_ik + B_ik sin θ_ik)
//! Q_i = Σ_k V_i V_k (G_ik sin θ_ik − B_ik cos θ_ik)
//! ```
//!
//! so a single term kernel with its gradient and Hessian over
//! `(θi, θk, Vi, Vk)` covers every Jacobian and Hessian the solvers need. A
//! diagonal term (i = k) is the same kernel with both slots mapped onto one
//! variable; accumulation then sums the partial derivatives correctly.

use crate::linalg::Triplets;
use crate::ybus::AdmittanceMatrix;

/// Coefficients of one term: `a cos θ + b sin θ`.
#[derive(Debug, Clone, Copy)]
pub struct TermCoeffs {
    pub a: f64,
    pub b: f64,
}

impl TermCoeffs {
    /// Real-power part of `conj(y)·e^{jθ}`.
    pub fn real(g: f64, b: f64) -> Self {
        Self { a: g, b }
    }

    /// Reactive-power part of `conj(y)·e^{jθ}`.
    pub fn reactive(g: f64, b: f64) -> Self {
        Self { a: -b, b: g }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub value: f64,
    /// Partial derivatives in the order (θi, θk, Vi, Vk).
    pub grad: [f64; 4],
}

#[inline]
pub fn term(c: TermCoeffs, thi: f64, thk: f64, vi: f64, vk: f64) -> Term {
    let (s, co) = (thi - thk).sin_cos();
    let cv = c.a * co + c.b * s;
    let dc = -c.a * s + c.b * co;
    let vv = vi * vk;
    Term {
        value: vv * cv,
        grad: [vv * dc, -vv * dc, vk * cv, vi * cv],
    }
}

/// Hessian of a term over (θi, θk, Vi, Vk).
#[inline]
pub fn term_hessian(c: TermCoeffs, thi: f64, thk: f64, vi: f64, vk: f64) -> [[f64; 4]; 4] {
    let (s, co) = (thi - thk).sin_cos();
    let cv = c.a * co + c.b * s;
    let dc = -c.a * s + c.b * co;
    let vv = vi * vk;
    let (tt, tvi, tvk) = (-vv * cv, vk * dc, vi * dc);
    [
        [tt, -tt, tvi, tvk],
        [-tt, tt, -tvi, -tvk],
        [tvi, -tvi, 0.0, cv],
        [tvk, -tvk, cv, 0.0],
    ]
}

/// Bus injections P(V, θ), Q(V, θ).
pub fn injections(y: &AdmittanceMatrix, v: &[f64], th: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = y.dimension();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for (i, k, yik) in y.entries() {
        let (s, c) = (th[i] - th[k]).sin_cos();
        let vv = v[i] * v[k];
        p[i] += vv * (yik.re * c + yik.im * s);
        q[i] += vv * (yik.re * s - yik.im * c);
    }
    (p, q)
}

/// Column positions of the variables a term touches, `None` for held values.
pub type VarMap = [Option<usize>; 4];

#[inline]
pub fn scatter_grad(out: &mut Triplets, row: usize, map: &VarMap, grad: &[f64; 4], w: f64) {
    for (slot, col) in map.iter().enumerate() {
        if let Some(c) = *col {
            out.push(row, c, w * grad[slot]);
        }
    }
}

#[inline]
pub fn scatter_hessian(out: &mut Triplets, map: &VarMap, h: &[[f64; 4]; 4], w: f64) {
    for (a, ra) in map.iter().enumerate() {
        let Some(r) = *ra else { continue };
        for (b, cb) in map.iter().enumerate() {
            if let Some(c) = *cb {
                out.push(r, c, w * h[a][b]);
            }
        }
    }
}

/// Jacobian of [P; Q] with respect to the full variable vector [θ; V], as
/// triplets of dimension 2n. Rows and columns are remapped through `rows` /
/// `cols`; entries whose row or column maps to `None` are dropped.
pub fn injection_jacobian(
    y: &AdmittanceMatrix,
    v: &[f64],
    th: &[f64],
    row_map: &[Option<usize>],
    col_map: &[Option<usize>],
    dim: usize,
) -> Triplets {
    let n = y.dimension();
    let mut out = Triplets::with_capacity(dim, 8 * y.nnz());
    for (i, k, yik) in y.entries() {
        let map = [col_map[i], col_map[k], col_map[n + i], col_map[n + k]];
        if let Some(r) = row_map[i] {
            let t = term(TermCoeffs::real(yik.re, yik.im), th[i], th[k], v[i], v[k]);
            scatter_grad(&mut out, r, &map, &t.grad, 1.0);
        }
        if let Some(r) = row_map[n + i] {
            let t = term(TermCoeffs::reactive(yik.re, yik.im), th[i], th[k], v[i], v[k]);
            scatter_grad(&mut out, r, &map, &t.grad, 1.0);
        }
    }
    out
}

/// Σ_i (λp_i ∇²P_i + λq_i ∇²Q_i) over free variables, appended to `out`.
pub fn injection_hessian(
    y: &AdmittanceMatrix,
    v: &[f64],
    th: &[f64],
    lam_p: &[f64],
    lam_q: &[f64],
    col_map: &[Option<usize>],
    out: &mut Triplets,
) {
    let n = y.dimension();
    for (i, k, yik) in y.entries() {
        let map = [col_map[i], col_map[k], col_map[n + i], col_map[n + k]];
        if lam_p[i] != 0.0 {
            let h = term_hessian(TermCoeffs::real(yik.re, yik.im), th[i], th[k], v[i], v[k]);
            scatter_hessian(out, &map, &h, lam_p[i]);
        }
        if lam_q[i] != 0.0 {
            let h = term_hessian(TermCoeffs::reactive(yik.re, yik.im), th[i], th[k], v[i], v[k]);
            scatter_hessian(out, &map, &h, lam_q[i]);
        }
    }
}

/// Real and reactive flow leaving one end of a branch, with derivatives over
/// the local variables (θ_this, θ_other, V_this, V_other).
#[derive(Debug, Clone, Copy)]
pub struct EndFlow {
    pub p: f64,
    pub q: f64,
    pub dp: [f64; 4],
    pub dq: [f64; 4],
    pub hp: [[f64; 4]; 4],
    pub hq: [[f64; 4]; 4],
}

/// `S = V_this² conj(y_self) + V_this V_other e^{jθ} conj(y_mutual)`.
pub fn end_flow(
    y_self: num_complex::Complex64,
    y_mutual: num_complex::Complex64,
    th_this: f64,
    th_other: f64,
    v_this: f64,
    v_other: f64,
    want_hessian: bool,
) -> EndFlow {
    let mut out = EndFlow {
        p: 0.0,
        q: 0.0,
        dp: [0.0; 4],
        dq: [0.0; 4],
        hp: [[0.0; 4]; 4],
        hq: [[0.0; 4]; 4],
    };
    // Local slots: the self term lives entirely on (θ_this, V_this) -> slots (0, 0, 2, 2).
    let self_slots = [0usize, 0, 2, 2];
    let parts = [
        (TermCoeffs::real(y_self.re, y_self.im), TermCoeffs::reactive(y_self.re, y_self.im), th_this, v_this, self_slots),
        (TermCoeffs::real(y_mutual.re, y_mutual.im), TermCoeffs::reactive(y_mutual.re, y_mutual.im), th_other, v_other, [0, 1, 2, 3]),
    ];
    for (cp, cq, thk, vk, slots) in parts {
        let tp = term(cp, th_this, thk, v_this, vk);
        let tq = term(cq, th_this, thk, v_this, vk);
        out.p += tp.value;
        out.q += tq.value;
        for s in 0..4 {
            out.dp[slots[s]] += tp.grad[s];
            out.dq[slots[s]] += tq.grad[s];
        }
        if want_hessian {
            let hp = term_hessian(cp, th_this, thk, v_this, vk);
            let hq = term_hessian(cq, th_this, thk, v_this, vk);
            for a in 0..4 {
                for b in 0..4 {
                    out.hp[slots[a]][slots[b]] += hp[a][b];
                    out.hq[slots[a]][slots[b]] += hq[a][b];
                }
            }
        }
    }
    out
}
