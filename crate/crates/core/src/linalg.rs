//! Linear solves for the Newton steps.
//!
//! [`SparseLu`] is a left-looking (Gilbert-Peierls) LU with threshold partial
//! pivoting behind a minimum-degree column ordering. Small systems go through a
//! dense partial-pivoting LU instead.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is numerically singular at column {column}")]
    Singular { column: usize },
    #[error("dimension mismatch: matrix is {expected}, right-hand side is {found}")]
    Dimension { expected: usize, found: usize },
}

/// Square matrix accumulated from (row, col, value) triplets; duplicates are summed.
#[derive(Debug, Clone, Default)]
pub struct Triplets {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n: usize, cap: usize) -> Self {
        Self {
            n,
            entries: Vec::with_capacity(cap),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n && col < self.n);
        self.entries.push((row, col, value));
    }

    /// Compressed sparse column form. Explicit zeros that arise from summing
    /// are kept so the sparsity pattern only depends on which entries were pushed.
    pub fn to_csc(&self) -> CscMatrix {
        let n = self.n;
        let mut sorted = self.entries.clone();
        sorted.sort_unstable_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut col_ptr = vec![0usize; n + 1];
        let mut rows = Vec::with_capacity(sorted.len());
        let mut vals: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            rows.push(r);
            vals.push(v);
            col_ptr[c + 1] += 1;
        }
        for j in 0..n {
            col_ptr[j + 1] += col_ptr[j];
        }
        CscMatrix {
            n,
            col_ptr,
            rows,
            vals,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    n: usize,
    col_ptr: Vec<usize>,
    rows: Vec<usize>,
    vals: Vec<f64>,
}

impl CscMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    fn col(&self, j: usize) -> (&[usize], &[f64]) {
        let s = self.col_ptr[j]..self.col_ptr[j + 1];
        (&self.rows[s.clone()], &self.vals[s])
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            let (rows, vals) = self.col(j);
            for (&i, &v) in rows.iter().zip(vals) {
                y[i] += v * x[j];
            }
        }
        y
    }
}

/// Minimum-degree elimination order on the pattern of A + Aᵀ. Ties go to the
/// lowest index so the order is deterministic.
pub fn minimum_degree_order(a: &CscMatrix) -> Vec<usize> {
    let n = a.n;
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for j in 0..n {
        let (rows, _) = a.col(j);
        for &i in rows {
            if i != j {
                adj[i].insert(j);
                adj[j].insert(i);
            }
        }
    }
    let mut by_degree: BTreeSet<(usize, usize)> = (0..n).map(|i| (adj[i].len(), i)).collect();
    let mut order = Vec::with_capacity(n);
    while let Some((_, v)) = by_degree.pop_first() {
        order.push(v);
        let neighbors: Vec<usize> = std::mem::take(&mut adj[v]).into_iter().collect();
        for &u in &neighbors {
            by_degree.remove(&(adj[u].len(), u));
            adj[u].remove(&v);
        }
        for (k, &u) in neighbors.iter().enumerate() {
            for &w in &neighbors[k + 1..] {
                adj[u].insert(w);
                adj[w].insert(u);
            }
        }
        for &u in &neighbors {
            by_degree.insert((adj[u].len(), u));
        }
    }
    order
}

/// Sparse LU factors with row permutation `pinv` and column order `q`:
/// P A Q = L U, with unit-diagonal L.
#[derive(Debug, Clone)]
pub struct SparseLu {
    n: usize,
    l_ptr: Vec<usize>,
    l_rows: Vec<usize>,
    l_vals: Vec<f64>,
    u_ptr: Vec<usize>,
    u_rows: Vec<usize>,
    u_vals: Vec<f64>,
    pinv: Vec<usize>,
    q: Vec<usize>,
}

/// Pivot acceptance threshold relative to the column maximum; diagonal entries are
/// preferred whenever they pass it.
const PIVOT_THRESHOLD: f64 = 0.1;

impl SparseLu {
    pub fn factor(a: &CscMatrix) -> Result<Self, LinalgError> {
        let q = minimum_degree_order(a);
        Self::factor_ordered(a, q)
    }

    pub fn factor_ordered(a: &CscMatrix, q: Vec<usize>) -> Result<Self, LinalgError> {
        const NONE: usize = usize::MAX;
        let n = a.n;
        let mut pinv = vec![NONE; n];
        let mut l_ptr = Vec::with_capacity(n + 1);
        let mut u_ptr = Vec::with_capacity(n + 1);
        let cap = 4 * a.nnz() + n;
        let mut l_rows: Vec<usize> = Vec::with_capacity(cap);
        let mut l_vals: Vec<f64> = Vec::with_capacity(cap);
        let mut u_rows: Vec<usize> = Vec::with_capacity(cap);
        let mut u_vals: Vec<f64> = Vec::with_capacity(cap);

        let mut x = vec![0.0; n];
        let mut marked = vec![false; n];
        let mut reach: Vec<usize> = Vec::with_capacity(n);
        let mut stack: Vec<(usize, usize)> = Vec::with_capacity(n);

        for k in 0..n {
            l_ptr.push(l_rows.len());
            u_ptr.push(u_rows.len());
            let col = q[k];
            let (b_rows, b_vals) = a.col(col);

            // Nonzero pattern of L \ A[:, col] by depth-first search through the
            // columns of L that are already pivotal. `reach` ends in reverse topological order.
            reach.clear();
            for &start in b_rows {
                if marked[start] {
                    continue;
                }
                marked[start] = true;
                stack.push((start, 0));
                while let Some(top) = stack.len().checked_sub(1) {
                    let (node, offset) = stack[top];
                    let j = pinv[node];
                    // Finished columns only; skip the unit diagonal stored first.
                    let (lo, hi) = if j == NONE {
                        (0, 0)
                    } else {
                        (l_ptr[j] + 1, l_ptr[j + 1])
                    };
                    let mut p = lo + offset;
                    let mut descended = false;
                    while p < hi {
                        let child = l_rows[p];
                        p += 1;
                        if !marked[child] {
                            stack[top].1 = p - lo;
                            marked[child] = true;
                            stack.push((child, 0));
                            descended = true;
                            break;
                        }
                    }
                    if !descended {
                        stack.pop();
                        reach.push(node);
                    }
                }
            }
            for &i in &reach {
                marked[i] = false;
                x[i] = 0.0;
            }
            for (&i, &v) in b_rows.iter().zip(b_vals) {
                x[i] = v;
            }
            // Sparse triangular solve in topological order.
            for &j in reach.iter().rev() {
                let jj = pinv[j];
                if jj == NONE {
                    continue;
                }
                let xj = x[j];
                if xj == 0.0 {
                    continue;
                }
                for p in l_ptr[jj] + 1..l_ptr[jj + 1] {
                    x[l_rows[p]] -= l_vals[p] * xj;
                }
            }

            let mut pivot_row = NONE;
            let mut best = -1.0f64;
            for &i in reach.iter().rev() {
                if pinv[i] == NONE {
                    let m = x[i].abs();
                    if m > best {
                        best = m;
                        pivot_row = i;
                    }
                } else {
                    u_rows.push(pinv[i]);
                    u_vals.push(x[i]);
                }
            }
            if pivot_row == NONE || !(best > 0.0) || !best.is_finite() {
                return Err(LinalgError::Singular { column: col });
            }
            if pinv[col] == NONE && x[col] != 0.0 && x[col].abs() >= PIVOT_THRESHOLD * best {
                pivot_row = col;
            }
            let pivot = x[pivot_row];
            u_rows.push(k);
            u_vals.push(pivot);
            pinv[pivot_row] = k;
            l_rows.push(pivot_row);
            l_vals.push(1.0);
            for &i in reach.iter().rev() {
                if pinv[i] == NONE {
                    l_rows.push(i);
                    l_vals.push(x[i] / pivot);
                }
                x[i] = 0.0;
            }
        }
        l_ptr.push(l_rows.len());
        u_ptr.push(u_rows.len());
        for r in l_rows.iter_mut() {
            *r = pinv[*r];
        }
        Ok(Self {
            n,
            l_ptr,
            l_rows,
            l_vals,
            u_ptr,
            u_rows,
            u_vals,
            pinv,
            q,
        })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if b.len() != self.n {
            return Err(LinalgError::Dimension {
                expected: self.n,
                found: b.len(),
            });
        }
        let mut y = vec![0.0; self.n];
        for (i, &v) in b.iter().enumerate() {
            y[self.pinv[i]] = v;
        }
        for j in 0..self.n {
            let yj = y[j];
            if yj != 0.0 {
                for p in self.l_ptr[j] + 1..self.l_ptr[j + 1] {
                    y[self.l_rows[p]] -= self.l_vals[p] * yj;
                }
            }
        }
        for j in (0..self.n).rev() {
            let last = self.u_ptr[j + 1] - 1;
            y[j] /= self.u_vals[last];
            let yj = y[j];
            if yj != 0.0 {
                for p in self.u_ptr[j]..last {
                    y[self.u_rows[p]] -= self.u_vals[p] * yj;
                }
            }
        }
        let mut x = vec![0.0; self.n];
        for (k, &col) in self.q.iter().enumerate() {
            x[col] = y[k];
        }
        Ok(x)
    }

    pub fn fill(&self) -> usize {
        self.l_vals.len() + self.u_vals.len()
    }
}

/// Systems below this dimension are solved densely.
pub const DENSE_CUTOFF: usize = 100;

/// Solve `A x = b`, choosing dense or sparse factorization by size.
pub fn solve(a: &Triplets, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    if a.dim() < DENSE_CUTOFF {
        solve_dense(a, b)
    } else {
        SparseLu::factor(&a.to_csc())?.solve(b)
    }
}

pub fn solve_dense(a: &Triplets, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    if b.len() != a.dim() {
        return Err(LinalgError::Dimension {
            expected: a.dim(),
            found: b.len(),
        });
    }
    let lu = a.to_dense().lu();
    let x = lu
        .solve(&DVector::from_column_slice(b))
        .ok_or(LinalgError::Singular { column: 0 })?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::Singular { column: 0 });
    }
    Ok(x.as_slice().to_vec())
}

/// Sparse solver that reuses one fill-reducing ordering across refactorizations
/// of matrices sharing a pattern.
#[derive(Debug, Clone, Default)]
pub struct CachedSparseSolver {
    order: Option<(usize, Vec<usize>)>,
}

impl CachedSparseSolver {
    pub fn solve(&mut self, a: &Triplets, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if a.dim() < DENSE_CUTOFF {
            return solve_dense(a, b);
        }
        let csc = a.to_csc();
        let order = match &self.order {
            Some((nnz, q)) if *nnz == csc.nnz() && q.len() == csc.dim() => q.clone(),
            _ => {
                let q = minimum_degree_order(&csc);
                self.order = Some((csc.nnz(), q.clone()));
                q
            }
        };
        SparseLu::factor_ordered(&csc, order)?.solve(b)
    }
}
