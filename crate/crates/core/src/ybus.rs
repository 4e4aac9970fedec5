//! Bus admittance matrix.

use std::collections::BTreeMap;

use num_complex::Complex64;
use thiserror::Error;

use crate::grid::Network;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdmittanceError {
    #[error("branch {index} ({from}-{to}) has zero impedance")]
    SingularBranch { index: usize, from: usize, to: usize },
    #[error("branch {index} references unknown bus {bus}")]
    UnknownBus { index: usize, bus: usize },
}

/// Two-port admittances of one branch's π-model, tap and shift applied on the from side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchAdmittance {
    pub from: usize,
    pub to: usize,
    pub yff: Complex64,
    pub yft: Complex64,
    pub ytf: Complex64,
    pub ytt: Complex64,
}

/// Sparse complex Y = G + jB, stored by rows with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    dimension: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<Complex64>,
    /// One entry per branch of the source network, `None` when out of service.
    branches: Vec<Option<BranchAdmittance>>,
}

impl AdmittanceMatrix {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// Iterate all stored entries as (row, col, value).
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.dimension).flat_map(move |i| self.row(i).map(move |(k, y)| (i, k, y)))
    }

    pub fn get(&self, i: usize, k: usize) -> Complex64 {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[span.clone()].binary_search(&k) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let mut out = vec![vec![Complex64::new(0.0, 0.0); self.dimension]; self.dimension];
        for (i, k, y) in self.entries() {
            out[i][k] = y;
        }
        out
    }

    pub fn branch(&self, index: usize) -> Option<&BranchAdmittance> {
        self.branches.get(index).and_then(Option::as_ref)
    }
}

pub fn branch_admittance(
    r: f64,
    x: f64,
    b_charging: f64,
    tap: f64,
    shift: f64,
) -> (Complex64, Complex64, Complex64, Complex64) {
    let ys = Complex64::new(1.0, 0.0) / Complex64::new(r, x);
    let half_charging = Complex64::new(0.0, b_charging / 2.0);
    let ratio = Complex64::from_polar(tap, shift);
    let ytt = ys + half_charging;
    let yff = ytt / (tap * tap);
    let yft = -ys / ratio.conj();
    let ytf = -ys / ratio;
    (yff, yft, ytf, ytt)
}

/// Assemble the bus admittance matrix of a network.
pub fn build_admittance(net: &Network) -> Result<AdmittanceMatrix, AdmittanceError> {
    let index = net.bus_index_map();
    let n = net.n_bus();
    let mut acc: BTreeMap<(usize, usize), Complex64> = BTreeMap::new();
    let mut branches = Vec::with_capacity(net.branches.len());

    for (l, br) in net.branches.iter().enumerate() {
        if !br.in_service {
            branches.push(None);
            continue;
        }
        let lookup = |bus: usize| {
            index
                .get(&bus)
                .copied()
                .ok_or(AdmittanceError::UnknownBus { index: l, bus })
        };
        let (f, t) = (lookup(br.from_bus)?, lookup(br.to_bus)?);
        if br.r == 0.0 && br.x == 0.0 {
            return Err(AdmittanceError::SingularBranch {
                index: l,
                from: br.from_bus,
                to: br.to_bus,
            });
        }
        let (yff, yft, ytf, ytt) = branch_admittance(br.r, br.x, br.b_charging, br.tap, br.shift);
        *acc.entry((f, f)).or_default() += yff;
        *acc.entry((f, t)).or_default() += yft;
        *acc.entry((t, f)).or_default() += ytf;
        *acc.entry((t, t)).or_default() += ytt;
        branches.push(Some(BranchAdmittance {
            from: f,
            to: t,
            yff,
            yft,
            ytf,
            ytt,
        }));
    }
    for (i, bus) in net.buses.iter().enumerate() {
        if bus.g_shunt != 0.0 || bus.b_shunt != 0.0 {
            *acc.entry((i, i)).or_default() += Complex64::new(bus.g_shunt, bus.b_shunt);
        }
    }

    let mut row_ptr = vec![0; n + 1];
    let mut cols = Vec::with_capacity(acc.len());
    let mut values = Vec::with_capacity(acc.len());
    for (&(i, k), &y) in &acc {
        row_ptr[i + 1] += 1;
        cols.push(k);
        values.push(y);
    }
    for i in 0..n {
        row_ptr[i + 1] += row_ptr[i];
    }
    Ok(AdmittanceMatrix {
        dimension: n,
        row_ptr,
        cols,
        values,
        branches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::fixtures::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_lossless_line() {
        let net = two_bus(0.0, 0.1);
        let y = build_admittance(&net).unwrap();
        let expect = [[c(0.0, -10.0), c(0.0, 10.0)], [c(0.0, 10.0), c(0.0, -10.0)]];
        for i in 0..2 {
            for k in 0..2 {
                assert!((y.get(i, k) - expect[i][k]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn out_of_service_branches_leave_only_shunts() {
        let mut net = two_bus(0.0, 0.1);
        net.branches[0].in_service = false;
        net.buses[1].g_shunt = 0.02;
        net.buses[1].b_shunt = 0.19;
        let y = build_admittance(&net).unwrap();
        assert_eq!(y.nnz(), 1);
        assert_eq!(y.get(1, 1), c(0.02, 0.19));
        assert!(y.branch(0).is_none());
    }

    #[test]
    fn zero_impedance_rejected() {
        let mut net = two_bus(0.0, 0.1);
        net.branches[0].x = 0.0;
        assert!(matches!(
            build_admittance(&net),
            Err(AdmittanceError::SingularBranch { index: 0, .. })
        ));
    }

    #[test]
    fn tap_breaks_value_symmetry_not_pattern() {
        let mut net = two_bus(0.0, 0.1);
        net.branches[0].tap = 1.05;
        net.branches[0].shift = 0.1;
        let y = build_admittance(&net).unwrap();
        assert!((y.get(0, 1) - y.get(1, 0)).norm() > 1e-3);
        assert_eq!(y.nnz(), 4);
    }
}
