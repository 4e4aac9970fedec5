use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::NnError;

/// Per-dimension z-score. Dimensions with no spread pass through unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn fit(data: ArrayView2<f64>) -> Self {
        let n = data.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(data.ncols());
        let mut std = Vec::with_capacity(data.ncols());
        for col in data.axis_iter(Axis(1)) {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
            let s = var.sqrt();
            if s <= 1e-12 * m.abs().max(1.0) {
                mean.push(0.0);
                std.push(1.0);
            } else {
                mean.push(m);
                std.push(s);
            }
        }
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, x: &ArrayView2<f64>) -> Result<(), NnError> {
        if x.ncols() != self.dim() {
            return Err(NnError::ShapeMismatch {
                expected: (x.nrows(), self.dim()),
                found: x.dim(),
            });
        }
        Ok(())
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        self.check(&x)?;
        let mut out = x.to_owned();
        for (mut col, (m, s)) in out.axis_iter_mut(Axis(1)).zip(self.mean.iter().zip(&self.std)) {
            col.mapv_inplace(|v| (v - m) / s);
        }
        Ok(out)
    }

    pub fn inverse(&self, z: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        self.check(&z)?;
        let mut out = z.to_owned();
        for (mut col, (m, s)) in out.axis_iter_mut(Axis(1)).zip(self.mean.iter().zip(&self.std)) {
            col.mapv_inplace(|v| v * s + m);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip_and_constant_columns() {
        let x = array![[1.0, 5.0, 0.0], [3.0, 5.0, 0.0], [2.0, 5.0, 0.0]];
        let s = Standardizer::fit(x.view());
        assert_eq!(s.std[1], 1.0);
        assert_eq!(s.mean[1], 0.0);
        let z = s.transform(x.view()).unwrap();
        assert_eq!(z.column(1), x.column(1));
        assert!(z.column(0).sum().abs() < 1e-12);
        let back = s.inverse(z.view()).unwrap();
        assert!(back.iter().zip(x.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(s.transform(array![[1.0]].view()).is_err());
    }
}
