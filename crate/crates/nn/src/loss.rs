use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::scale::Standardizer;
use crate::NnError;

/// Probabilities are clamped into `[BCE_CLAMP, 1 - BCE_CLAMP]` before taking logs.
pub const BCE_CLAMP: f64 = 1e-12;

/// Optional per-output bounds in target units.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundsSpec {
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
}

impl BoundsSpec {
    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: vec![None; dim],
            upper: vec![None; dim],
        }
    }

    pub fn new(lower: Vec<Option<f64>>, upper: Vec<Option<f64>>) -> Result<Self, NnError> {
        if lower.len() != upper.len() {
            return Err(NnError::InvalidConfig("bound vectors differ in length".into()));
        }
        for (j, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if let (Some(lo), Some(hi)) = (lo, hi) {
                if lo > hi {
                    return Err(NnError::InvalidConfig(format!("output {j}: lower {lo} > upper {hi}")));
                }
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }
}

fn check_same(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<(), NnError> {
    if a.dim() != b.dim() {
        return Err(NnError::ShapeMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

/// Mean squared error plus `λ`-weighted mean bound violation, and its gradient
/// with respect to `pred`.
pub fn loss_mse_penalty(
    pred: ArrayView2<f64>,
    target: ArrayView2<f64>,
    bounds: &BoundsSpec,
    lambda: f64,
) -> Result<(f64, Array2<f64>), NnError> {
    loss_mse_penalty_scaled(pred, target, bounds, lambda, None)
}

/// As [`loss_mse_penalty`] for standardized `pred`/`target`: the squared error is
/// taken in standardized units and the penalty in physical units
/// (`scale.inverse(pred)` against `bounds`).
pub fn loss_mse_penalty_scaled(
    pred: ArrayView2<f64>,
    target: ArrayView2<f64>,
    bounds: &BoundsSpec,
    lambda: f64,
    scale: Option<&Standardizer>,
) -> Result<(f64, Array2<f64>), NnError> {
    check_same(&pred, &target)?;
    let cols = pred.ncols();
    if lambda != 0.0 && bounds.len() != cols {
        return Err(NnError::ShapeMismatch {
            expected: (1, cols),
            found: (1, bounds.len()),
        });
    }
    if let Some(s) = scale {
        if s.dim() != cols {
            return Err(NnError::ShapeMismatch {
                expected: (1, cols),
                found: (1, s.dim()),
            });
        }
    }
    let count = pred.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(pred.raw_dim());
    for ((i, j), g) in grad.indexed_iter_mut() {
        let d = pred[[i, j]] - target[[i, j]];
        loss += d * d;
        *g = 2.0 * d / count;
        if lambda == 0.0 {
            continue;
        }
        let (phys, slope) = match scale {
            Some(s) => (pred[[i, j]] * s.std[j] + s.mean[j], s.std[j]),
            None => (pred[[i, j]], 1.0),
        };
        if let Some(hi) = bounds.upper[j] {
            if phys > hi {
                loss += lambda * (phys - hi);
                *g += lambda * slope / count;
            }
        }
        if let Some(lo) = bounds.lower[j] {
            if phys < lo {
                loss += lambda * (lo - phys);
                *g -= lambda * slope / count;
            }
        }
    }
    Ok((loss / count, grad))
}

/// Mean binary cross-entropy of probabilities `pred` against `labels`, with its
/// gradient with respect to the pre-sigmoid logits, `(p - y) / count`.
pub fn loss_bce(pred: ArrayView2<f64>, labels: ArrayView2<f64>) -> Result<(f64, Array2<f64>), NnError> {
    check_same(&pred, &labels)?;
    let count = pred.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(pred.raw_dim());
    Zip::from(&mut grad).and(&pred).and(&labels).for_each(|g, &p, &y| {
        let pc = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        loss -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
        *g = (p - y) / count;
    });
    Ok((loss / count, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn perfect_prediction_is_free() {
        let t = array![[1.0, 2.0], [3.0, 4.0]];
        let b = BoundsSpec::new(vec![Some(0.0), None], vec![Some(5.0), Some(5.0)]).unwrap();
        let (l, g) = loss_mse_penalty(t.view(), t.view(), &b, 10.0).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_lambda_is_plain_mse() {
        let p = array![[1.0, 0.0]];
        let t = array![[0.0, 2.0]];
        let (l, g) = loss_mse_penalty(p.view(), t.view(), &BoundsSpec::default(), 0.0).unwrap();
        assert_eq!(l, 2.5);
        assert_eq!(g, array![[1.0, -2.0]]);
    }

    #[test]
    fn penalty_arithmetic() {
        let b = BoundsSpec::new(vec![None], vec![Some(1.1)]).unwrap();
        let (l, g) = loss_mse_penalty(array![[1.2]].view(), array![[1.0]].view(), &b, 10.0).unwrap();
        assert!((l - 1.04).abs() < 1e-12);
        assert!((g[[0, 0]] - (0.4 + 10.0)).abs() < 1e-12);
    }

    #[test]
    fn penalty_in_physical_units() {
        let s = Standardizer {
            mean: vec![1.0],
            std: vec![0.1],
        };
        let b = BoundsSpec::new(vec![None], vec![Some(1.1)]).unwrap();
        // Standardized 2.0 is physical 1.2, 0.1 over the bound.
        let (l, g) = loss_mse_penalty_scaled(array![[2.0]].view(), array![[0.0]].view(), &b, 10.0, Some(&s)).unwrap();
        assert!((l - (4.0 + 1.0)).abs() < 1e-12);
        assert!((g[[0, 0]] - (4.0 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn bce_values() {
        let y = array![[1.0, 0.0, 1.0]];
        let (l, _) = loss_bce(y.view(), y.view()).unwrap();
        assert!(l <= 1e-11);
        let half = Array2::from_elem((2, 3), 0.5);
        let (l, g) = loss_bce(half.view(), Array2::from_elem((2, 3), 1.0).view()).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(g.iter().all(|&v| (v + 0.5 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn shapes_checked() {
        let a = Array2::zeros((2, 2));
        let b = Array2::zeros((2, 3));
        assert!(loss_bce(a.view(), b.view()).is_err());
        assert!(loss_mse_penalty(a.view(), b.view(), &BoundsSpec::default(), 0.0).is_err());
        assert!(BoundsSpec::new(vec![Some(2.0)], vec![Some(1.0)]).is_err());
    }
}
