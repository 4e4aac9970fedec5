use acopf_core::LegalityReport;
use ndarray::{ArrayView2, Axis};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("true cost {value} at position {index} is not positive")]
    NonPositiveTrueCost { index: usize, value: f64 },
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
}

/// Share of predictions that satisfy every limit.
pub fn metric_legality_rate(reports: &[LegalityReport]) -> Result<f64, MetricError> {
    if reports.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    Ok(reports.iter().filter(|r| r.legal).count() as f64 / reports.len() as f64)
}

/// `(1/n) Σ |1 − pred/true|`, meant to be taken over legal grids only.
pub fn metric_cost_deviation(pred: &[f64], truth: &[f64]) -> Result<f64, MetricError> {
    if pred.len() != truth.len() {
        return Err(MetricError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut sum = 0.0;
    for (index, (&p, &t)) in pred.iter().zip(truth).enumerate() {
        if !(t > 0.0) {
            return Err(MetricError::NonPositiveTrueCost { index, value: t });
        }
        sum += (1.0 - p / t).abs();
    }
    Ok(sum / pred.len() as f64)
}

fn check(pred: &ArrayView2<f64>, labels: &ArrayView2<f64>) -> Result<(), MetricError> {
    if pred.dim() != labels.dim() {
        return Err(MetricError::ShapeMismatch(pred.dim(), labels.dim()));
    }
    if pred.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    Ok(())
}

fn hit(p: f64, y: f64) -> bool {
    (p > 0.5) == (y > 0.5)
}

/// Share of entries classified correctly after thresholding `pred` at 0.5.
pub fn metric_elementwise_accuracy(pred: ArrayView2<f64>, labels: ArrayView2<f64>) -> Result<f64, MetricError> {
    check(&pred, &labels)?;
    let ok = pred.iter().zip(labels.iter()).filter(|(&p, &y)| hit(p, y)).count();
    Ok(ok as f64 / pred.len() as f64)
}

/// Accuracy of each column separately.
pub fn per_constraint_accuracy(pred: ArrayView2<f64>, labels: ArrayView2<f64>) -> Result<Vec<f64>, MetricError> {
    check(&pred, &labels)?;
    Ok(pred
        .axis_iter(Axis(1))
        .zip(labels.axis_iter(Axis(1)))
        .map(|(p, y)| p.iter().zip(y.iter()).filter(|(&p, &y)| hit(p, y)).count() as f64 / p.len() as f64)
        .collect())
}

/// Share of rows whose every entry is classified correctly.
pub fn exact_match_rate(pred: ArrayView2<f64>, labels: ArrayView2<f64>) -> Result<f64, MetricError> {
    check(&pred, &labels)?;
    let ok = pred
        .rows()
        .into_iter()
        .zip(labels.rows())
        .filter(|(p, y)| p.iter().zip(y.iter()).all(|(&p, &y)| hit(p, y)))
        .count();
    Ok(ok as f64 / pred.nrows() as f64)
}
