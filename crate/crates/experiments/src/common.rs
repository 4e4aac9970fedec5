use acopf_core::{split_dataset, DatagenError, Dataset, Network, OpfError, TargetLayout};
use acopf_nn::{NnError, TrainError};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::MetricError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Data(#[from] DatagenError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Opf(#[from] OpfError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("dataset does not match the network: {0}")]
    Layout(String),
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("invalid run options: {0}")]
    InvalidOptions(String),
    #[error("no test instances")]
    EmptyInput,
    #[error("no instance produced a cold/warm pair")]
    NoPairs,
}

/// Protocol shared by both tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunOptions {
    /// Every reported number is the mean over these seeds; each seed fixes the
    /// split, the initialization and the batch order.
    pub seeds: Vec<u64>,
    pub test_fraction: f64,
    /// Share of the training side held out for early stopping.
    pub val_fraction: f64,
    /// Relative tolerance for the legality check of predicted setpoints.
    pub legality_tol: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2],
            test_fraction: 0.1,
            val_fraction: 0.1,
            legality_tol: 1e-3,
        }
    }
}

impl RunOptions {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let frac = |f: f64| f > 0.0 && f < 1.0;
        if self.seeds.is_empty() || !frac(self.test_fraction) || !frac(self.val_fraction) || !(self.legality_tol >= 0.0) {
            return Err(ExperimentError::InvalidOptions(format!("{self:?}")));
        }
        Ok(())
    }
}

pub struct SeedSplit {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

const VAL_SEED_OFFSET: u64 = 0x5eed_0001;

impl SeedSplit {
    pub fn new(ds: &Dataset, opts: &RunOptions, seed: u64) -> Result<Self, ExperimentError> {
        let (fit, test) = split_dataset(ds, opts.test_fraction, seed)?;
        let (train, val) = split_dataset(&fit, opts.val_fraction, seed.wrapping_add(VAL_SEED_OFFSET))?;
        Ok(Self { train, val, test })
    }
}

fn rows(ds: &Dataset, width: usize, row: impl Fn(usize) -> Vec<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((ds.len(), width));
    for i in 0..ds.len() {
        for (j, v) in row(i).into_iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    out
}

pub(crate) fn features(ds: &Dataset) -> Array2<f64> {
    rows(ds, ds.manifest.n_features(), |i| ds.samples[i].features.clone())
}

pub(crate) fn targets(ds: &Dataset) -> Array2<f64> {
    rows(ds, ds.manifest.n_targets(), |i| ds.samples[i].targets.clone())
}

pub(crate) fn labels(ds: &Dataset) -> Array2<f64> {
    rows(ds, ds.manifest.n_labels(), |i| ds.samples[i].active_labels.as_f64())
}

pub(crate) fn check_layout(ds: &Dataset, net: &Network) -> Result<(), ExperimentError> {
    let m = &ds.manifest;
    if m.n_bus != net.n_bus() || m.n_gen != net.n_gen() {
        return Err(ExperimentError::Layout(format!(
            "{} buses/{} units in dataset, {}/{} in network",
            m.n_bus,
            m.n_gen,
            net.n_bus(),
            net.n_gen()
        )));
    }
    let layout = TargetLayout::new(net)?;
    if layout != m.target_layout {
        return Err(ExperimentError::Layout("target layout differs".into()));
    }
    Ok(())
}

pub(crate) fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}
