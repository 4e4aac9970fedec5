use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::loss::{loss_bce, loss_mse_penalty_scaled, BoundsSpec};
use crate::model::{ForwardCache, MlpModel, OutputHead};
use crate::optim::{adam_step, AdamState};
use crate::scale::Standardizer;
use crate::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EarlyStop {
    pub window: usize,
    pub min_rel_improvement: f64,
}

impl Default for EarlyStop {
    fn default() -> Self {
        Self {
            window: 50,
            min_rel_improvement: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub penalty_weight: f64,
    pub early_stop: EarlyStop,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            max_epochs: 2000,
            batch_size: 128,
            penalty_weight: 100.0,
            early_stop: EarlyStop::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::InvalidConfig(format!("learning rate {}", self.learning_rate)));
        }
        if self.max_epochs == 0 {
            return Err(NnError::InvalidConfig("max_epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(NnError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.penalty_weight >= 0.0 && self.penalty_weight.is_finite()) {
            return Err(NnError::InvalidConfig(format!("penalty weight {}", self.penalty_weight)));
        }
        if self.early_stop.window == 0 || !(self.early_stop.min_rel_improvement >= 0.0) {
            return Err(NnError::InvalidConfig("early-stop window must be at least 1".into()));
        }
        Ok(())
    }
}

/// Regression with bound penalty, or multi-label classification.
///
/// For `Mse`, `scale` maps standardized outputs back to the physical units of `bounds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LossSpec {
    Mse {
        bounds: BoundsSpec,
        scale: Option<Standardizer>,
    },
    Bce,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    pub val: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochLoss>,
    pub best_epoch: usize,
    pub best_val: f64,
    pub stopped_early: bool,
    pub threads: usize,
    pub seed: u64,
}

impl History {
    /// Running minimum of validation loss, one entry per epoch.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.epochs
            .iter()
            .map(|e| {
                best = best.min(e.val);
                best
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("empty training or validation set")]
    EmptyData,
    #[error("non-finite loss in epoch {epoch}")]
    NonFiniteLoss { epoch: usize, history: History },
}

fn loss_and_grad(
    model: &MlpModel,
    cache: &ForwardCache,
    y: ArrayView2<f64>,
    loss: &LossSpec,
    lambda: f64,
) -> Result<(f64, Array2<f64>), NnError> {
    let out = cache.output.view();
    match loss {
        LossSpec::Mse { bounds, scale } => {
            let (l, mut g) = loss_mse_penalty_scaled(out, y, bounds, lambda, scale.as_ref())?;
            if model.config.output_head == OutputHead::Sigmoid {
                ndarray::Zip::from(&mut g).and(out).for_each(|g, &p| *g *= p * (1.0 - p));
            }
            Ok((l, g))
        }
        LossSpec::Bce => {
            if model.config.output_head != OutputHead::Sigmoid {
                return Err(NnError::InvalidConfig("cross-entropy needs a sigmoid head".into()));
            }
            loss_bce(out, y)
        }
    }
}

fn check_pair(model: &MlpModel, x: &ArrayView2<f64>, y: &ArrayView2<f64>) -> Result<(), TrainError> {
    if x.nrows() == 0 {
        return Err(TrainError::EmptyData);
    }
    if x.nrows() != y.nrows() || y.ncols() != model.config.output_dim {
        return Err(NnError::ShapeMismatch {
            expected: (x.nrows(), model.config.output_dim),
            found: y.dim(),
        }
        .into());
    }
    Ok(())
}

/// Loss of `model` on a full set, without gradients.
pub fn evaluate_loss(
    model: &MlpModel,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    loss: &LossSpec,
    lambda: f64,
) -> Result<f64, NnError> {
    let cache = model.forward_cached(x)?;
    Ok(loss_and_grad(model, &cache, y, loss, lambda)?.0)
}

/// Mini-batch Adam with per-epoch seeded shuffling and validation-based early
/// stopping. Returns the snapshot with the lowest validation loss.
pub fn train(
    mut model: MlpModel,
    train_x: ArrayView2<f64>,
    train_y: ArrayView2<f64>,
    val_x: ArrayView2<f64>,
    val_y: ArrayView2<f64>,
    loss: &LossSpec,
    cfg: &TrainConfig,
) -> Result<(MlpModel, History), TrainError> {
    cfg.validate()?;
    model.check_shapes()?;
    check_pair(&model, &train_x, &train_y)?;
    check_pair(&model, &val_x, &val_y)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(&model);
    let mut order: Vec<usize> = (0..train_x.nrows()).collect();
    let mut history = History {
        best_val: f64::INFINITY,
        threads: 1,
        seed: cfg.seed,
        ..History::default()
    };
    let mut best = model.clone();
    let mut reference = f64::INFINITY;
    let mut last_gain = 0;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = train_x.select(Axis(0), chunk);
            let yb = train_y.select(Axis(0), chunk);
            let cache = model.forward_cached(xb.view())?;
            let (l, g) = loss_and_grad(&model, &cache, yb.view(), loss, cfg.penalty_weight)?;
            if !l.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, history });
            }
            total += l * chunk.len() as f64;
            let grads = model.backward(&cache, g.view())?;
            adam_step(&mut model, &grads, &mut adam, cfg.learning_rate);
        }
        let train_loss = total / order.len() as f64;
        let val = evaluate_loss(&model, val_x, val_y, loss, cfg.penalty_weight)?;
        if !val.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch, history });
        }
        history.epochs.push(EpochLoss {
            epoch,
            train: train_loss,
            val,
        });
        if val < history.best_val {
            history.best_val = val;
            history.best_epoch = epoch;
            best.clone_from(&model);
        }
        if val < reference * (1.0 - cfg.early_stop.min_rel_improvement) {
            reference = val;
            last_gain = epoch;
        }
        if epoch - last_gain >= cfg.early_stop.window {
            history.stopped_early = epoch < cfg.max_epochs;
            break;
        }
    }
    Ok((best, history))
}

/// Thresholds probabilities at 0.5: a bit is set when `p > 0.5`.
pub fn predict_bits(probs: ArrayView2<f64>) -> Array2<bool> {
    probs.mapv(|p| p > 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, MlpConfig};
    use ndarray::array;

    fn toy() -> (Array2<f64>, Array2<f64>) {
        let x = Array2::from_shape_fn((16, 2), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 10.0 - 0.5);
        let y = x.mapv(|v| 2.0 * v);
        (x, y)
    }

    #[test]
    fn single_epoch_history() {
        let (x, y) = toy();
        let m = init_model(&MlpConfig::new(2, vec![3], 2), 0).unwrap();
        let cfg = TrainConfig {
            max_epochs: 1,
            ..TrainConfig::default()
        };
        let loss = LossSpec::Mse {
            bounds: BoundsSpec::unbounded(2),
            scale: None,
        };
        let (_, h) = train(m.clone(), x.view(), y.view(), x.view(), y.view(), &loss, &cfg).unwrap();
        assert_eq!(h.epochs.len(), 1);
        let zero = TrainConfig {
            max_epochs: 0,
            ..TrainConfig::default()
        };
        assert!(train(m, x.view(), y.view(), x.view(), y.view(), &loss, &zero).is_err());
    }

    #[test]
    fn deterministic_and_returns_best() {
        let (x, y) = toy();
        let m = init_model(&MlpConfig::new(2, vec![8], 2), 4).unwrap();
        let cfg = TrainConfig {
            max_epochs: 30,
            batch_size: 4,
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        let loss = LossSpec::Mse {
            bounds: BoundsSpec::unbounded(2),
            scale: None,
        };
        let a = train(m.clone(), x.view(), y.view(), x.view(), y.view(), &loss, &cfg).unwrap();
        let b = train(m, x.view(), y.view(), x.view(), y.view(), &loss, &cfg).unwrap();
        assert_eq!(a, b);
        let best = evaluate_loss(&a.0, x.view(), y.view(), &loss, cfg.penalty_weight).unwrap();
        assert_eq!(best, a.1.best_val);
        let mins = a.1.best_so_far();
        assert!(mins.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn early_stop_on_plateau() {
        let x = Array2::zeros((4, 1));
        let y = Array2::zeros((4, 1));
        let mut m = init_model(&MlpConfig::new(1, vec![1], 1), 0).unwrap();
        m.weights.iter_mut().for_each(|w| w.fill(0.0));
        let cfg = TrainConfig {
            early_stop: EarlyStop {
                window: 5,
                min_rel_improvement: 1e-5,
            },
            ..TrainConfig::default()
        };
        let loss = LossSpec::Mse {
            bounds: BoundsSpec::unbounded(1),
            scale: None,
        };
        let (_, h) = train(m, x.view(), y.view(), x.view(), y.view(), &loss, &cfg).unwrap();
        assert_eq!(h.epochs.len(), 6);
        assert!(h.stopped_early);
    }

    #[test]
    fn divergence_reported() {
        let (x, y) = toy();
        let m = init_model(&MlpConfig::new(2, vec![8], 2), 1).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e300,
            max_epochs: 50,
            ..TrainConfig::default()
        };
        let loss = LossSpec::Mse {
            bounds: BoundsSpec::unbounded(2),
            scale: None,
        };
        match train(m, x.view(), y.view(), x.view(), y.view(), &loss, &cfg) {
            Err(TrainError::NonFiniteLoss { epoch, history }) => assert_eq!(history.epochs.len(), epoch - 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bce_requires_sigmoid_head() {
        let (x, _) = toy();
        let y = Array2::zeros((16, 2));
        let m = init_model(&MlpConfig::new(2, vec![3], 2), 0).unwrap();
        assert!(train(m, x.view(), y.view(), x.view(), y.view(), &LossSpec::Bce, &TrainConfig::default()).is_err());
    }

    #[test]
    fn threshold() {
        assert_eq!(predict_bits(array![[0.5, 0.51, 0.1]].view()), array![[false, true, false]]);
    }
}
