//! Small dense MLP stack: forward and reverse passes, Adam, the regression and
//! multi-label losses, input/output standardization and the model file format.

mod file;
mod loss;
mod model;
mod optim;
mod scale;
mod train;

pub use file::{ModelFile, MODEL_FORMAT_VERSION};
pub use loss::{loss_bce, loss_mse_penalty, loss_mse_penalty_scaled, BoundsSpec, BCE_CLAMP};
pub use model::{init_model, sigmoid, Activation, ForwardCache, Gradients, MlpConfig, MlpModel, OutputHead};
pub use optim::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use scale::Standardizer;
pub use train::{evaluate_loss, predict_bits, train, EarlyStop, EpochLoss, History, LossSpec, TrainConfig, TrainError};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch { expected: (usize, usize), found: (usize, usize) },
}
