use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Activation {
    ReLU,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Self::ReLU => z.max(0.0),
            Self::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Self::ReLU => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutputHead {
    Linear,
    Sigmoid,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    pub output_head: OutputHead,
}

impl MlpConfig {
    pub fn new(input_dim: usize, hidden_layers: Vec<usize>, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_layers,
            output_dim,
            activation: Activation::ReLU,
            output_head: OutputHead::Linear,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if !(1..=3).contains(&self.hidden_layers.len()) {
            return Err(NnError::InvalidConfig(format!(
                "{} hidden layers (1 to 3 supported)",
                self.hidden_layers.len()
            )));
        }
        if self.widths().contains(&0) {
            return Err(NnError::InvalidConfig("layer width 0".into()));
        }
        Ok(())
    }

    /// Input, hidden and output widths in order.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden_layers);
        w.push(self.output_dim);
        w
    }
}

/// Weights are stored `(fan_in, fan_out)` so a layer evaluates `X·W + b` on row batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub config: MlpConfig,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Activations saved by a forward pass: `inputs[k]` feeds layer `k`, `pre[k]` is its affine output.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub inputs: Vec<Array2<f64>>,
    pub pre: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: model.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_model(cfg: &MlpConfig, seed: u64) -> Result<MlpModel, NnError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let widths = cfg.widths();
    let mut weights = Vec::with_capacity(widths.len() - 1);
    let mut biases = Vec::with_capacity(widths.len() - 1);
    for pair in widths.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        weights.push(Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-limit..limit)));
        biases.push(Array1::zeros(fan_out));
    }
    Ok(MlpModel {
        config: cfg.clone(),
        weights,
        biases,
    })
}

impl MlpModel {
    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn n_parameters(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Checks that layer shapes chain and agree with the config.
    pub fn check_shapes(&self) -> Result<(), NnError> {
        self.config.validate()?;
        let widths = self.config.widths();
        if self.weights.len() != widths.len() - 1 || self.biases.len() != widths.len() - 1 {
            return Err(NnError::InvalidConfig("layer count disagrees with config".into()));
        }
        for (k, pair) in widths.windows(2).enumerate() {
            let expected = (pair[0], pair[1]);
            if self.weights[k].dim() != expected {
                return Err(NnError::ShapeMismatch {
                    expected,
                    found: self.weights[k].dim(),
                });
            }
            if self.biases[k].len() != pair[1] {
                return Err(NnError::ShapeMismatch {
                    expected: (1, pair[1]),
                    found: (1, self.biases[k].len()),
                });
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<(), NnError> {
        if x.ncols() != self.config.input_dim {
            return Err(NnError::ShapeMismatch {
                expected: (x.nrows(), self.config.input_dim),
                found: x.dim(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        Ok(self.forward_cached(x)?.output)
    }

    /// Pre-activation of the output layer (logits for a sigmoid head).
    pub fn forward_logits(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        let mut cache = self.forward_cached(x)?;
        Ok(cache.pre.pop().expect("at least one layer"))
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<ForwardCache, NnError> {
        self.check_input(&x)?;
        let last = self.n_layers() - 1;
        let mut inputs = Vec::with_capacity(self.n_layers());
        let mut pre = Vec::with_capacity(self.n_layers());
        let mut a = x.to_owned();
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = a.dot(w) + b;
            let next = if k < last {
                let act = self.config.activation;
                z.mapv(|v| act.apply(v))
            } else {
                match self.config.output_head {
                    OutputHead::Linear => z.clone(),
                    OutputHead::Sigmoid => z.mapv(sigmoid),
                }
            };
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        Ok(ForwardCache { inputs, pre, output: a })
    }

    /// Reverse pass. `upstream` is the loss gradient with respect to the
    /// output-layer pre-activation (equal to the output for a linear head).
    pub fn backward(&self, cache: &ForwardCache, upstream: ArrayView2<f64>) -> Result<Gradients, NnError> {
        if upstream.dim() != cache.output.dim() {
            return Err(NnError::ShapeMismatch {
                expected: cache.output.dim(),
                found: upstream.dim(),
            });
        }
        let mut grads = Gradients::zeros_like(self);
        let mut delta = upstream.to_owned();
        for k in (0..self.n_layers()).rev() {
            grads.weights[k] = cache.inputs[k].t().dot(&delta);
            grads.biases[k] = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut back = delta.dot(&self.weights[k].t());
                let act = self.config.activation;
                ndarray::Zip::from(&mut back)
                    .and(&cache.pre[k - 1])
                    .and(&cache.inputs[k])
                    .for_each(|d, &z, &a| *d *= act.derivative(z, a));
                delta = back;
            }
        }
        Ok(grads)
    }
}
