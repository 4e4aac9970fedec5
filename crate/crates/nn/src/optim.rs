use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::model::{Gradients, MlpModel};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
}

impl AdamState {
    pub fn new(model: &MlpModel) -> Self {
        let zw = || model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect();
        let zb = || model.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect();
        Self {
            step: 0,
            m_w: zw(),
            v_w: zw(),
            m_b: zb(),
            v_b: zb(),
        }
    }
}

/// One bias-corrected Adam update of every parameter.
pub fn adam_step(model: &mut MlpModel, grads: &Gradients, state: &mut AdamState, lr: f64) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
    };
    for k in 0..model.weights.len() {
        Zip::from(&mut model.weights[k])
            .and(&mut state.m_w[k])
            .and(&mut state.v_w[k])
            .and(&grads.weights[k])
            .for_each(|p, m, v, &g| update(p, m, v, g));
        Zip::from(&mut model.biases[k])
            .and(&mut state.m_b[k])
            .and(&mut state.v_b[k])
            .and(&grads.biases[k])
            .for_each(|p, m, v, &g| update(p, m, v, g));
    }
}
