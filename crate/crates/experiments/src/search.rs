use acopf_nn::{Activation, MlpConfig, OutputHead, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::ExperimentError;

/// Cross product of architectures the drivers train and compare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchSpace {
    pub hidden_layer_options: Vec<Vec<usize>>,
    pub activations: Vec<Activation>,
    /// Bound-violation penalty off/on; ignored by the classification task.
    pub penalty_options: Vec<bool>,
    pub base: TrainConfig,
}

impl Default for GridSearchSpace {
    /// One or two hidden layers of 128, 256 or 512 units, ReLU or tanh, penalty off or on.
    fn default() -> Self {
        let mut hidden = Vec::new();
        for depth in 1..=2 {
            for width in [128, 256, 512] {
                hidden.push(vec![width; depth]);
            }
        }
        Self {
            hidden_layer_options: hidden,
            activations: vec![Activation::ReLU, Activation::Tanh],
            penalty_options: vec![false, true],
            base: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub id: usize,
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub penalty: bool,
}

impl SearchConfig {
    pub fn label(&self) -> String {
        let widths: Vec<String> = self.hidden_layers.iter().map(|w| w.to_string()).collect();
        let act = match self.activation {
            Activation::ReLU => "relu",
            Activation::Tanh => "tanh",
        };
        format!("h{}-{act}{}", widths.join("x"), if self.penalty { "-pen" } else { "" })
    }

    pub fn mlp(&self, input_dim: usize, output_dim: usize, head: OutputHead) -> MlpConfig {
        MlpConfig {
            input_dim,
            hidden_layers: self.hidden_layers.clone(),
            output_dim,
            activation: self.activation,
            output_head: head,
        }
    }
}

impl GridSearchSpace {
    pub fn single(hidden_layers: Vec<usize>, activation: Activation, penalty: bool, base: TrainConfig) -> Self {
        Self {
            hidden_layer_options: vec![hidden_layers],
            activations: vec![activation],
            penalty_options: vec![penalty],
            base,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.hidden_layer_options.is_empty() || self.activations.is_empty() || self.penalty_options.is_empty() {
            return Err(ExperimentError::InvalidSpace("empty option list".into()));
        }
        for h in &self.hidden_layer_options {
            MlpConfig::new(1, h.clone(), 1)
                .validate()
                .map_err(|e| ExperimentError::InvalidSpace(e.to_string()))?;
        }
        self.base
            .validate()
            .map_err(|e| ExperimentError::InvalidSpace(e.to_string()))
    }

    /// Configurations in (layers, activation, penalty) order, numbered from 0.
    pub fn configs(&self, with_penalty: bool) -> Vec<SearchConfig> {
        let penalties: Vec<bool> = if with_penalty {
            let mut p = self.penalty_options.clone();
            p.dedup();
            p
        } else {
            vec![false]
        };
        let mut out = Vec::new();
        for h in &self.hidden_layer_options {
            for &activation in &self.activations {
                for &penalty in &penalties {
                    out.push(SearchConfig {
                        id: out.len(),
                        hidden_layers: h.clone(),
                        activation,
                        penalty,
                    });
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_size() {
        let s = GridSearchSpace::default();
        s.validate().unwrap();
        assert_eq!(s.configs(true).len(), 24);
        assert_eq!(s.configs(false).len(), 12);
        let c = &s.configs(true)[3];
        assert_eq!(c.id, 3);
        assert_eq!(c.label(), "h128-tanh-pen");
    }

    #[test]
    fn rejects_empty_or_deep() {
        let mut s = GridSearchSpace::default();
        s.activations.clear();
        assert!(s.validate().is_err());
        let s = GridSearchSpace::single(vec![8; 4], Activation::ReLU, false, TrainConfig::default());
        assert!(s.validate().is_err());
    }
}
