use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::model::MlpModel;
use crate::scale::Standardizer;
use crate::train::History;
use crate::NnError;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// A trained network with the normalization statistics it was trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub model: MlpModel,
    pub input_scaler: Standardizer,
    /// Absent for classifiers, whose outputs are probabilities.
    pub output_scaler: Option<Standardizer>,
    pub history: Option<History>,
}

impl ModelFile {
    pub fn new(model: MlpModel, input_scaler: Standardizer, output_scaler: Option<Standardizer>) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            model,
            input_scaler,
            output_scaler,
            history: None,
        }
    }

    /// Raw inputs to outputs in target units.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        let z = self.input_scaler.transform(x)?;
        let out = self.model.forward(z.view())?;
        match &self.output_scaler {
            Some(s) => s.inverse(out.view()),
            None => Ok(out),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let file: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(format!(
                "model format version {} (expected {MODEL_FORMAT_VERSION})",
                file.format_version
            ));
        }
        file.model.check_shapes().map_err(|e| e.to_string())?;
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json() + "\n")
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(std::io::Error::other)
    }
}
