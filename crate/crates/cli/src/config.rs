use std::path::{Path, PathBuf};

use acopf_core::{OpfOptions, SamplerConfig};
use acopf_experiments::{GridSearchSpace, RunOptions};
use acopf_nn::{Activation, TrainConfig};
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub perturbation: f64,
    pub n_target: usize,
    /// Defaults to ten draws per requested sample.
    pub max_attempts: Option<usize>,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self {
            perturbation: 0.1,
            n_target: 5000,
            max_attempts: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub hidden_layer_options: Vec<Vec<usize>>,
    pub activations: Vec<Activation>,
    pub penalty_options: Vec<bool>,
}

impl Default for SearchSection {
    fn default() -> Self {
        let g = GridSearchSpace::default();
        Self {
            hidden_layer_options: g.hidden_layer_options,
            activations: g.activations,
            penalty_options: g.penalty_options,
        }
    }
}

/// Everything a pipeline run needs. Only `case_path` lacks a default; relative
/// paths are resolved against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub case_path: PathBuf,
    pub seed: u64,
    pub sampler: SamplerSection,
    pub opf: OpfOptions,
    pub train: TrainConfig,
    pub search: SearchSection,
    pub run: RunOptions,
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/dataset`.
    pub dataset_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            case_path: PathBuf::new(),
            seed: 1,
            sampler: SamplerSection::default(),
            opf: OpfOptions::default(),
            train: TrainConfig::default(),
            search: SearchSection::default(),
            run: RunOptions::default(),
            output_dir: PathBuf::from("out"),
            dataset_dir: None,
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(format!(
                "{}: config version {} (expected {CONFIG_VERSION})",
                path.display(),
                cfg.version
            ));
        }
        if cfg.case_path.as_os_str().is_empty() {
            return Err(format!("{}: case_path is required", path.display()));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        if acopf_core::cases::bundled(&cfg.case_path.to_string_lossy()).is_none() {
            cfg.case_path = resolve(base, &cfg.case_path);
            if !cfg.case_path.exists() {
                return Err(format!("case file {} does not exist", cfg.case_path.display()));
            }
        }
        cfg.output_dir = resolve(base, &cfg.output_dir);
        cfg.dataset_dir = cfg.dataset_dir.as_deref().map(|d| resolve(base, d));
        Ok(cfg)
    }

    /// Sets the master seed; replication seeds become `seed, seed+1, ...`.
    pub fn override_seed(&mut self, seed: u64) {
        self.seed = seed;
        let k = self.run.seeds.len().max(1) as u64;
        self.run.seeds = (0..k).map(|i| seed.wrapping_add(i)).collect();
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.dataset_dir.clone().unwrap_or_else(|| self.output_dir.join("dataset"))
    }

    pub fn sampler(&self) -> SamplerConfig {
        let mut s = SamplerConfig::new(self.sampler.perturbation, self.sampler.n_target, self.seed);
        if let Some(m) = self.sampler.max_attempts {
            s.max_attempts = m;
        }
        s
    }

    pub fn space(&self) -> GridSearchSpace {
        GridSearchSpace {
            hidden_layer_options: self.search.hidden_layer_options.clone(),
            activations: self.search.activations.clone(),
            penalty_options: self.search.penalty_options.clone(),
            base: self.train.clone(),
        }
    }
}
