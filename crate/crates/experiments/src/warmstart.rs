use acopf_core::opf::ActiveSetVector;
use acopf_core::{solve_acopf, warm_start_from_active_set, Dataset, Network, OpfOptions, SetpointProfile};
use acopf_nn::ModelFile;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::common::{check_layout, features, ExperimentError};

/// Largest accepted relative objective increase of a warm solve over its cold twin.
pub const OBJECTIVE_REL_TOL: f64 = 1e-4;

/// Source of the active-set guess for each instance.
pub enum ActivePredictor<'a> {
    /// Trained classifier, thresholded at 0.5.
    Model(&'a ModelFile),
    /// Labels stored with the sample.
    Oracle,
    Zeros,
    /// Independent fair coin flips per bit.
    Random { seed: u64 },
}

impl ActivePredictor<'_> {
    pub fn name(&self) -> String {
        match self {
            Self::Model(_) => "model".into(),
            Self::Oracle => "oracle".into(),
            Self::Zeros => "zeros".into(),
            Self::Random { seed } => format!("random-{seed}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmPair {
    pub index: usize,
    pub cold_iterations: usize,
    pub warm_iterations: usize,
    pub cold_objective: f64,
    pub warm_objective: f64,
    /// `(warm − cold) / max(1, |cold|)`.
    pub rel_objective_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmFailure {
    pub index: usize,
    pub stage: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmStartReport {
    pub case_name: String,
    pub predictor: String,
    pub n_instances: usize,
    pub pairs: Vec<WarmPair>,
    pub failures: Vec<WarmFailure>,
    /// Share of pairs where the warm solve needed no more iterations.
    pub fraction_improved: f64,
    /// Share of pairs where the warm solve needed strictly fewer iterations.
    pub fraction_strictly_fewer: f64,
    pub mean_iteration_ratio: f64,
    pub total_cold_iterations: usize,
    pub total_warm_iterations: usize,
    /// Pairs whose warm objective exceeds the cold one by more than [`OBJECTIVE_REL_TOL`].
    pub regressions: usize,
    pub max_abs_rel_objective_diff: f64,
}

/// Solves each instance cold and warm-started from the predicted active set,
/// pairing iteration counts. Solver failures are recorded and left unpaired.
pub fn run_warm_start_benchmark(
    ds: &Dataset,
    net: &Network,
    predictor: &ActivePredictor<'_>,
    opts: &OpfOptions,
) -> Result<WarmStartReport, ExperimentError> {
    if ds.is_empty() {
        return Err(ExperimentError::EmptyInput);
    }
    check_layout(ds, net)?;
    let n_labels = ds.manifest.n_labels();
    let predicted: Vec<ActiveSetVector> = match predictor {
        ActivePredictor::Model(file) => {
            let probs = file.predict(features(ds).view())?;
            probs
                .rows()
                .into_iter()
                .map(|r| ActiveSetVector {
                    bits: r.iter().map(|&p| p > 0.5).collect(),
                })
                .collect()
        }
        ActivePredictor::Oracle => ds.samples.iter().map(|s| s.active_labels.clone()).collect(),
        ActivePredictor::Zeros => vec![ActiveSetVector { bits: vec![false; n_labels] }; ds.len()],
        ActivePredictor::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            (0..ds.len())
                .map(|_| ActiveSetVector {
                    bits: (0..n_labels).map(|_| rng.random_bool(0.5)).collect(),
                })
                .collect()
        }
    };

    // Flagged bounds are chosen relative to the base-case optimum, carried
    // over to each instance's loads.
    let base_sp = SetpointProfile::from_opf(net, &solve_acopf(net, opts, None)?);
    let n = net.n_bus();
    let mut pairs = Vec::new();
    let mut failures = Vec::new();
    let fail = |index: usize, stage: &str, error: String| WarmFailure {
        index,
        stage: stage.into(),
        error,
    };
    for (index, (s, bits)) in ds.samples.iter().zip(&predicted).enumerate() {
        let inst = net.with_loads(&s.features[..n], &s.features[n..]);
        let cold = match solve_acopf(&inst, opts, None) {
            Ok(sol) => sol,
            Err(e) => {
                failures.push(fail(index, "cold", e.to_string()));
                continue;
            }
        };
        let sp = SetpointProfile {
            p_load: s.features[..n].to_vec(),
            q_load: s.features[n..].to_vec(),
            ..base_sp.clone()
        };
        let hint = match warm_start_from_active_set(&inst, bits, &sp) {
            Ok(h) => h,
            Err(e) => {
                failures.push(fail(index, "hint", e.to_string()));
                continue;
            }
        };
        let warm = match solve_acopf(&inst, opts, Some(&hint)) {
            Ok(sol) => sol,
            Err(e) => {
                failures.push(fail(index, "warm", e.to_string()));
                continue;
            }
        };
        pairs.push(WarmPair {
            index,
            cold_iterations: cold.iterations,
            warm_iterations: warm.iterations,
            cold_objective: cold.objective,
            warm_objective: warm.objective,
            rel_objective_diff: (warm.objective - cold.objective) / cold.objective.abs().max(1.0),
        });
    }
    if pairs.is_empty() {
        return Err(ExperimentError::NoPairs);
    }
    let np = pairs.len() as f64;
    let share = |f: &dyn Fn(&WarmPair) -> bool| pairs.iter().filter(|p| f(p)).count() as f64 / np;
    Ok(WarmStartReport {
        case_name: ds.manifest.case_name.clone(),
        predictor: predictor.name(),
        n_instances: ds.len(),
        fraction_improved: share(&|p| p.warm_iterations <= p.cold_iterations),
        fraction_strictly_fewer: share(&|p| p.warm_iterations < p.cold_iterations),
        mean_iteration_ratio: pairs
            .iter()
            .map(|p| p.warm_iterations as f64 / p.cold_iterations.max(1) as f64)
            .sum::<f64>()
            / np,
        total_cold_iterations: pairs.iter().map(|p| p.cold_iterations).sum(),
        total_warm_iterations: pairs.iter().map(|p| p.warm_iterations).sum(),
        regressions: pairs.iter().filter(|p| p.rel_objective_diff > OBJECTIVE_REL_TOL).count(),
        max_abs_rel_objective_diff: pairs.iter().map(|p| p.rel_objective_diff.abs()).fold(0.0, f64::max),
        pairs,
        failures,
    })
}
