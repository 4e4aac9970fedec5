use acopf_core::Dataset;
use acopf_nn::{init_model, train, LossSpec, ModelFile, OutputHead, Standardizer};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::common::{features, labels, mean, ExperimentError, RunOptions, SeedSplit};
use crate::metrics::{exact_match_rate, metric_elementwise_accuracy, per_constraint_accuracy};
use crate::search::{GridSearchSpace, SearchConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSeed {
    pub seed: u64,
    pub n_test: usize,
    pub elementwise_accuracy: f64,
    pub exact_match_rate: f64,
    pub epochs_run: usize,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRow {
    pub config: SearchConfig,
    pub label: String,
    pub seeds: Vec<ConstraintSeed>,
    pub elementwise_accuracy: f64,
    pub exact_match_rate: f64,
    pub error: Option<String>,
}

/// Test accuracy of one bound under the best configuration and first seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintBreakdown {
    pub index: usize,
    pub name: String,
    pub accuracy: f64,
    /// Share of all samples in which the bound is active.
    pub active_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub case_name: String,
    pub options: RunOptions,
    pub rows: Vec<ConstraintRow>,
    pub best_config: Option<usize>,
    pub elementwise_accuracy: f64,
    pub exact_match_rate: f64,
    /// Mean of the per-constraint accuracies in `breakdown`.
    pub macro_accuracy: f64,
    pub breakdown: Vec<ConstraintBreakdown>,
    /// Bounds never active anywhere in the dataset.
    pub never_active: Vec<usize>,
}

pub struct ConstraintOutcome {
    pub report: ConstraintReport,
    pub best_model: Option<ModelFile>,
}

fn names(n_gen: usize, n_bus: usize) -> Vec<String> {
    (0..2 * n_gen + 2 * n_bus)
        .map(|k| {
            if k < n_gen {
                format!("P_G[{k}]")
            } else if k < 2 * n_gen {
                format!("Q_G[{}]", k - n_gen)
            } else if k < 2 * n_gen + n_bus {
                format!("V[{}]", k - 2 * n_gen)
            } else {
                format!("delta[{}]", k - 2 * n_gen - n_bus)
            }
        })
        .collect()
}

fn run_seed(
    ds: &Dataset,
    cfg: &SearchConfig,
    space: &GridSearchSpace,
    opts: &RunOptions,
    seed: u64,
) -> Result<(ConstraintSeed, ModelFile, Vec<f64>), ExperimentError> {
    let split = SeedSplit::new(ds, opts, seed)?;
    let xt = features(&split.train);
    let xs = Standardizer::fit(xt.view());
    let mut tc = space.base.clone();
    tc.seed = seed;
    tc.penalty_weight = 0.0;
    let model = init_model(&cfg.mlp(xt.ncols(), ds.manifest.n_labels(), OutputHead::Sigmoid), seed)?;
    let (model, history) = train(
        model,
        xs.transform(xt.view())?.view(),
        labels(&split.train).view(),
        xs.transform(features(&split.val).view())?.view(),
        labels(&split.val).view(),
        &LossSpec::Bce,
        &tc,
    )?;
    let mut file = ModelFile::new(model, xs, None);
    let probs = file.predict(features(&split.test).view())?;
    let truth = labels(&split.test);
    let outcome = ConstraintSeed {
        seed,
        n_test: split.test.len(),
        elementwise_accuracy: metric_elementwise_accuracy(probs.view(), truth.view())?,
        exact_match_rate: exact_match_rate(probs.view(), truth.view())?,
        epochs_run: history.epochs.len(),
        best_epoch: history.best_epoch,
    };
    file.history = Some(history);
    let per = per_constraint_accuracy(probs.view(), truth.view())?;
    Ok((outcome, file, per))
}

/// Trains sigmoid-head classifiers for the active-bound labels and reports
/// elementwise accuracy, with exact-match and per-bound breakdowns.
pub fn run_constraint_prediction(
    ds: &Dataset,
    space: &GridSearchSpace,
    opts: &RunOptions,
) -> Result<ConstraintOutcome, ExperimentError> {
    space.validate()?;
    opts.validate()?;
    if ds.samples.iter().any(|s| s.active_labels.len() != ds.manifest.n_labels()) {
        return Err(ExperimentError::Layout("label width differs from manifest".into()));
    }
    type Out = (ConstraintRow, Option<(ModelFile, Vec<f64>)>);
    let results: Vec<Out> = space
        .configs(false)
        .into_par_iter()
        .map(|cfg| {
            let mut seeds = Vec::new();
            let mut first = None;
            let mut error = None;
            for &seed in &opts.seeds {
                match run_seed(ds, &cfg, space, opts, seed) {
                    Ok((s, file, per)) => {
                        seeds.push(s);
                        first.get_or_insert((file, per));
                    }
                    Err(e) => {
                        error = Some(format!("seed {seed}: {e}"));
                        break;
                    }
                }
            }
            if error.is_some() {
                seeds.clear();
                first = None;
            }
            let row = ConstraintRow {
                label: cfg.label(),
                config: cfg,
                elementwise_accuracy: mean(seeds.iter().map(|s| s.elementwise_accuracy)).unwrap_or(0.0),
                exact_match_rate: mean(seeds.iter().map(|s| s.exact_match_rate)).unwrap_or(0.0),
                seeds,
                error,
            };
            (row, first)
        })
        .collect();

    let mut best: Option<usize> = None;
    for (k, (row, _)) in results.iter().enumerate() {
        if row.error.is_none() && best.is_none_or(|b| row.elementwise_accuracy > results[b].0.elementwise_accuracy) {
            best = Some(k);
        }
    }
    let (rows, mut extras): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let all = labels(ds);
    let n = ds.len().max(1) as f64;
    let active_rate: Vec<f64> = all.columns().into_iter().map(|c| c.sum() / n).collect();
    let never_active = (0..active_rate.len()).filter(|&k| active_rate[k] == 0.0).collect();
    let names = names(ds.manifest.n_gen, ds.manifest.n_bus);
    let (best_model, per) = match best.and_then(|b| extras[b].take()) {
        Some((m, p)) => (Some(m), p),
        None => (None, Vec::new()),
    };
    let breakdown = per
        .iter()
        .enumerate()
        .map(|(index, &accuracy)| ConstraintBreakdown {
            index,
            name: names[index].clone(),
            accuracy,
            active_rate: active_rate[index],
        })
        .collect();
    let report = ConstraintReport {
        case_name: ds.manifest.case_name.clone(),
        options: opts.clone(),
        best_config: best,
        elementwise_accuracy: best.map_or(0.0, |b| rows[b].elementwise_accuracy),
        exact_match_rate: best.map_or(0.0, |b| rows[b].exact_match_rate),
        macro_accuracy: mean(per.iter().copied()).unwrap_or(0.0),
        breakdown,
        never_active,
        rows,
    };
    Ok(ConstraintOutcome { report, best_model })
}
