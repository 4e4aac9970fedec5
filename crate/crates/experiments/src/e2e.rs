use acopf_core::{check_legality, evaluate_cost, Dataset, Network};
use acopf_nn::{init_model, train, BoundsSpec, LossSpec, ModelFile, OutputHead, Standardizer};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::common::{check_layout, features, mean, targets, ExperimentError, RunOptions, SeedSplit};
use crate::metrics::{metric_cost_deviation, metric_legality_rate};
use crate::search::{GridSearchSpace, SearchConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndToEndSeed {
    pub seed: u64,
    pub n_test: usize,
    pub legality_rate: f64,
    /// Over `legal_indices` only; `None` when no prediction was legal.
    pub avg_cost_deviation: Option<f64>,
    /// Test-set positions whose predictions passed the legality check.
    pub legal_indices: Vec<usize>,
    pub epochs_run: usize,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndToEndRow {
    pub config: SearchConfig,
    pub label: String,
    pub seeds: Vec<EndToEndSeed>,
    pub legality_rate: f64,
    pub avg_cost_deviation: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndToEndReport {
    pub case_name: String,
    pub options: RunOptions,
    pub rows: Vec<EndToEndRow>,
    pub best_config: Option<usize>,
    pub legality_rate: f64,
    pub avg_cost_deviation: Option<f64>,
}

pub struct EndToEndOutcome {
    pub report: EndToEndReport,
    /// Model of the best configuration trained under the first seed.
    pub best_model: Option<ModelFile>,
}

/// Bounds of each target in physical units: unit real-power limits, then bus
/// magnitude limits.
pub(crate) fn target_bounds(ds: &Dataset, net: &Network) -> BoundsSpec {
    let layout = &ds.manifest.target_layout;
    let mut lower = Vec::with_capacity(layout.len());
    let mut upper = Vec::with_capacity(layout.len());
    for &g in &layout.p_gens {
        lower.push(Some(net.generators[g].p_min));
        upper.push(Some(net.generators[g].p_max));
    }
    for &b in &layout.v_buses {
        lower.push(Some(net.buses[b].v_min));
        upper.push(Some(net.buses[b].v_max));
    }
    BoundsSpec { lower, upper }
}

fn run_seed(
    ds: &Dataset,
    net: &Network,
    cfg: &SearchConfig,
    space: &GridSearchSpace,
    opts: &RunOptions,
    seed: u64,
) -> Result<(EndToEndSeed, ModelFile), ExperimentError> {
    let split = SeedSplit::new(ds, opts, seed)?;
    let (xt, yt) = (features(&split.train), targets(&split.train));
    let (xs, ys) = (Standardizer::fit(xt.view()), Standardizer::fit(yt.view()));
    let zx = |d: &Dataset| xs.transform(features(d).view());
    let zy = |d: &Dataset| ys.transform(targets(d).view());
    let mut tc = space.base.clone();
    tc.seed = seed;
    if !cfg.penalty {
        tc.penalty_weight = 0.0;
    }
    let loss = LossSpec::Mse {
        bounds: target_bounds(ds, net),
        scale: Some(ys.clone()),
    };
    let model = init_model(&cfg.mlp(xt.ncols(), yt.ncols(), OutputHead::Linear), seed)?;
    let (model, history) = train(
        model,
        zx(&split.train)?.view(),
        zy(&split.train)?.view(),
        zx(&split.val)?.view(),
        zy(&split.val)?.view(),
        &loss,
        &tc,
    )?;
    let mut file = ModelFile::new(model, xs.clone(), Some(ys.clone()));
    let pred = file.predict(features(&split.test).view())?;

    let n = net.n_bus();
    let layout = &ds.manifest.target_layout;
    let mut reports = Vec::with_capacity(split.test.len());
    let (mut legal_indices, mut pred_cost, mut true_cost) = (Vec::new(), Vec::new(), Vec::new());
    for (i, s) in split.test.samples.iter().enumerate() {
        let inst = net.with_loads(&s.features[..n], &s.features[n..]);
        let row = pred.row(i).to_vec();
        let sp = layout.to_setpoints(&inst, &row, &s.features);
        let rep = check_legality(&inst, &sp, opts.legality_tol);
        if rep.legal {
            legal_indices.push(i);
            pred_cost.push(evaluate_cost(&inst.generators, &rep.p_gen));
            true_cost.push(s.true_cost);
        }
        reports.push(rep);
    }
    let legality_rate = metric_legality_rate(&reports)?;
    let avg_cost_deviation = if legal_indices.is_empty() {
        None
    } else {
        Some(metric_cost_deviation(&pred_cost, &true_cost)?)
    };
    let outcome = EndToEndSeed {
        seed,
        n_test: split.test.len(),
        legality_rate,
        avg_cost_deviation,
        legal_indices,
        epochs_run: history.epochs.len(),
        best_epoch: history.best_epoch,
    };
    file.history = Some(history);
    Ok((outcome, file))
}

/// Ranks by legality rate, then by lower cost deviation (missing counts as worst).
fn better(a: &EndToEndRow, b: &EndToEndRow) -> bool {
    let dev = |r: &EndToEndRow| r.avg_cost_deviation.unwrap_or(f64::INFINITY);
    a.legality_rate > b.legality_rate || (a.legality_rate == b.legality_rate && dev(a) < dev(b))
}

/// Trains every configuration in `space` to predict setpoints, re-solves each
/// test prediction by power flow and scores legality and cost.
pub fn run_end_to_end(
    ds: &Dataset,
    net: &Network,
    space: &GridSearchSpace,
    opts: &RunOptions,
) -> Result<EndToEndOutcome, ExperimentError> {
    space.validate()?;
    opts.validate()?;
    check_layout(ds, net)?;
    let results: Vec<(EndToEndRow, Option<ModelFile>)> = space
        .configs(true)
        .into_par_iter()
        .map(|cfg| {
            let mut seeds = Vec::new();
            let mut first = None;
            let mut error = None;
            for &seed in &opts.seeds {
                match run_seed(ds, net, &cfg, space, opts, seed) {
                    Ok((s, file)) => {
                        seeds.push(s);
                        first.get_or_insert(file);
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
            let row = EndToEndRow {
                label: cfg.label(),
                config: cfg,
                legality_rate: mean(seeds.iter().map(|s| s.legality_rate)).unwrap_or(0.0),
                avg_cost_deviation: if seeds.iter().all(|s| s.avg_cost_deviation.is_some()) {
                    mean(seeds.iter().filter_map(|s| s.avg_cost_deviation))
                } else {
                    None
                },
                seeds,
                error,
            };
            (row, first)
        })
        .collect();

    let mut best: Option<usize> = None;
    for (k, (row, _)) in results.iter().enumerate() {
        if row.error.is_none() && best.is_none_or(|b| better(row, &results[b].0)) {
            best = Some(k);
        }
    }
    let (rows, mut models): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let report = EndToEndReport {
        case_name: ds.manifest.case_name.clone(),
        options: opts.clone(),
        best_config: best,
        legality_rate: best.map_or(0.0, |b| rows[b].legality_rate),
        avg_cost_deviation: best.and_then(|b| rows[b].avg_cost_deviation),
        rows,
    };
    Ok(EndToEndOutcome {
        best_model: best.and_then(|b| models[b].take()),
        report,
    })
}
