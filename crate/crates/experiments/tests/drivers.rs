use std::sync::OnceLock;

use acopf_core::cases::CASE30;
use acopf_core::{check_legality, evaluate_cost, generate_dataset, parse_matpower_case, split_dataset, Dataset, Network, OpfOptions, SamplerConfig};
use acopf_experiments::report::{constraint_csv, end_to_end_csv};
use acopf_experiments::{
    metric_cost_deviation, run_constraint_prediction, run_end_to_end, run_warm_start_benchmark, ActivePredictor,
    GridSearchSpace, RunOptions, SeedSplit,
};
use acopf_nn::{Activation, TrainConfig};

fn net() -> Network {
    parse_matpower_case(CASE30).unwrap()
}

fn data() -> &'static Dataset {
    static DS: OnceLock<Dataset> = OnceLock::new();
    DS.get_or_init(|| generate_dataset(&net(), &SamplerConfig::new(0.1, 150, 77), &OpfOptions::default()).unwrap())
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig {
        max_epochs: epochs,
        batch_size: 32,
        ..TrainConfig::default()
    }
}

fn one_seed() -> RunOptions {
    RunOptions {
        seeds: vec![3],
        ..RunOptions::default()
    }
}

#[test]
fn constant_targets_are_learned_legally() {
    let ds = generate_dataset(&net(), &SamplerConfig::new(0.0, 60, 1), &OpfOptions::default()).unwrap();
    let space = GridSearchSpace::single(
        vec![16],
        Activation::ReLU,
        false,
        TrainConfig {
            learning_rate: 1e-2,
            ..quick(400)
        },
    );
    let out = run_end_to_end(&ds, &net(), &space, &one_seed()).unwrap();
    assert_eq!(out.report.rows.len(), 1);
    assert!(out.report.legality_rate >= 0.99, "{}", out.report.legality_rate);
    assert!(out.report.avg_cost_deviation.unwrap() < 1e-3);
}

#[test]
fn grid_rows_and_legal_sets_are_consistent() {
    let ds = data();
    let mut space = GridSearchSpace::single(vec![16], Activation::Tanh, false, quick(20));
    space.penalty_options = vec![false, true];
    let opts = RunOptions {
        seeds: vec![0, 1],
        ..RunOptions::default()
    };
    let out = run_end_to_end(ds, &net(), &space, &opts).unwrap();
    let r = &out.report;
    assert_eq!(r.rows.len(), 2);
    assert_eq!(end_to_end_csv(r).lines().count(), 3);
    assert!(out.best_model.is_some());
    let base = net();
    let n = base.n_bus();
    // Re-derive the first row's seed-0 numbers from its legal index set.
    let row = &r.rows[out.report.best_config.unwrap()];
    let s0 = &row.seeds[0];
    assert!((0.0..=1.0).contains(&r.legality_rate));
    assert_eq!(s0.legal_indices.len() as f64 / s0.n_test as f64, s0.legality_rate);
    let model = out.best_model.as_ref().unwrap();
    let split = SeedSplit::new(ds, &opts, 0).unwrap();
    let feats: Vec<f64> = split.test.samples.iter().flat_map(|s| s.features.clone()).collect();
    let x = ndarray::Array2::from_shape_vec((split.test.len(), 2 * n), feats).unwrap();
    let pred = model.predict(x.view()).unwrap();
    let (mut legal, mut pc, mut tc) = (Vec::new(), Vec::new(), Vec::new());
    for (i, s) in split.test.samples.iter().enumerate() {
        let inst = base.with_loads(&s.features[..n], &s.features[n..]);
        let sp = ds.manifest.target_layout.to_setpoints(&inst, &pred.row(i).to_vec(), &s.features);
        let rep = check_legality(&inst, &sp, opts.legality_tol);
        if rep.legal {
            legal.push(i);
            pc.push(evaluate_cost(&inst.generators, &rep.p_gen));
            tc.push(s.true_cost);
        }
    }
    assert_eq!(legal, s0.legal_indices);
    if !legal.is_empty() {
        assert_eq!(Some(metric_cost_deviation(&pc, &tc).unwrap()), s0.avg_cost_deviation);
    }
}

#[test]
fn all_zero_labels_are_trivially_predicted() {
    let mut ds = data().clone();
    for s in &mut ds.samples {
        s.active_labels.bits.iter_mut().for_each(|b| *b = false);
    }
    let space = GridSearchSpace::single(vec![8], Activation::ReLU, false, quick(60));
    let out = run_constraint_prediction(&ds, &space, &one_seed()).unwrap();
    assert_eq!(out.report.elementwise_accuracy, 1.0);
    assert_eq!(out.report.never_active.len(), ds.manifest.n_labels());
    assert_eq!(constraint_csv(&out.report).lines().count(), 2);
}

#[test]
fn constraint_report_breakdown() {
    let ds = data();
    let space = GridSearchSpace::single(vec![32], Activation::ReLU, false, quick(100));
    let out = run_constraint_prediction(ds, &space, &one_seed()).unwrap();
    let r = &out.report;
    assert!(r.elementwise_accuracy > 0.9, "{}", r.elementwise_accuracy);
    assert_eq!(r.breakdown.len(), 72);
    assert_eq!(r.breakdown[6].name, "Q_G[0]");
    let macro_acc = r.breakdown.iter().map(|b| b.accuracy).sum::<f64>() / 72.0;
    assert!((macro_acc - r.macro_accuracy).abs() < 1e-12);
    // The default angle bounds are never active.
    assert!((42..72).all(|k| r.never_active.contains(&k)));
}

#[test]
fn warm_start_predictors() {
    let ds = data();
    let test = split_dataset(ds, 0.2, 4).unwrap().1;
    let opts = OpfOptions::default();
    let zeros = run_warm_start_benchmark(&test, &net(), &ActivePredictor::Zeros, &opts).unwrap();
    assert_eq!(zeros.mean_iteration_ratio, 1.0);
    assert_eq!(zeros.max_abs_rel_objective_diff, 0.0);
    let oracle = run_warm_start_benchmark(&test, &net(), &ActivePredictor::Oracle, &opts).unwrap();
    assert!(oracle.fraction_improved >= 0.7, "{}", oracle.fraction_improved);
    assert_eq!(oracle.regressions, 0);
    let random = run_warm_start_benchmark(&test, &net(), &ActivePredictor::Random { seed: 9 }, &opts).unwrap();
    assert!(random.pairs.len() as f64 >= 0.95 * test.len() as f64, "{:?}", random.failures);
    let mut empty = test.clone();
    empty.samples.clear();
    assert!(run_warm_start_benchmark(&empty, &net(), &ActivePredictor::Oracle, &opts).is_err());
}

#[test]
fn mismatched_network_is_rejected() {
    let other = parse_matpower_case(acopf_core::cases::CASE118).unwrap();
    let space = GridSearchSpace::single(vec![4], Activation::ReLU, false, quick(1));
    assert!(run_end_to_end(data(), &other, &space, &one_seed()).is_err());
}
