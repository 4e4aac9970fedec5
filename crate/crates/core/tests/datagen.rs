use acopf_core::cases::{CASE118, CASE30};
use acopf_core::datagen::{
    draw_rng, generate_dataset, load_dataset, sample_load, save_dataset, split_dataset, DatagenError,
    SamplerConfig, TargetLayout,
};
use acopf_core::{
    extract_active_set, parse_matpower_case, solve_acopf, warm_start_from_active_set, Network,
    OpfOptions,
};

fn case30() -> Network {
    parse_matpower_case(CASE30).unwrap()
}

fn small_dataset(n: usize, seed: u64) -> acopf_core::Dataset {
    generate_dataset(&case30(), &SamplerConfig::new(0.1, n, seed), &OpfOptions::default()).unwrap()
}

#[test]
fn sample_means_match_base() {
    let base = case30();
    let draws = 10_000;
    let mut sum = vec![0.0; base.n_bus()];
    for k in 0..draws {
        let net = sample_load(&base, 0.1, &mut draw_rng(99, k));
        for (s, b) in sum.iter_mut().zip(&net.buses) {
            *s += b.p_load;
        }
    }
    for (i, bus) in base.buses.iter().enumerate() {
        // Uniform on ±10%: standard deviation 0.2·x/√12.
        let se = 0.2 * bus.p_load.abs() / 12f64.sqrt() / (draws as f64).sqrt();
        let mean = sum[i] / draws as f64;
        assert!((mean - bus.p_load).abs() <= 3.0 * se + 1e-15, "bus {i}");
    }
}

#[test]
fn identical_across_thread_counts() {
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| small_dataset(40, 11))
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn features_and_lengths() {
    let base = case30();
    let ds = small_dataset(30, 4);
    let m = &ds.manifest;
    assert_eq!(m.solved, 30);
    assert!(m.attempts >= 30 && (m.convergence_rate - 30.0 / m.attempts as f64).abs() < 1e-15);
    assert_eq!(m.n_targets(), 5 + 5);
    for s in &ds.samples {
        assert_eq!(s.features.len(), 60);
        assert_eq!(s.active_labels.len(), 72);
        for (i, bus) in base.buses.iter().enumerate() {
            for (x, b) in [(s.features[i], bus.p_load), (s.features[30 + i], bus.q_load)] {
                let (a, c) = (0.9 * b, 1.1 * b);
                assert!(x >= a.min(c) && x <= a.max(c));
            }
        }
    }
}

#[test]
fn unperturbed_single_sample_is_base_solution() {
    let base = case30();
    let opts = OpfOptions::default();
    let ds = generate_dataset(&base, &SamplerConfig::new(0.0, 1, 0), &opts).unwrap();
    let sol = solve_acopf(&base, &opts, None).unwrap();
    let layout = TargetLayout::new(&base).unwrap();
    assert_eq!(ds.samples[0].targets, layout.extract(&sol));
    assert_eq!(ds.samples[0].true_cost, sol.objective);
    assert_eq!(ds.manifest.attempts, 1);
}

#[test]
fn exhausted_budget_returns_partial() {
    let mut cfg = SamplerConfig::new(0.1, 50, 3);
    cfg.max_attempts = 20;
    match generate_dataset(&case30(), &cfg, &OpfOptions::default()) {
        Err(DatagenError::Exhausted { partial }) => {
            assert_eq!(partial.manifest.attempts, 20);
            assert!(partial.len() < 50);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn save_load_round_trip() {
    let ds = small_dataset(25, 8);
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    assert_eq!(load_dataset(dir.path()).unwrap(), ds);

    let mut empty = ds.clone();
    empty.samples.clear();
    empty.manifest.solved = 0;
    let dir2 = tempfile::tempdir().unwrap();
    save_dataset(&empty, dir2.path()).unwrap();
    assert!(!dir2.path().join("samples.csv").exists());
    assert_eq!(load_dataset(dir2.path()).unwrap(), empty);
}

#[test]
fn tampered_files_rejected() {
    let ds = small_dataset(5, 8);
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    let csv = dir.path().join("samples.csv");
    let text = std::fs::read_to_string(&csv).unwrap();
    std::fs::write(&csv, text.replacen("f_0", "x_0", 1)).unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(DatagenError::FormatVersionMismatch(_))));

    save_dataset(&ds, dir.path()).unwrap();
    let man = dir.path().join("manifest.json");
    let text = std::fs::read_to_string(&man).unwrap();
    std::fs::write(&man, text.replace("\"format_version\": 1", "\"format_version\": 7")).unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(DatagenError::FormatVersionMismatch(_))));
}

#[test]
fn split_partitions_deterministically() {
    let ds = small_dataset(100, 2);
    let (train, test) = split_dataset(&ds, 0.1, 5).unwrap();
    assert_eq!((train.len(), test.len()), (90, 10));
    let (train2, test2) = split_dataset(&ds, 0.1, 5).unwrap();
    assert_eq!((&train, &test), (&train2, &test2));
    let mut all: Vec<String> = train.samples.iter().chain(&test.samples).map(|s| format!("{:?}", s.features)).collect();
    let mut orig: Vec<String> = ds.samples.iter().map(|s| format!("{:?}", s.features)).collect();
    all.sort();
    orig.sort();
    assert_eq!(all, orig);
    assert!(matches!(split_dataset(&ds, 0.0, 1), Err(DatagenError::TooSmall { .. })));
    let tiny = split_dataset(&ds, 0.1, 5).unwrap().1;
    assert!(split_dataset(&split_dataset(&tiny, 0.5, 1).unwrap().1, 0.01, 1).is_err());
}

#[test]
fn labels_survive_warm_resolve() {
    let base = case30();
    let opts = OpfOptions::default();
    let ds = small_dataset(40, 21);
    let layout = &ds.manifest.target_layout;
    let mut agree = 0;
    for s in &ds.samples {
        let n = base.n_bus();
        let net = base.with_loads(&s.features[..n], &s.features[n..]);
        let sp = layout.to_setpoints(&net, &s.targets, &s.features);
        let hint = warm_start_from_active_set(&net, &s.active_labels, &sp).unwrap();
        let sol = solve_acopf(&net, &opts, Some(&hint)).unwrap();
        if extract_active_set(&net, &sol, opts.active_eps).unwrap() == s.active_labels {
            agree += 1;
        }
    }
    assert!(agree as f64 >= 0.99 * ds.len() as f64, "{agree}/{}", ds.len());
}

#[test]
fn case118_solves_nearly_always() {
    let base = parse_matpower_case(CASE118).unwrap();
    let cfg = SamplerConfig::new(0.1, 10, 1);
    let ds = generate_dataset(&base, &cfg, &OpfOptions::default()).unwrap();
    assert!(ds.manifest.convergence_rate >= 0.9, "{}", ds.manifest.convergence_rate);
}
