use std::path::{Path, PathBuf};

use acopf_core::datagen::DatagenError;
use acopf_core::grid;
use acopf_core::opf::SolutionRecord;
use acopf_core::{
    extract_active_set, generate_dataset, load_dataset, parse_matpower_case, save_dataset, solve_acopf, solve_newton,
    split_dataset, Dataset, Network, OpfOptions, PfOptions, SetpointProfile,
};
use acopf_experiments::report::{
    constraint_csv, end_to_end_csv, report_stem, to_json, warm_start_csv, write_report,
};
use acopf_experiments::{
    run_constraint_prediction, run_end_to_end, run_warm_start_benchmark, ActivePredictor, ConstraintReport,
    EndToEndReport, ExperimentError, WarmStartReport,
};
use acopf_nn::ModelFile;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::{Cli, Command, Failure, Mode, Task};

type Res<T> = Result<T, Failure>;

fn usage(e: impl ToString) -> Failure {
    Failure::Usage(e.to_string())
}

fn domain(e: impl ToString) -> Failure {
    Failure::Domain(e.to_string())
}

fn experiment(e: ExperimentError) -> Failure {
    match e {
        ExperimentError::InvalidSpace(_) | ExperimentError::InvalidOptions(_) | ExperimentError::Layout(_) => usage(e),
        _ => domain(e),
    }
}

pub fn run(cli: &Cli) -> Res<()> {
    match &cli.command {
        Command::Validate { case } => validate(case),
        Command::Solve {
            case,
            mode,
            tol,
            max_iter,
        } => solve(case, *mode, *tol, *max_iter),
        Command::Generate { config } => generate(&load_config(cli, config)?),
        Command::Train { config, task } => train(&load_config(cli, config)?, *task),
        Command::BenchWarmstart {
            config,
            model,
            oracle,
            zeros,
            random,
        } => bench(&load_config(cli, config)?, model.as_deref(), *oracle, *zeros, *random),
        Command::Report { dir } => report(dir),
    }
}

fn load_config(cli: &Cli, path: &Path) -> Res<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path).map_err(usage)?;
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

/// Case text from a file path, or a bundled case by name.
fn case_text(case: &str) -> Res<String> {
    let path = Path::new(case);
    if path.exists() {
        return std::fs::read_to_string(path).map_err(|e| usage(format!("{case}: {e}")));
    }
    acopf_core::cases::bundled(case)
        .map(str::to_string)
        .ok_or_else(|| usage(format!("case file {case} does not exist")))
}

fn load_case(case: &str) -> Res<Network> {
    let text = case_text(case)?;
    let net = parse_matpower_case(&text).map_err(|e| domain(format!("{case}: {e}")))?;
    let problems = grid::validate(&net);
    if !problems.is_empty() {
        return Err(domain(format!("{case}: {}", problems.join("; "))));
    }
    Ok(net)
}

fn print_json<T: Serialize>(value: &T) {
    print!("{}", to_json(value));
}

fn validate(case: &str) -> Res<()> {
    let net = load_case(case)?;
    println!(
        "{}: {} buses, {} generators, {} branches: ok",
        net.name,
        net.n_bus(),
        net.n_gen(),
        net.branches.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct PfRecord {
    converged: bool,
    iterations: usize,
    max_mismatch: f64,
    v_mag: Vec<f64>,
    v_ang: Vec<f64>,
    p_gen: Vec<f64>,
    q_gen: Vec<f64>,
}

fn solve(case: &str, mode: Mode, tol: Option<f64>, max_iter: Option<usize>) -> Res<()> {
    let net = load_case(case)?;
    match mode {
        Mode::Pf => {
            let mut opts = PfOptions::default();
            if let Some(t) = tol {
                opts.tol = t;
            }
            if let Some(m) = max_iter {
                opts.max_iter = m;
            }
            let sol = solve_newton(&net, &SetpointProfile::from_network(&net), &opts).map_err(domain)?;
            print_json(&PfRecord {
                converged: sol.converged,
                iterations: sol.iterations,
                max_mismatch: sol.max_mismatch,
                v_mag: sol.state.v_mag,
                v_ang: sol.state.v_ang,
                p_gen: sol.p_gen,
                q_gen: sol.q_gen,
            });
        }
        Mode::Opf => {
            let mut opts = OpfOptions::default();
            if let Some(t) = tol {
                opts.kkt_tol = t;
            }
            if let Some(m) = max_iter {
                opts.max_iter = m;
            }
            opts.validate().map_err(usage)?;
            let sol = solve_acopf(&net, &opts, None).map_err(domain)?;
            let active = extract_active_set(&net, &sol, opts.active_eps).map_err(domain)?;
            print!("{}", SolutionRecord::new(&sol, &active).to_json());
            println!();
        }
    }
    Ok(())
}

fn generate(cfg: &ExperimentConfig) -> Res<()> {
    let net = load_case(&cfg.case_path.to_string_lossy())?;
    let dir = cfg.dataset_dir();
    let sampler = cfg.sampler();
    sampler.validate().map_err(usage)?;
    eprintln!("generating {} samples of {} into {}", sampler.n_target, net.name, dir.display());
    let (ds, exhausted) = match generate_dataset(&net, &sampler, &cfg.opf) {
        Ok(ds) => (ds, false),
        Err(DatagenError::Exhausted { partial }) => (*partial, true),
        Err(e) => return Err(usage(e)),
    };
    save_dataset(&ds, &dir).map_err(domain)?;
    let m = &ds.manifest;
    println!(
        "{}: {} solved of {} draws (convergence rate {:.4}), {} requested",
        m.case_name, m.solved, m.attempts, m.convergence_rate, m.requested
    );
    if exhausted {
        return Err(domain(format!("draw budget exhausted; partial dataset written to {}", dir.display())));
    }
    Ok(())
}

fn load_data(cfg: &ExperimentConfig) -> Res<(Network, Dataset)> {
    let net = load_case(&cfg.case_path.to_string_lossy())?;
    let dir = cfg.dataset_dir();
    if !dir.join("manifest.json").exists() {
        return Err(usage(format!("dataset {} does not exist", dir.display())));
    }
    let ds = load_dataset(&dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
    Ok((net, ds))
}

fn save_model(dir: &Path, stem: &str, model: &ModelFile) -> Res<PathBuf> {
    let models = dir.join("models");
    std::fs::create_dir_all(&models).map_err(domain)?;
    let path = models.join(format!("{stem}.json"));
    model.save(&path).map_err(domain)?;
    Ok(path)
}

fn train(cfg: &ExperimentConfig, task: Task) -> Res<()> {
    let (net, ds) = load_data(cfg)?;
    let space = cfg.space();
    let reports = cfg.output_dir.join("reports");
    match task {
        Task::E2e => {
            let out = run_end_to_end(&ds, &net, &space, &cfg.run).map_err(experiment)?;
            let r = &out.report;
            let stem = report_stem(&r.case_name, "e2e", &cfg.run.seeds);
            write_report(&reports, &stem, r, &end_to_end_csv(r)).map_err(domain)?;
            for row in r.rows.iter().filter(|r| r.error.is_some()) {
                eprintln!("config {} failed: {}", row.label, row.error.as_deref().unwrap_or(""));
            }
            let model = out.best_model.as_ref().ok_or_else(|| domain("every configuration failed"))?;
            let path = save_model(&cfg.output_dir, &stem, model)?;
            println!(
                "best {}: legality rate {:.4}, avg cost deviation {}; model {}",
                r.rows[r.best_config.unwrap_or(0)].label,
                r.legality_rate,
                r.avg_cost_deviation.map_or("n/a".into(), |d| format!("{d:.6}")),
                path.display()
            );
        }
        Task::Constraints => {
            let out = run_constraint_prediction(&ds, &space, &cfg.run).map_err(experiment)?;
            let r = &out.report;
            let stem = report_stem(&r.case_name, "constraints", &cfg.run.seeds);
            write_report(&reports, &stem, r, &constraint_csv(r)).map_err(domain)?;
            for row in r.rows.iter().filter(|r| r.error.is_some()) {
                eprintln!("config {} failed: {}", row.label, row.error.as_deref().unwrap_or(""));
            }
            let model = out.best_model.as_ref().ok_or_else(|| domain("every configuration failed"))?;
            let path = save_model(&cfg.output_dir, &stem, model)?;
            println!(
                "best {}: elementwise accuracy {:.4}, exact match {:.4}; model {}",
                r.rows[r.best_config.unwrap_or(0)].label,
                r.elementwise_accuracy,
                r.exact_match_rate,
                path.display()
            );
        }
    }
    Ok(())
}

fn bench(cfg: &ExperimentConfig, model: Option<&Path>, oracle: bool, zeros: bool, random: bool) -> Res<()> {
    let (net, ds) = load_data(cfg)?;
    let file;
    let predictor = if oracle {
        ActivePredictor::Oracle
    } else if zeros {
        ActivePredictor::Zeros
    } else if random {
        ActivePredictor::Random { seed: cfg.seed }
    } else {
        let path = model.ok_or_else(|| usage("a model path or one of --oracle, --zeros, --random is required"))?;
        file = ModelFile::load(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        ActivePredictor::Model(&file)
    };
    let seed = *cfg.run.seeds.first().ok_or_else(|| usage("run.seeds is empty"))?;
    let test = if ds.is_empty() {
        ds
    } else {
        split_dataset(&ds, cfg.run.test_fraction, seed).map_err(usage)?.1
    };
    let r = run_warm_start_benchmark(&test, &net, &predictor, &cfg.opf).map_err(experiment)?;
    let stem = report_stem(&r.case_name, &format!("warmstart-{}", r.predictor), &[seed]);
    write_report(&cfg.output_dir.join("reports"), &stem, &r, &warm_start_csv(&r)).map_err(domain)?;
    println!(
        "{} pairs ({} failures): warm <= cold on {:.4}, fewer on {:.4}, mean ratio {:.4}, {} regressions",
        r.pairs.len(),
        r.failures.len(),
        r.fraction_improved,
        r.fraction_strictly_fewer,
        r.mean_iteration_ratio,
        r.regressions
    );
    Ok(())
}

fn report(dir: &Path) -> Res<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut lines = Vec::new();
    for p in &paths {
        let Ok(text) = std::fs::read_to_string(p) else { continue };
        let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let line = if let Ok(r) = serde_json::from_str::<EndToEndReport>(&text) {
            format!(
                "{name},e2e,legality_rate={},avg_cost_deviation={}",
                r.legality_rate,
                r.avg_cost_deviation.map_or(String::new(), |d| d.to_string())
            )
        } else if let Ok(r) = serde_json::from_str::<ConstraintReport>(&text) {
            format!(
                "{name},constraints,elementwise_accuracy={},exact_match_rate={}",
                r.elementwise_accuracy, r.exact_match_rate
            )
        } else if let Ok(r) = serde_json::from_str::<WarmStartReport>(&text) {
            format!(
                "{name},warmstart,fraction_improved={},mean_iteration_ratio={}",
                r.fraction_improved, r.mean_iteration_ratio
            )
        } else {
            continue;
        };
        lines.push(line);
    }
    if lines.is_empty() {
        return Err(domain(format!("no reports in {}", dir.display())));
    }
    let text = lines.join("\n") + "\n";
    std::fs::write(dir.join("summary.txt"), &text).map_err(domain)?;
    print!("{text}");
    Ok(())
}
