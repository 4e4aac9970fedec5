use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_acopf");

const TWO_BUS: &str = "function mpc = tiny
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1	0	135	1	1.1	0.9;
	2	1	LOAD	0	0	0	1	1	0	135	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	300	-300	1	100	1	PMAX	PMIN	0	0	0	0	0	0	0	0	0	0	0;
];
mpc.branch = [
	1	2	0.01	0.1	0	0	0	0	0	0	1	-360	360;
];
mpc.gencost = [
	2	0	0	3	0.01	10	0;
];
";

fn tiny(load: &str, pmax: &str, pmin: &str) -> String {
    TWO_BUS.replace("LOAD", load).replace("PMAX", pmax).replace("PMIN", pmin)
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

#[test]
fn validate_statuses() {
    assert_eq!(run(&["validate", "case30"]).status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let truncated = dir.path().join("t.m");
    let text: String = acopf_core::cases::CASE30.lines().take(20).collect::<Vec<_>>().join("\n");
    std::fs::write(&truncated, text).unwrap();
    let o = run(&["validate", truncated.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line "), "{}", stderr(&o));
    let bad = dir.path().join("b.m");
    std::fs::write(&bad, tiny("50", "10", "20")).unwrap();
    let o = run(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("generator 0"), "{}", stderr(&o));
    assert_eq!(run(&["validate", "/no/such/file.m"]).status.code(), Some(2));
}

#[test]
fn solve_outputs() {
    let o = run(&["solve", "--mode", "opf", "case30"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&o);
    assert_eq!(v["active_set"].as_str().unwrap().len(), 72);
    assert!(v["objective"].as_f64().unwrap() > 500.0);

    let dir = tempfile::tempdir().unwrap();
    let zero = dir.path().join("z.m");
    std::fs::write(&zero, tiny("0", "250", "0")).unwrap();
    let o = run(&["solve", "--mode", "pf", zero.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&o);
    assert!(v["v_mag"].as_array().unwrap().iter().all(|x| x.as_f64() == Some(1.0)));
    assert!(v["v_ang"].as_array().unwrap().iter().all(|x| x.as_f64() == Some(0.0)));

    let o = run(&["solve", "--frobnicate", "case30"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn impossible_opf_is_a_domain_failure() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.m");
    std::fs::write(&p, tiny("500", "250", "0")).unwrap();
    let o = run(&["solve", "--mode", "opf", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

fn write_config(dir: &Path, extra: &str) -> String {
    let p = dir.join("config.json");
    let text = format!(
        r#"{{"version": 1, "case_path": "case30", "seed": 1,
            "sampler": {{"perturbation": 0.1, "n_target": 40}},
            "train": {{"max_epochs": 5, "batch_size": 16}},
            "search": {{"hidden_layer_options": [[8]], "activations": ["ReLU"], "penalty_options": [false]}},
            "run": {{"seeds": [0]}}{extra}}}"#
    );
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn pipeline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let outs: Vec<_> = ["a", "b"].iter().map(|d| dir.path().join(d)).collect();
    for out in &outs {
        let o = out.to_str().unwrap();
        let g = run(&["--threads", "1", "--out", o, "generate", &cfg]);
        assert_eq!(g.status.code(), Some(0), "{}", stderr(&g));
        assert!(String::from_utf8_lossy(&g.stdout).contains("convergence rate"));
        for task in ["e2e", "constraints"] {
            let t = run(&["--threads", "1", "--out", o, "train", &cfg, "--task", task]);
            assert_eq!(t.status.code(), Some(0), "{}", stderr(&t));
        }
        let model = out.join("models/case30_constraints_seed0.json");
        let b = run(&["--threads", "1", "--out", o, "bench-warmstart", &cfg, model.to_str().unwrap()]);
        assert_eq!(b.status.code(), Some(0), "{}", stderr(&b));
        let z = run(&["--out", o, "bench-warmstart", &cfg, "--zeros"]);
        assert_eq!(z.status.code(), Some(0), "{}", stderr(&z));
        assert!(String::from_utf8_lossy(&z.stdout).contains("mean ratio 1.0000"));
        let r = run(&["report", out.join("reports").to_str().unwrap()]);
        assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));
        assert_eq!(String::from_utf8_lossy(&r.stdout).lines().count(), 4);
    }
    for rel in [
        "dataset/samples.csv",
        "dataset/manifest.json",
        "models/case30_e2e_seed0.json",
        "models/case30_constraints_seed0.json",
        "reports/case30_e2e_seed0.json",
        "reports/case30_e2e_seed0.csv",
        "reports/case30_constraints_seed0.json",
        "reports/case30_warmstart-model_seed0.json",
        "reports/case30_warmstart-zeros_seed0.csv",
    ] {
        assert_eq!(read(&outs[0].join(rel)), read(&outs[1].join(rel)), "{rel}");
    }
    assert_eq!(std::fs::read_dir(outs[0].join("models")).unwrap().count(), 2);
}

#[test]
fn unperturbed_rows_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("\"perturbation\": 0.1, \"n_target\": 40", "\"perturbation\": 0.0, \"n_target\": 5");
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("o");
    let g = run(&["--out", out.to_str().unwrap(), "generate", &cfg]);
    assert_eq!(g.status.code(), Some(0), "{}", stderr(&g));
    let csv = std::fs::read_to_string(out.join("dataset/samples.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r == &rows[0]));
}

#[test]
fn exhausted_budget_keeps_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("\"n_target\": 40}", "\"n_target\": 40, \"max_attempts\": 3}");
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("o");
    let g = run(&["--out", out.to_str().unwrap(), "generate", &cfg]);
    assert_eq!(g.status.code(), Some(1));
    assert!(out.join("dataset/manifest.json").exists());
}

#[test]
fn config_and_data_errors_are_usage_failures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("empty");
    let t = run(&["--out", out.to_str().unwrap(), "train", &cfg, "--task", "e2e"]);
    assert_eq!(t.status.code(), Some(2));
    assert!(stderr(&t).contains("dataset"), "{}", stderr(&t));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"version": 3, "case_path": "case30"}"#).unwrap();
    assert_eq!(run(&["generate", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["report", dir.path().join("none").to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["--threads", "0", "validate", "case30"]).status.code(), Some(2));
}
