use std::path::Path;
use std::process::{Command, Output};

fn lpqp(args: &[&str], paths: &[&Path]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lpqp"));
    cmd.args(args);
    cmd.args(paths);
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn field(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(key).map(|v| v.trim().to_string()))
        .unwrap_or_else(|| panic!("no `{key}` line in {text:?}"))
}

#[test]
fn generate_solve_and_score() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("grid.uai");
    let out = lpqp(&["gen-potts", "--size", "3", "--states", "2", "--sigma", "0.5", "--seed", "4", "--out"], &[&model]);
    assert!(out.status.success());

    let exact = lpqp(&["brute-force", "--model"], &[&model]);
    assert!(exact.status.success());
    let optimum: f64 = field(&stdout(&exact), "energy").parse().unwrap();

    let result = dir.path().join("result.json");
    let trace = dir.path().join("trace.csv");
    let solved = Command::new(env!("CARGO_BIN_EXE_lpqp"))
        .arg("solve")
        .arg("--model")
        .arg(&model)
        .arg("--out")
        .arg(&result)
        .arg("--trace")
        .arg(&trace)
        .output()
        .unwrap();
    assert_eq!(solved.status.code(), Some(0));
    let text = stdout(&solved);
    assert_eq!(field(&text, "status"), "converged");
    let found: f64 = field(&text, "energy").parse().unwrap();
    assert!(found >= optimum - 1e-9);

    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&result).unwrap()).unwrap();
    assert_eq!(json["status"], "converged");
    assert_eq!(json["assignment"].as_array().unwrap().len(), 9);
    assert!(json["wall_time"].is_null());
    let csv = std::fs::read_to_string(&trace).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap().split(',').count(), 10);
    assert!(lines.all(|l| l.split(',').count() == 10));

    let scored = lpqp(&["score", "--energies", &found.to_string(), "0", "--optimum", &optimum.to_string()], &[]);
    assert!(scored.status.success());
    let scores: Vec<f64> = stdout(&scored).split_whitespace().map(|s| s.parse().unwrap()).collect();
    assert_eq!(scores.len(), 2);
    assert_eq!(scores[1], 0.0);
}

#[test]
fn gibbs_marginals_are_normalized_json() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("grid.json");
    assert!(lpqp(&["gen-potts", "--size", "2", "--states", "3", "--sigma", "1", "--out"], &[&model]).status.success());
    let out = lpqp(&["oracle-gibbs", "--temperature", "0.5", "--model"], &[&model]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    for block in json["nodes"].as_array().unwrap().iter().chain(json["edges"].as_array().unwrap()) {
        let total: f64 = block.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn sequential_flag_gives_identical_output() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("grid.uai");
    assert!(lpqp(&["gen-potts", "--size", "4", "--states", "3", "--sigma", "0.5", "--seed", "2", "--out"], &[&model])
        .status
        .success());
    for method in ["uniform", "tree"] {
        let run = |extra: &[&str]| {
            let mut args = vec!["solve", "--method", method];
            args.extend_from_slice(extra);
            args.push("--model");
            let o = lpqp(&args, &[&model]);
            assert!(matches!(o.status.code(), Some(0) | Some(2)));
            stdout(&o)
        };
        assert_eq!(run(&[]), run(&["--sequential"]), "{method}");
    }
}

#[test]
fn batch_mode_solves_every_model_in_sorted_order() {
    let dir = tempfile::tempdir().unwrap();
    let models = dir.path().join("models");
    std::fs::create_dir(&models).unwrap();
    for (name, seed) in [("b.uai", "1"), ("a.json", "2")] {
        let path = models.join(name);
        assert!(lpqp(&["gen-potts", "--size", "2", "--states", "2", "--sigma", "0.5", "--seed", seed, "--out"], &[&path])
            .status
            .success());
    }
    let results = dir.path().join("results");
    let out = Command::new(env!("CARGO_BIN_EXE_lpqp"))
        .arg("solve")
        .arg("--model")
        .arg(&models)
        .arg("--out")
        .arg(&results)
        .output()
        .unwrap();
    assert!(out.status.success());
    let names: Vec<String> = stdout(&out).lines().map(|l| l.split(' ').next().unwrap().to_string()).collect();
    assert_eq!(names.len(), 2);
    assert!(names[0].starts_with('a') && names[1].starts_with('b'));
    assert_eq!(std::fs::read_dir(&results).unwrap().count(), 2);
}

#[test]
fn bad_input_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.uai");
    assert_eq!(lpqp(&["solve", "--model"], &[&missing]).status.code(), Some(1));
    let garbage = dir.path().join("garbage.uai");
    std::fs::write(&garbage, "MARKOV\n2\n").unwrap();
    let out = lpqp(&["solve", "--model"], &[&garbage]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
    assert_eq!(lpqp(&["solve", "--rho-factor", "0.5", "--model"], &[&garbage]).status.code(), Some(1));
    assert_eq!(lpqp(&["no-such-command"], &[]).status.code(), Some(1));
}
