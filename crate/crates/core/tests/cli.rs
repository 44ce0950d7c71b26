use std::path::Path;
use std::process::{Command, Output};

fn sacebart(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sacebart"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

#[test]
fn full_pipeline_runs_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(
        d,
        "run.json",
        r#"{
  "simulate": {"dgp": "dgp-a", "n_units": 200, "oracle_units": 20000},
  "data": {"path": "run/data.csv", "schema": "run/schema.json"},
  "chains": 2,
  "sampler": {"n_iter": 120, "burn_in": 60, "init_restarts": 1, "pilot_iters": 10},
  "fit": {"checkpoint_every": 50},
  "subgroups": {"cart": {"min_leaf": 10}},
  "timestamps": false,
  "out": "run"
}"#,
    );
    for cmd in ["simulate", "fit", "summarize", "subgroups", "diagnose"] {
        let out = sacebart(
            d,
            &[cmd, "--config", "run.json", "--seed", "5", "--threads", "1"],
        );
        assert!(
            out.status.success(),
            "{cmd}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for file in [
        "data.csv",
        "schema.json",
        "truth.json",
        "draws/draws.json",
        "diagnostics.json",
        "summary.json",
        "units.csv",
        "likely.json",
        "subgroups.json",
        "checkpoints/chain1.json",
    ] {
        assert!(d.join("run").join(file).exists(), "{file} missing");
    }
    let read =
        |dir: &str| std::fs::read_to_string(d.join(dir).join("draws/draws_units.csv")).unwrap();
    let rows = |csv: &str| {
        csv.lines()
            .filter(|l| !l.starts_with('#'))
            .map(String::from)
            .collect::<Vec<_>>()
    };
    let out = sacebart(
        d,
        &[
            "fit", "--config", "run.json", "--seed", "5", "--out", "again",
        ],
    );
    assert!(out.status.success());
    let first = read("run");
    assert_eq!(rows(&read("again")), rows(&first));
    assert!(first.starts_with("# sacebart"));
    assert!(first.contains("# seeds: 5,"));
}

#[test]
fn bad_configs_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "unknown.json", r#"{"bogus": 1}"#);
    write(d, "p.json", r#"{"summary": {"p": 1.5}}"#);
    write(d, "restarts.json", r#"{"sampler": {"init_restarts": 0}}"#);
    for name in ["unknown.json", "p.json", "restarts.json", "missing.json"] {
        let out = sacebart(d, &["fit", "--config", name]);
        assert_eq!(out.status.code(), Some(2), "{name}");
    }
    assert_eq!(sacebart(d, &["frobnicate"]).status.code(), Some(2));
}

#[test]
fn bad_input_data_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "data.csv", "id,treat,alive,outcome,X1\n1,1,1,0.5,0.1\n");
    write(
        d,
        "run.json",
        r#"{"data": {"path": "data.csv", "covariates": [{"name": "X1", "kind": "continuous"}]}}"#,
    );
    let out = sacebart(d, &["fit", "--config", "run.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = sacebart(d, &["summarize", "--config", "run.json"]);
    assert_eq!(out.status.code(), Some(3));
}
