//! Black-box tests of the bc-dyn binary: exit codes, emitted file formats,
//! and byte-for-byte reproducibility of trajectory output.

use std::fs;
use std::process::{Command, Output};

fn run_cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bc-dyn"))
        .args(args)
        .output()
        .expect("binary starts")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("binary exits with a code")
}

fn stdout_text(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr_text(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const TWO_AGENTS: &str = r#"{"n":1,"positions":[[0.0],[0.5]]}"#;

#[test]
fn help_and_version_exit_zero() {
    for args in [&["--help"][..], &["--version"][..], &["run", "--help"][..]] {
        let out = run_cli(args);
        assert_eq!(code(&out), 0, "{args:?}: {}", stderr_text(&out));
    }
    let out = run_cli(&["--help"]);
    assert!(stdout_text(&out).contains("list-scenarios"));
}

#[test]
fn usage_and_io_errors_exit_one() {
    let cases: Vec<Vec<&str>> = vec![
        vec!["frobnicate"],
        vec!["run"],
        vec!["run", "--scenario", "no-such-preset"],
        vec!["run", "--model", "metric", "--init", "/no/such/file.json"],
        // positions row shorter than the declared dimension
        vec![
            "run",
            "--model",
            "metric",
            "--init",
            r#"{"n":2,"positions":[[1.0]]}"#,
        ],
        vec!["run", "--scenario", "ex-metric-inclusions", "--model", "metric"],
        vec!["run", "--model", "metric", "--kappa", "2", "--init", TWO_AGENTS],
        vec![
            "run",
            "--scenario",
            "ex-metric-inclusions",
            "--solution",
            "caratheodory",
            "--branch",
            "sliding",
        ],
        vec!["verify-all", "--filter", "no-such-preset"],
    ];
    for args in cases {
        let out = run_cli(&args);
        assert_eq!(
            code(&out),
            1,
            "{args:?} should fail as a usage error, stderr: {}",
            stderr_text(&out)
        );
    }
}

#[test]
fn trajectory_csv_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let init = dir.path().join("two.json");
    fs::write(&init, TWO_AGENTS).unwrap();
    let init = init.to_str().unwrap();

    let path_a = dir.path().join("a.csv");
    let path_b = dir.path().join("b.csv");
    let path_c = dir.path().join("c.csv");
    let base = ["run", "--model", "metric", "--tmax", "1", "--out"];

    for (out_path, init_arg) in [
        (&path_a, init),
        (&path_b, init),
        // inline initial state instead of a file
        (&path_c, TWO_AGENTS),
    ] {
        let mut args: Vec<&str> = base.to_vec();
        args.push(out_path.to_str().unwrap());
        args.extend_from_slice(&["--init", init_arg]);
        let out = run_cli(&args);
        assert_eq!(code(&out), 0, "stderr: {}", stderr_text(&out));
        assert!(stdout_text(&out).contains("wrote trajectory"));
    }

    let a = fs::read(&path_a).unwrap();
    assert_eq!(a, fs::read(&path_b).unwrap(), "rerun changed the bytes");
    assert_eq!(a, fs::read(&path_c).unwrap(), "inline init changed the bytes");

    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x_1_1,x_2_1,event"));
    let first = lines.next().expect("has a first sample");
    assert_eq!(
        first,
        "0.0000000000000000e0,0.0000000000000000e0,5.0000000000000000e-1,"
    );
    // every row carries the same column count, full precision, no NaN
    for line in text.lines().skip(1) {
        assert_eq!(line.split(',').count(), 4, "bad row {line}");
        assert!(!line.contains("NaN"), "bad row {line}");
    }
}

#[test]
fn report_json_contract() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = run_cli(&[
        "run",
        "--scenario",
        "ex-w-increasing-k2",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr_text(&out));

    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["scenario"], "ex-w-increasing-k2");
    assert_eq!(v["model"]["type"], "topological");
    assert_eq!(v["model"]["kappa"], 2);
    assert_eq!(v["solution"], "caratheodory");
    assert_eq!(v["branches"], 1);
    assert_eq!(v["terminal"].as_array().unwrap().len(), 8);
    assert!(v["clusters"]["blocks"].is_array());
    assert_eq!(v["lyapunov"]["name"], "W");
    let props = v["properties"].as_array().unwrap();
    assert!(!props.is_empty());
    let monotone = props
        .iter()
        .find(|p| p["property"] == "lyapunov-monotonicity")
        .expect("energy check present");
    // this preset is the energy counterexample, so the monitor must flag it
    assert_eq!(monotone["pass"], false);
}

#[test]
fn branch_tree_output() {
    let dir = tempfile::tempdir().unwrap();
    let tree = dir.path().join("branches.json");
    let out = run_cli(&[
        "run",
        "--scenario",
        "ex-metric-inclusions",
        "--branches-out",
        tree.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr_text(&out));
    assert!(stdout_text(&out).contains("wrote branch tree"));

    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&tree).unwrap()).unwrap();
    assert_eq!(v["leaves"].as_array().unwrap().len(), 3);
    let nodes = v["nodes"].as_array().unwrap();
    assert!(nodes.len() >= 4, "root plus three continuations");
    for node in nodes {
        let state = node["terminal_state"]["positions"].as_array().unwrap();
        assert_eq!(state.len(), 3);
    }
}

#[test]
fn strict_preset_run_exits_zero() {
    let out = run_cli(&["run", "--scenario", "ex-pseudoforest-line", "--strict"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr_text(&out));
    assert!(stdout_text(&out).contains("strict: all checks passed"));
}

#[test]
fn strict_run_flags_unstable_step() {
    // Two isolated mutual pairs under the one-nearest rule: a step of 2 makes
    // the fixed-step integrator unstable, the pairs fly apart, and the strict
    // verification layer must refuse the output.
    let out = run_cli(&[
        "run",
        "--model",
        "topological",
        "--kappa",
        "1",
        "--init",
        r#"{"n":1,"positions":[[0.0],[0.9],[100.0],[101.1]]}"#,
        "--dt",
        "2",
        "--tmax",
        "4",
        "--strict",
    ]);
    assert_eq!(code(&out), 2, "stderr: {}", stderr_text(&out));
    let err = stderr_text(&out);
    assert!(
        err.contains("strict: expected property support-contractivity failed"),
        "stderr: {err}"
    );
}

#[test]
fn list_scenarios_names_every_preset() {
    let out = run_cli(&["list-scenarios"]);
    assert_eq!(code(&out), 0);
    let text = stdout_text(&out);
    for name in [
        "ex-metric-inclusions",
        "ex-clusters-at-distance-1",
        "ex-krasovsky-eq-not-cluster",
        "ex-w-increasing-krasovsky",
        "ex-pseudoforest-2d",
    ] {
        assert!(text.contains(name), "missing {name}");
    }
    assert!(text.contains("expect:"), "expected-outcome lines missing");
}

#[test]
fn verify_all_passes_and_filters() {
    let out = Command::new(env!("CARGO_BIN_EXE_bc-dyn"))
        .args(["verify-all"])
        .env("BC_DYN_THREADS", "2")
        .output()
        .expect("binary starts");
    assert_eq!(code(&out), 0, "stderr: {}", stderr_text(&out));
    let text = stdout_text(&out);
    assert!(text.contains("12/12 presets passed"), "summary: {text}");
    assert!(text.contains("property matrix as recorded"), "matrix: {text}");

    let out = run_cli(&["verify-all", "--filter", "ex-pseudoforest-line"]);
    assert_eq!(code(&out), 0);
    let text = stdout_text(&out);
    assert!(text.contains("PASS ex-pseudoforest-line"));
    assert!(text.contains("1/1 presets passed"));

    let out = run_cli(&["verify-all", "--filter", ""]);
    assert_eq!(code(&out), 0);
    assert!(stdout_text(&out).contains("nothing to verify"));
}
