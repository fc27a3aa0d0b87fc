use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_supcert")).args(args).env_remove("SUPCERT_TOL").output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn check_r1_exits_zero() {
    let out = run(&["check", path(&fixture("r1_qubit.json"))]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["region"], "R1");
}

#[test]
fn check_r5_exits_two() {
    let out = run(&["check", path(&fixture("r5_qubit.json"))]);
    assert_eq!(code(&out), 2);
    assert_eq!(json(&out)["region"], "R5");
}

#[test]
fn truncated_input_exits_one() {
    for cmd in ["check", "plan"] {
        let out = run(&[cmd, path(&fixture("truncated.json"))]);
        assert_eq!(code(&out), 1, "{cmd}");
        assert!(out.stdout.is_empty());
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn missing_file_and_bad_usage_exit_one() {
    assert_eq!(code(&run(&["check", "/nonexistent/problem.json"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["gram", "--d", "2"])), 1);
}

#[test]
fn plan_d3_probabilities() {
    let out = run(&["plan", path(&fixture("d3_quarter.json"))]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    let probs: Vec<f64> = serde_json::from_value(v["probs"].clone()).unwrap();
    let expected = [2947.0 / 3519.0, 1.0 / 153.0, 61.0 / 391.0];
    for (p, e) in probs.iter().zip(expected) {
        assert!((p - e).abs() < 1e-9, "{probs:?}");
    }
    assert_eq!(v["verified"], true);
}

#[test]
fn plan_d5_mixed_is_unsupported() {
    let out = run(&["plan", path(&fixture("d5_mixed.json"))]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unsupported case"));
}

#[test]
fn plan_refusal_exits_two_with_report() {
    let out = run(&["plan", path(&fixture("r5_qubit.json"))]);
    assert_eq!(code(&out), 2);
    let v = json(&out);
    assert_eq!(v["refused"], true);
    assert_eq!(v["report"]["region"], "R5");
    assert_eq!(v["reason"]["kind"], "majorization");
}

#[test]
fn tolerance_flag_and_env_loosen_boundary() {
    let f = fixture("boundary.json");
    assert_eq!(code(&run(&["plan", path(&f)])), 2);
    assert_eq!(code(&run(&["plan", "--tol", "1e-6", path(&f)])), 0);
    let out = Command::new(env!("CARGO_BIN_EXE_supcert")).args(["check", path(&f)]).env("SUPCERT_TOL", "1e-6").output().unwrap();
    assert_eq!(code(&out), 0);
    assert_eq!(code(&run(&["check", "--tol", "-1", path(&f)])), 1);
}

#[test]
fn plan_verify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["r1_qubit.json", "d3_quarter.json", "maximal_d3.json"] {
        let input = fixture(name);
        let plan_file = dir.path().join(format!("{name}.plan"));
        let ops = dir.path().join(format!("{name}.ops"));
        let out = run(&["plan", path(&input), "--emit-ops", path(&ops)]);
        assert_eq!(code(&out), 0, "{name}");
        fs::write(&plan_file, &out.stdout).unwrap();
        let v = run(&["verify", path(&plan_file), path(&input)]);
        assert_eq!(code(&v), 0, "{name}: {}", String::from_utf8_lossy(&v.stderr));
        assert_eq!(json(&v)["passed"], true);
        let v = run(&["verify", path(&plan_file), path(&input), "--ops", path(&ops)]);
        assert_eq!(code(&v), 0, "{name} with dump");
    }
}

#[test]
fn corrupted_operator_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture("r1_qubit.json");
    let out = run(&["plan", path(&input)]);
    let mut v = json(&out);
    let entry = &mut v["kraus_ops"][0][0][0];
    *entry = Value::from(entry.as_f64().unwrap() + 0.01);
    let plan_file = dir.path().join("bad.json");
    fs::write(&plan_file, serde_json::to_vec(&v).unwrap()).unwrap();
    let out = run(&["verify", path(&plan_file), path(&input)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("kraus_action"));
    assert_eq!(json(&out)["passed"], false);
}

#[test]
fn verify_dimension_mismatch_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let plan_file = dir.path().join("plan.json");
    fs::write(&plan_file, run(&["plan", path(&fixture("r1_qubit.json"))]).stdout).unwrap();
    assert_eq!(code(&run(&["verify", path(&plan_file), path(&fixture("d3_quarter.json"))])), 1);
}

#[test]
fn maximal_states() {
    let out = run(&["maximal", "--d", "3", "--mu", "-0.25", "--sign", "plus"]);
    assert_eq!(code(&out), 0);
    let c: Vec<f64> = serde_json::from_value(json(&out)["coeffs"].clone()).unwrap();
    assert!(c.iter().all(|x| (x - 1.0 / 1.5f64.sqrt()).abs() < 1e-12));

    let out = run(&["maximal", "--d", "2", "--mu", "0.3", "--sign", "minus"]);
    let c: Vec<f64> = serde_json::from_value(json(&out)["coeffs"].clone()).unwrap();
    let k = 1.0 / (2.0f64 * 0.7).sqrt();
    assert!((c[0] - k).abs() < 1e-12 && (c[1] + k).abs() < 1e-12);

    let out = run(&["maximal", "--d", "4", "--mu", "-0.4"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("outside the admissible interval"));
}

#[test]
fn gram_diagnostics() {
    let out = run(&["gram", "--d", "3", "--mu", "-0.25"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["ok"], true);
    assert!((v["det"].as_f64().unwrap() - 0.78125).abs() < 1e-12);
    assert_eq!(code(&run(&["gram", "--d", "3", "--mu", "-0.5"])), 2);
}

#[test]
fn scan_reports_census_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("census.csv");
    let out = run(&["scan", "--d", "2", "--mu", "0.5", "--resolution", "12", "--csv", path(&csv)]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["pairs"], 144);
    assert_eq!(v["disagreements"].as_array().unwrap().len(), 0);
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 145);
    assert!(text.starts_with("psi,phi,region,"));

    let out = run(&["scan", "--d", "3", "--mu", "-0.25", "--resolution", "4", "--source", "3,2,1", "--target", "4,2,1", "--target", "4,2,-1"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["pairs"], 18);
}

#[test]
fn batch_orders_by_filename() {
    let dir = tempfile::tempdir().unwrap();
    for (dst, src) in [("b.json", "r5_qubit.json"), ("a.json", "r1_qubit.json"), ("c.json", "truncated.json")] {
        fs::copy(fixture(src), dir.path().join(dst)).unwrap();
    }
    fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let out = run(&["check", "--batch", path(dir.path())]);
    assert_eq!(code(&out), 1);
    let v = json(&out);
    let files: Vec<&str> = v.as_array().unwrap().iter().map(|r| r["file"].as_str().unwrap()).collect();
    assert_eq!(files, ["a.json", "b.json", "c.json"]);
    let exits: Vec<i64> = v.as_array().unwrap().iter().map(|r| r["exit"].as_i64().unwrap()).collect();
    assert_eq!(exits, [0, 2, 1]);
    fs::remove_file(dir.path().join("c.json")).unwrap();
    assert_eq!(code(&run(&["check", "--batch", path(dir.path())])), 2);
}

#[test]
fn output_is_byte_identical_across_runs() {
    for args in [
        vec!["plan", "--pretty"],
        vec!["plan"],
        vec!["check"],
    ] {
        for name in ["r1_qubit.json", "d3_quarter.json", "maximal_d3.json"] {
            let f = fixture(name);
            let mut a = args.clone();
            a.push(path(&f));
            let first = run(&a).stdout;
            assert!(!first.is_empty());
            assert_eq!(first, run(&a).stdout, "{args:?} {name}");
        }
    }
    let text = String::from_utf8(run(&["check", path(&fixture("r1_qubit.json"))]).stdout).unwrap();
    let v = json_of(&text);
    let positions: Vec<usize> = v.as_object().unwrap().keys().map(|k| text.find(&format!("\"{k}\":")).unwrap()).collect();
    assert!(positions.windows(2).all(|w| w[0] < w[1]), "keys are not sorted: {text}");
    assert!(text.contains("9.9523809523809526e-1"));
}

fn json_of(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}
