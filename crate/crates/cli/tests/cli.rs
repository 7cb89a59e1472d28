use std::io::Write;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn ruinkit(args: &[&str], stdin: Option<&[u8]>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_ruinkit"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    let mut pipe = child.stdin.take().unwrap();
    pipe.write_all(stdin.unwrap_or_default()).unwrap();
    drop(pipe);
    child.wait_with_output().unwrap()
}

fn ok(args: &[&str], stdin: Option<&[u8]>) -> Vec<u8> {
    let out = ruinkit(args, stdin);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).expect("valid JSON")
}

/// Data rows of a CSV output (schema comment and header dropped).
fn csv_rows(bytes: &[u8]) -> Vec<Vec<String>> {
    let text = String::from_utf8(bytes.to_vec()).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# schema=ruinkit/1"));
    lines.next().expect("header");
    lines.map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn model_piped_into_exit_sums_to_one() {
    let model = ok(&["model", "triangle", "--N", "12"], None);
    let exit = ok(&["exit", "--from", "3,3"], Some(&model));
    let total: f64 = csv_rows(&exit).iter().map(|r| r[r.len() - 2].parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() <= 1e-10, "{total}");
}

#[test]
fn routes_agree_through_the_cli() {
    let base = ["exit", "--model", "box2", "--N", "3", "--from", "1,-2", "--format", "json"];
    let route = |r: &str| {
        let mut args = base.to_vec();
        args.extend(["--route", r]);
        json(&ok(&args, None))["points"].as_array().unwrap().iter().map(|p| p["P"].as_f64().unwrap()).collect::<Vec<_>>()
    };
    let green = route("green");
    for other in [route("spectral"), route("doob")] {
        let diff = green.iter().zip(&other).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-10, "{diff}");
    }
}

#[test]
fn extended_exit_has_half_edge_column() {
    let out = ok(&["exit", "--model", "triangle", "--N", "6", "--from", "2,2", "--extended"], None);
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().nth(1), Some("y_id,y_1,y_2,z_id,P,p_density"));
}

#[test]
fn outputs_are_byte_identical_and_schema_tagged() {
    let args = ["eigen", "--model", "triangle", "--N", "8", "--top", "3", "--full"];
    let a = ok(&args, None);
    assert_eq!(a, ok(&args, None));
    let doc = json(&a);
    assert_eq!(doc["schema"], "ruinkit/1");
    let beta = doc["beta"].as_array().unwrap();
    let expect = (1.0 + 2.0 * (2.0 * std::f64::consts::PI / 8.0).cos()) / 3.0;
    assert!((beta[0].as_f64().unwrap() - expect).abs() < 1e-10);
    assert_eq!(doc["phi"].as_array().unwrap().len(), 3);
}

#[test]
fn model_file_round_trip_gives_identical_results() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    let path = path.to_str().unwrap();
    ok(&["model", "box", "--N", "4", "--output", path], None);
    let from_file = ok(&["report", "--input", path], None);
    let generated = ok(&["report", "--model", "box", "--N", "4"], None);
    let (a, b) = (json(&from_file), json(&generated));
    for key in ["beta0", "t_u", "normalization_product", "flux_relative_residual"] {
        let (x, y) = (a[key].as_f64().unwrap(), b[key].as_f64().unwrap());
        assert!((x - y).abs() <= 1e-15 * y.abs().max(1e-300), "{key}: {x} vs {y}");
    }
}

#[test]
fn verify_all_passes_on_box() {
    let doc = json(&ok(&["verify", "all", "--model", "box2", "--N", "8"], None));
    assert_eq!(doc["pass"], true);
    assert!(doc["suites"]["doob"]["route_agreement_err"].as_f64().unwrap() <= 1e-8);
    for suite in ["doob", "estimate", "harnack", "heatkernel", "carleson"] {
        assert!(doc["suites"].get(suite).is_some(), "{suite} missing");
    }
}

#[test]
fn verify_estimate_exports_ratio_pairs_as_csv() {
    let out = ok(&["verify", "estimate", "--model", "triangle", "--N", "8", "--format", "csv"], None);
    let text = String::from_utf8(out).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("label,size,x,y,exact,estimate,ratio"));
    assert!(text.lines().count() > 10);
}

#[test]
fn simulation_is_reproducible_and_seed_sensitive() {
    let run = |seed: &str| {
        ok(&["simulate", "--model", "triangle", "--N", "10", "--from", "3,3", "--samples", "2e4", "--seed", seed], None)
    };
    assert_eq!(run("7"), run("7"));
    assert_ne!(run("7"), run("8"));
}

#[test]
fn first_elimination_defaults_to_quarter_start() {
    let args =
        ["simulate", "--model", "triangle", "--N", "12", "--record", "first-elimination", "--samples", "1e4", "--seed", "7"];
    let doc = json(&ok(&[&args[..], &["--format", "json"]].concat(), None));
    assert_eq!(doc["fortunes"], serde_json::json!([3, 3, 6]));
    let counts: u64 = doc["cells"].as_array().unwrap().iter().map(|c| c["count"].as_u64().unwrap()).sum();
    assert_eq!(counts, 10_000);
}

#[test]
fn validation_errors_exit_with_one() {
    let out = ruinkit(&["exit", "--model", "triangle", "--N", "6", "--from", "0,0"], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not a point of U"));
    let out = ruinkit(&["model", "triangle", "--N", "2"], None);
    assert_eq!(out.status.code(), Some(1));
    let out = ruinkit(&["exit", "--bogus"], None);
    assert_eq!(out.status.code(), Some(1));
    let out = ruinkit(&["exit", "--from", "1,1"], Some(b"{not json"));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn numerical_failures_exit_with_two() {
    // one step never leaves the box from its center, so every run is censored
    let out = ruinkit(
        &["simulate", "--model", "box", "--N", "6", "--from", "0,0", "--samples", "10", "--max-steps", "1"],
        None,
    );
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
