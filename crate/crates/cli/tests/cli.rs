mod common;

use std::fs;
use std::process::Command;

use common::{blessing, bless_fixtures, cases, fixture_sources, fixtures_dir, golden_dir, markovia, run_case};
use serde_json::Value;

fn stdout_json(args: &[&str]) -> (i32, Value) {
    let out = markovia(args);
    let value = serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("{args:?}: stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    });
    (out.status.code().unwrap(), value)
}

#[test]
fn golden_files_and_exit_codes() {
    if blessing() {
        bless_fixtures();
    }
    let failures: Vec<String> = cases().iter().filter_map(|c| run_case(c).err()).collect();
    assert!(failures.is_empty(), "{}", failures.join("\n\n"));
}

#[test]
fn fixtures_are_reproducible() {
    if blessing() {
        return;
    }
    for (name, text) in fixture_sources() {
        let on_disk = fs::read_to_string(fixtures_dir().join(name)).unwrap();
        assert_eq!(on_disk, text, "fixture {name} no longer matches its generator");
    }
}

#[test]
fn check_reports_one_bit_for_ghz() {
    let (code, v) = stdout_json(&["check", "ghz.json", "--partition", "A;B;E"]);
    assert_eq!(code, 3);
    assert!((v["cmi"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(v["certified"], Value::Bool(false));
    assert!((v["partitions"]["A;B;E"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn decompose_recovers_generating_blocks() {
    let (code, v) = stdout_json(&["decompose", "markov.json"]);
    assert_eq!(code, 0);
    let mut blocks: Vec<(u64, u64)> = v["blocks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| (b[0].as_u64().unwrap(), b[1].as_u64().unwrap()))
        .collect();
    blocks.sort_unstable();
    assert_eq!(blocks, [(1, 2), (2, 1)]);
    assert!(v["residual"].as_f64().unwrap() <= 1e-7);

    let (code, v) = stdout_json(&["decompose", "product.json"]);
    assert_eq!(code, 0);
    assert_eq!(v["blocks"].as_array().unwrap().len(), 1);
    assert!(v["residual"].as_f64().unwrap() <= 1e-12);

    let (code, v) = stdout_json(&["decompose", "ghz.json"]);
    assert_eq!(code, 3);
    assert_eq!(v["status"], "not_markov");
    assert!((v["cmi"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn decomposition_output_reconstructs_the_state() {
    let dir = tempfile::tempdir().unwrap();
    let (_, v) = stdout_json(&["decompose", "markov.json"]);
    let path = dir.path().join("found.json");
    fs::write(&path, serde_json::to_string(&v["decomposition"]).unwrap()).unwrap();
    let (code, rebuilt) = stdout_json(&["construct", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    let original: Value = serde_json::from_str(&fs::read_to_string(fixtures_dir().join("markov.json")).unwrap()).unwrap();
    let diff = ["re", "im"]
        .iter()
        .flat_map(|k| {
            let a = original[k].as_array().unwrap().clone();
            let b = rebuilt[k].as_array().unwrap().clone();
            a.into_iter().zip(b).map(|(x, y)| (x.as_f64().unwrap() - y.as_f64().unwrap()).abs())
        })
        .fold(0.0f64, f64::max);
    assert!(diff < 1e-8, "max entry difference {diff:e}");
}

#[test]
fn reduce_matches_joint_evolution() {
    let (code, v) = stdout_json(&["reduce", "reduce_state.json", "reduce_lambdas.json", "reduce_dynamics.json"]);
    assert_eq!(code, 0);
    assert!(v["residual"].as_f64().unwrap() <= 1e-9);
    let (_, v) = stdout_json(&["reduce", "bell.json", "identity_channel.json", "identity_channel.json"]);
    assert_eq!(v["residual"].as_f64().unwrap(), 0.0);
}

#[test]
fn simulated_concurrence_follows_cosine() {
    let out = markovia(&["simulate", "--bundled", "dephasing-bell", "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,concurrence,negativity,cmi_bits,hidden_entanglement"));
    let mut rows = 0;
    for line in lines {
        let cells: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((cells[1] - cells[0].cos().abs()).abs() <= 1e-9, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 201);
    let stderr = String::from_utf8(out.stderr).unwrap();
    let revivals: Vec<Value> = stderr.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(revivals.len(), 2);
    assert!(revivals.iter().all(|r| r["certified"] == Value::Bool(true)));
}

#[test]
fn out_flag_writes_the_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("series.csv");
    let out = markovia(&["simulate", "--bundled", "dephasing-bell", "--format", "csv", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    if !blessing() {
        assert_eq!(fs::read(&path).unwrap(), fs::read(golden_dir().join("simulate_bundled.csv")).unwrap());
    }
}

#[test]
fn thread_count_does_not_change_output() {
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_markovia"))
            .args(["simulate", "--bundled", "dephasing-bell", "--format", "csv"])
            .env("MARKOVIA_THREADS", threads)
            .output()
            .unwrap()
    };
    let one = run("1");
    let four = run("4");
    let auto = run("0");
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(one.stdout, auto.stdout);
    assert_eq!(one.stderr, four.stderr);
    assert_eq!(run("many").status.code(), Some(2));
}

#[test]
fn errors_are_json_lines() {
    let out = markovia(&["check", "not_unit_trace.json"]);
    let line: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(line["error"].as_str().unwrap().contains("unit trace"));
    assert_eq!(line["exit_code"], 2);
}
