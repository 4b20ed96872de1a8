use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn parastat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parastat")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("bad JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

/// Data rows of a CSV report, skipping `#` metadata lines and the header.
fn csv_rows(out: &Output) -> Vec<Vec<String>> {
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    rdr.records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect()
}

fn write_ex3_file(path: &Path, m: usize, perturb: f64) {
    let mut data = vec![0.0; 2 * m.pow(4)];
    for a in 0..m {
        for b in 0..m {
            data[2 * (((a * m + b) * m + a) * m + b)] = -1.0;
        }
    }
    data[0] += perturb;
    std::fs::write(path, serde_json::json!({ "m": m, "data": data }).to_string()).unwrap();
}

#[test]
fn ybe_exit_codes() {
    assert_eq!(code(&parastat(&["ybe", "--builtin", "ex4", "--m", "3"])), 0);
    assert_eq!(code(&parastat(&["ybe", "--builtin", "boson", "--m", "1"])), 0);

    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    let bad = dir.path().join("bad.json");
    write_ex3_file(&good, 2, 0.0);
    write_ex3_file(&bad, 2, 1e-3);
    assert_eq!(code(&parastat(&["ybe", "--file", good.to_str().unwrap()])), 0);
    let out = parastat(&["ybe", "--file", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert_eq!(json(&out)["report"]["involutive"], false);
    // Other commands refuse an invalid R-matrix unless told not to validate.
    assert_eq!(code(&parastat(&["exclusion", "--file", bad.to_str().unwrap()])), 1);
}

#[test]
fn usage_and_input_errors() {
    assert_eq!(code(&parastat(&["ybe", "--builtin", "ex4"])), 2);
    assert_eq!(code(&parastat(&["ybe"])), 2);
    assert_eq!(code(&parastat(&["nonsense"])), 2);
    assert_eq!(code(&parastat(&["ybe", "--file", "/nonexistent/r.json"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let short = dir.path().join("short.json");
    std::fs::write(&short, r#"{"m": 2, "data": [1.0, 0.0]}"#).unwrap();
    assert_eq!(code(&parastat(&["ybe", "--file", short.to_str().unwrap()])), 2);
}

#[test]
fn budget_overflow_exits_3() {
    let out = Command::new(env!("CARGO_BIN_EXE_parastat"))
        .args(["chain", "--builtin", "ex3", "--m", "2", "--sites", "4"])
        .env("PARASTAT_BUDGET_DIM", "50")
        .output()
        .unwrap();
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn exclusion_tables() {
    let cases: [(&[&str], &[u64]); 3] = [
        (&["--builtin", "ex4", "--m", "3", "--nmax", "4"], &[1, 3, 1, 0, 0]),
        (&["--builtin", "ex1", "--m", "4", "--nmax", "4"], &[1, 4, 6, 4, 1]),
        (&["--builtin", "boson", "--nmax", "3"], &[1, 1, 1, 1]),
    ];
    for (args, expected) in cases {
        let out = parastat(&[&["exclusion"], args].concat());
        assert_eq!(code(&out), 0);
        let d: Vec<u64> = serde_json::from_value(json(&out)["report"]["degeneracies"].clone()).unwrap();
        assert_eq!(d, expected, "{args:?}");
    }
}

#[test]
fn series_reciprocity_of_negated_ex4() {
    let out = parastat(&["series", "--builtin", "ex4", "--m", "3", "--negate", "--order", "6"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    let d: Vec<u64> = serde_json::from_value(v["report"]["coefficients"].clone()).unwrap();
    assert_eq!(d, [1, 3, 8, 21, 55, 144, 377]);
    assert_eq!(v["report"]["reciprocity"]["max_coeff_error"], 0);
    assert_eq!(v["meta"]["rmatrix"]["source"], "-ex4");
}

#[test]
fn thermo_spot_values() {
    for (args, expected) in [
        (vec!["--builtin", "ex3", "--m", "5"], 5.0 / 6.0),
        (vec!["--builtin", "ex4", "--m", "5"], 1.0),
        (vec!["--builtin", "fermion"], 0.5),
    ] {
        let out = parastat(&[&["thermo"], &args[..]].concat());
        assert_eq!(code(&out), 0);
        let rows = csv_rows(&out);
        assert_eq!(rows.len(), 81);
        let zero = rows.iter().find(|r| r[0].parse::<f64>().unwrap() == 0.0).expect("grid contains 0");
        let got: f64 = zero[1].parse().unwrap();
        assert!((got - expected).abs() < 1e-14, "{args:?}: {got}");
    }
}

#[test]
fn thermo_json_marks_divergence() {
    let out = parastat(&["thermo", "--builtin", "boson", "--grid", "-1,1", "--format", "json"]);
    assert_eq!(code(&out), 0);
    let rows = &json(&out)["report"]["rows"];
    assert!(rows[0]["occupation"].is_null());
    let n: f64 = rows[1]["occupation"].as_f64().unwrap();
    assert!((n - 1.0 / (1f64.exp() - 1.0)).abs() < 1e-14);
}

#[test]
fn chain_examples_match() {
    for args in [
        vec!["--builtin", "ex3", "--m", "2", "--sites", "3"],
        vec!["--builtin", "ex4", "--m", "3", "--sites", "2", "--random", "--seed", "11"],
        vec!["--builtin", "fermion", "--sites", "6"],
    ] {
        let out = parastat(&[&["chain"], &args[..]].concat());
        assert_eq!(code(&out), 0, "{args:?}");
        let v = json(&out);
        assert_eq!(v["report"]["spectrum"]["multiset_match"], true);
        let radius = v["report"]["spectrum"]["spectral_radius"].as_f64().unwrap();
        assert!(v["report"]["spectrum"]["max_imag"].as_f64().unwrap() < 1e-8 * radius.max(1.0));
    }
}

#[test]
fn chain_file_input() {
    let dir = tempfile::tempdir().unwrap();
    write_ex3_file(&dir.path().join("r.json"), 2, 0.0);
    let by_path = dir.path().join("chain_path.json");
    std::fs::write(&by_path, r#"{"rmatrix": "r.json", "N": 2, "J": [0.7], "mu": [0.1, -0.2]}"#).unwrap();
    let by_name = dir.path().join("chain_name.json");
    std::fs::write(
        &by_name,
        r#"{"rmatrix": {"builtin": "ex3", "m": 2}, "N": 2, "J": [0.7, 0.0], "mu": [0.1, -0.2]}"#,
    )
    .unwrap();
    let a = json(&parastat(&["chain", "--chain-file", by_path.to_str().unwrap(), "--beta", "0.5"]));
    let b = json(&parastat(&["chain", "--chain-file", by_name.to_str().unwrap(), "--beta", "0.5"]));
    assert_eq!(a["passed"], true);
    assert_eq!(a["meta"]["rmatrix"]["fingerprint"], b["meta"]["rmatrix"]["fingerprint"]);
    assert_eq!(a["report"]["spectrum"], b["report"]["spectrum"]);
    assert_eq!(a["report"]["thermal"][0]["beta"], 0.5);
}

#[test]
fn freegas_report() {
    let out = parastat(&["freegas", "--builtin", "ex3", "--m", "2", "--j", "1", "--mu", "0,0", "--beta", "1", "--time", "0"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    let eps: Vec<f64> = serde_json::from_value(v["report"]["epsilons"].clone()).unwrap();
    assert!((eps[0] + 1.0).abs() < 1e-14 && (eps[1] - 1.0).abs() < 1e-14);
    // z = 1 + 2x per mode
    let z = v["report"]["partition_function"].as_f64().unwrap();
    let expected = (1.0 + 2.0 * 1f64.exp()) * (1.0 + 2.0 * (-1f64).exp());
    assert!((z - expected).abs() < 1e-12 * expected);
    // commutators vanish at t = 0
    for row in v["report"]["commutators"][0]["matrix"].as_array().unwrap() {
        for z in row.as_array().unwrap() {
            assert!(z[0].as_f64().unwrap().abs() < 1e-14 && z[1].as_f64().unwrap().abs() < 1e-14);
        }
    }
    assert_eq!(code(&parastat(&["freegas", "--builtin", "boson", "--mu", "1", "--beta", "1"])), 2);
}

#[test]
fn selftest_filters_and_tolerance() {
    let out = parastat(&["selftest", "--suite", "glN"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["report"]["suites"], serde_json::json!(["glN"]));
    assert!(v["report"]["checks"].as_array().unwrap().iter().all(|c| c["suite"] == "glN"));

    let strict = parastat(&["selftest", "--suite", "crs,glN", "--tol", "1e-16"]);
    assert_eq!(code(&strict), 1);
    assert!(json(&strict)["report"]["checks"].as_array().unwrap().iter().any(|c| c["passed"] == false));
}

#[test]
fn output_is_deterministic_and_tagged() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<_> = (0..2).map(|k| dir.path().join(format!("out{k}.csv"))).collect();
    for (k, p) in paths.iter().enumerate() {
        let threads = if k == 0 { "1" } else { "4" };
        let out = parastat(&[
            "--threads", threads, "selftest", "--seed", "5", "--format", "csv", "--out", p.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0);
    }
    let a = std::fs::read(&paths[0]).unwrap();
    assert_eq!(a, std::fs::read(&paths[1]).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert!(text.contains("# seed=5"));
    assert!(text.contains(&format!("version={}", env!("CARGO_PKG_VERSION"))));

    let v = json(&parastat(&["exclusion", "--builtin", "ex2", "--m", "3"]));
    for key in ["version", "seed", "tolerances"] {
        assert!(!v["meta"][key].is_null(), "{key}");
    }
    assert_eq!(v["meta"]["rmatrix"]["fingerprint"].as_str().unwrap().len(), 64);
}
