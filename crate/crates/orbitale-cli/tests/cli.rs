//! End-to-end tests of the installed binary: exit-code contract, anchor
//! outputs, reproducibility, and the file pipeline between subcommands.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_orbitale"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout not JSON ({e}):\n{}\n{}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

#[test]
fn count_lattices_scalar_anchor() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("coeffs.json");
    fs::write(&file, r#"{"q":3,"a":["1"],"b":["pi^3"]}"#).unwrap();
    let out = run(&["count-lattices", file.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = stdout_json(&out);
    assert_eq!(v["d"], 3);
    assert_eq!(v["M"], serde_json::json!([1, 1, 1, 1]));
    assert_eq!(v["alt_sum"], 0);
    assert_eq!(v["N"], 0);
    assert_eq!(v["identity_holds"], true);
}

#[test]
fn verify_fl_n1_holds_and_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a.json");
    let out_b = dir.path().join("b.json");
    for (path, _) in [(&out_a, 0), (&out_b, 1)] {
        let out = run(&[
            "verify-fl",
            "--q",
            "3",
            "--case",
            "fj",
            "--n",
            "1",
            "--instances",
            "20",
            "--seed",
            "1",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    assert_eq!(
        fs::read(&out_a).unwrap(),
        fs::read(&out_b).unwrap(),
        "JSON not byte-stable"
    );
    let csv_a = fs::read(out_a.with_extension("csv")).unwrap();
    let csv_b = fs::read(out_b.with_extension("csv")).unwrap();
    assert_eq!(csv_a, csv_b, "CSV not byte-stable");

    let text = String::from_utf8(csv_a).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("seed,n,q,valDelta,parity,sym,uni,altM,N,transfer,fl_holds")
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 20);
    assert!(rows.iter().all(|r| r.ends_with(",true")));

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&out_a).unwrap()).unwrap();
    assert_eq!(report.as_array().unwrap().len(), 20);
    assert!(report
        .as_array()
        .unwrap()
        .iter()
        .all(|r| r["fl_holds"] == true));
}

#[test]
fn sample_pipeline_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "sample",
        "--q",
        "3",
        "--case",
        "fj",
        "--n",
        "2",
        "--instances",
        "2",
        "--seed",
        "9",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let f0 = dir.path().join("datum_000.json");
    let f1 = dir.path().join("datum_001.json");
    assert!(f0.exists() && f1.exists());

    // canonical form: render(parse(file)) reproduces the file
    let reparse = |p: &Path| {
        let inv = run(&["invariants", p.to_str().unwrap()]);
        assert_eq!(
            inv.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&inv.stderr)
        );
        stdout_json(&inv)
    };
    let inv0 = reparse(&f0);
    assert_eq!(inv0["regular"], true);
    assert_eq!(inv0["q"], 3);
    assert!(inv0["delta_val"].as_i64().unwrap() >= 0);

    let matched = run(&["match", f0.to_str().unwrap()]);
    assert_eq!(
        matched.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&matched.stderr)
    );
    let mj = stdout_json(&matched);
    assert_eq!(mj["certificate_ok"], true);
    let eps = mj["epsilon"].as_i64().unwrap();
    assert!(eps == 1 || eps == -1);
    assert_eq!(mj["unitary_datum"]["side"], "uni");
}

#[test]
fn sample_stdout_is_deterministic() {
    let a = run(&[
        "sample",
        "--q",
        "3",
        "--case",
        "fj",
        "--n",
        "1",
        "--instances",
        "3",
        "--seed",
        "7",
    ]);
    let b = run(&[
        "sample",
        "--q",
        "3",
        "--case",
        "fj",
        "--n",
        "1",
        "--instances",
        "3",
        "--seed",
        "7",
    ]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(
        a.stdout
            .split(|&c| c == b'\n')
            .filter(|l| !l.is_empty())
            .count(),
        3
    );
}

#[test]
fn input_errors_exit_2() {
    // q not an odd prime <= 13
    let out = run(&[
        "verify-fl",
        "--q",
        "4",
        "--case",
        "fj",
        "--n",
        "1",
        "--seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    // n out of range
    let out = run(&[
        "verify-fl",
        "--q",
        "3",
        "--case",
        "fj",
        "--n",
        "9",
        "--seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    // malformed datum file
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    let out = run(&["invariants", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    // missing file
    let out = run(&["invariants", "/nonexistent/datum.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn irregular_datum_exits_2() {
    // x = 0 kills the cyclic-vector condition: the datum parses but fails
    // the regularity check
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("flat.json");
    fs::write(
        &f,
        r#"{"q":3,"side":"sym","case":"fj","m":1,"r":0,"zeta":[["1"]],"x":["0"],"y":["1"]}"#,
    )
    .unwrap();
    let out = run(&["invariants", f.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let msg = String::from_utf8_lossy(&out.stderr).to_lowercase();
    assert!(
        msg.contains("regular"),
        "diagnostic should name the failed condition: {msg}"
    );
}

#[test]
fn whittaker_diffs_all_zero() {
    let out = run(&[
        "verify-whittaker",
        "--n",
        "2",
        "--m",
        "2",
        "--order",
        "6",
        "--trials",
        "10",
        "--seed",
        "1",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = stdout_json(&out);
    let trials = v.as_array().unwrap();
    assert_eq!(trials.len(), 10);
    for t in trials {
        assert_eq!(t["holds"], true);
        for d in t["coeff_diffs"].as_array().unwrap() {
            assert_eq!(d, "0");
        }
    }
}
