use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use combkit::consistency::{CombFamily, DistributionFamily};
use serde_json::Value;
use tempfile::TempDir;

fn combkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_combkit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn emit(dir: &Path, scenario: &str, family: &str, extra: &[&str]) -> PathBuf {
    let path = dir.join(format!("{scenario}-{family}.json"));
    let mut args = vec![
        "scenario",
        scenario,
        "--emit",
        family,
        "--out",
        path.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let o = combkit(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    path
}

#[test]
fn stern_gerlach_table_lists_reference_values() {
    let o = combkit(&["scenario", "stern-gerlach"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("P(up,right,up | Jz,Jx,Jz)"));
    for v in ["0.125", "0.25", "0.5"] {
        assert!(
            out.lines().any(|l| l.contains(&format!("  {v}  "))),
            "{v} missing:\n{out}"
        );
    }
    assert!(out.contains("PASS"));
}

#[test]
fn scenario_without_name_lists_registry() {
    let o = combkit(&["scenario"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    for n in [
        "stern-gerlach",
        "urn",
        "random-dilation",
        "dephasing-markov",
    ] {
        assert!(out.lines().any(|l| l == n));
    }
}

#[test]
fn every_scenario_exits_zero() {
    for n in [
        "stern-gerlach",
        "urn",
        "random-dilation",
        "dephasing-markov",
    ] {
        let o = combkit(&["scenario", n, "--format", "json"]);
        assert_eq!(o.status.code(), Some(0), "{n}: {}", stderr(&o));
        let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_eq!(v["pass"], true);
        assert_eq!(v["name"], n);
    }
}

#[test]
fn unknown_scenario_is_usage_error() {
    let o = combkit(&["scenario", "nope"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope"));
    assert!(stdout(&o).is_empty());
}

#[test]
fn check_ket_reports_marginal_clash() {
    let dir = TempDir::new().unwrap();
    let f = emit(dir.path(), "stern-gerlach", "measured", &[]);
    let o = combkit(&[
        "check-ket",
        "--family",
        f.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["pass"], false);
    let pair = v["pairs"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| {
            p["sub"] == serde_json::json!(["t1", "t3"])
                && p["super"] == serde_json::json!(["t1", "t2", "t3"])
        })
        .expect("pair present");
    assert!((pair["deviation"].as_f64().unwrap() - 0.25).abs() < 1e-12);

    let table = stdout(&combkit(&["check-ket", "--family", f.to_str().unwrap()]));
    let row = table
        .lines()
        .find(|l| l.starts_with("{t1,t3}  {t1,t2,t3}"))
        .unwrap();
    assert!(row.contains("FAIL") && row.contains("0.25"));
}

#[test]
fn check_get_passes_on_dilation_family() {
    let dir = TempDir::new().unwrap();
    let f = emit(dir.path(), "random-dilation", "process", &["--seed", "5"]);
    let o = combkit(&[
        "check-get",
        "--family",
        f.to_str().unwrap(),
        "--tol",
        "1e-9",
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    // every nested pair of nonempty subsets of three times
    assert_eq!(v["pairs"].as_array().unwrap().len(), 12);
    assert!(v["pairs"]
        .as_array()
        .unwrap()
        .iter()
        .all(|p| p["deviation"].as_f64().unwrap() < 1e-10));
}

#[test]
fn classical_discriminates() {
    let dir = TempDir::new().unwrap();
    let sg = emit(dir.path(), "stern-gerlach", "process", &[]);
    let o = combkit(&[
        "classical",
        "--family",
        sg.to_str().unwrap(),
        "--basis",
        "z,x,z",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = combkit(&[
        "classical",
        "--family",
        sg.to_str().unwrap(),
        "--basis",
        "z",
    ]);
    assert_eq!(o.status.code(), Some(0));

    let deph = emit(dir.path(), "dephasing-markov", "dephasing", &[]);
    let o = combkit(&[
        "classical",
        "--family",
        deph.to_str().unwrap(),
        "--basis",
        "z",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let ctrl = emit(dir.path(), "dephasing-markov", "control", &[]);
    let o = combkit(&[
        "classical",
        "--family",
        ctrl.to_str().unwrap(),
        "--basis",
        "z",
    ]);
    assert_eq!(o.status.code(), Some(1));

    let o = combkit(&[
        "classical",
        "--family",
        sg.to_str().unwrap(),
        "--basis",
        "z,x",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_json_reports_path() {
    let dir = TempDir::new().unwrap();
    let f = dir.path().join("bad.json");
    std::fs::write(
        &f,
        r#"{"ground_times":["t1"],"members":[{"times":["t1"],"payload":
            {"times":["t1"],"alphabets":[["a","b"]],"probs":[{"outcome":["a"],"p":"half"}]}}]}"#,
    )
    .unwrap();
    let o = combkit(&["check-ket", "--family", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("members[0].payload.probs[0].p"),
        "{}",
        stderr(&o)
    );
    assert!(stdout(&o).is_empty());

    let o = combkit(&[
        "check-get",
        "--family",
        dir.path().join("missing.json").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_distribution_is_schema_error() {
    let dir = TempDir::new().unwrap();
    let f = dir.path().join("d.json");
    std::fs::write(
        &f,
        r#"{"ground_times":["t1"],"members":[{"times":["t1"],"payload":
            {"times":["t1"],"alphabets":[["a","b"]],"probs":[{"outcome":["a"],"p":0.7}]}}]}"#,
    )
    .unwrap();
    let o = combkit(&["check-ket", "--family", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sum"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(combkit(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(combkit(&[]).status.code(), Some(2));
    let o = combkit(&["check-get", "--family", "x.json", "--tol", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let o = combkit(&["check-get", "--family", "x.json", "--tol", "-1e-9"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(combkit(&["--help"]).status.code(), Some(0));
}

#[test]
fn family_round_trip_is_exact() {
    let dir = TempDir::new().unwrap();
    let f = emit(
        dir.path(),
        "random-dilation",
        "process",
        &["--seed", "9", "--steps", "2"],
    );
    let text = std::fs::read_to_string(&f).unwrap();
    let fam: CombFamily = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string_pretty(&fam).unwrap() + "\n", text);

    let d = emit(dir.path(), "urn", "intervention", &[]);
    let text = std::fs::read_to_string(&d).unwrap();
    let fam: DistributionFamily = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string_pretty(&fam).unwrap() + "\n", text);
}

#[test]
fn emitted_families_are_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let fa = emit(a.path(), "random-dilation", "process", &["--seed", "3"]);
    let fb = emit(b.path(), "random-dilation", "process", &["--seed", "3"]);
    assert_eq!(std::fs::read(fa).unwrap(), std::fs::read(fb).unwrap());
}

fn full_member(family: &Path, dir: &Path) -> PathBuf {
    let v: Value = serde_json::from_str(&std::fs::read_to_string(family).unwrap()).unwrap();
    let ground = v["ground_times"].clone();
    let member = v["members"]
        .as_array()
        .unwrap()
        .iter()
        .find(|m| m["times"] == ground)
        .unwrap();
    let p = dir.join("full.json");
    std::fs::write(&p, serde_json::to_string(&member["payload"]).unwrap()).unwrap();
    p
}

#[test]
fn restrict_then_contract() {
    let dir = TempDir::new().unwrap();
    let fam = emit(dir.path(), "stern-gerlach", "process", &[]);
    let full = full_member(&fam, dir.path());
    let r = dir.path().join("r.json");
    let o = combkit(&[
        "restrict",
        "--comb",
        full.to_str().unwrap(),
        "--subset",
        "t1,t3",
        "--out",
        r.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = combkit(&[
        "contract",
        "--comb",
        r.to_str().unwrap(),
        "--basis",
        "z",
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let rows: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let upup = rows
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["outcome"] == serde_json::json!(["up", "up"]))
        .unwrap();
    assert!((upup["probability"].as_f64().unwrap() - 0.5).abs() < 1e-10);

    let o = combkit(&[
        "contract",
        "--comb",
        full.to_str().unwrap(),
        "--basis",
        "z,x,z",
    ]);
    let out = stdout(&o);
    assert_eq!(
        out.lines().filter(|l| l.contains("0.125")).count(),
        8,
        "{out}"
    );

    let o = combkit(&[
        "restrict",
        "--comb",
        full.to_str().unwrap(),
        "--subset",
        "t1,t9",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_extension_and_embed() {
    let dir = TempDir::new().unwrap();
    let fam = emit(dir.path(), "random-dilation", "process", &["--seed", "2"]);
    let full = full_member(&fam, dir.path());
    let o = combkit(&[
        "verify-extension",
        "--comb",
        full.to_str().unwrap(),
        "--family",
        fam.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));

    let other = emit(dir.path(), "random-dilation", "process", &["--seed", "4"]);
    let o = combkit(&[
        "verify-extension",
        "--comb",
        full.to_str().unwrap(),
        "--family",
        other.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));

    let dists = emit(dir.path(), "urn", "idle", &[]);
    let embedded = dir.path().join("emb.json");
    let o = combkit(&[
        "embed",
        "--family",
        dists.to_str().unwrap(),
        "--out",
        embedded.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = combkit(&["check-get", "--family", embedded.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn dimension_cap_from_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_combkit"))
        .args(["scenario", "random-dilation", "--steps", "3"])
        .env("COMBKIT_DIM_CAP", "1000")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).to_lowercase().contains("cap") || stderr(&o).contains("1000"),
        "{}",
        stderr(&o)
    );
}
