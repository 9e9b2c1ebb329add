// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
version = 1
seed = 0
preset = "fig2"
metric = "sink"
algorithms = ["greedy"]
strategies = ["ns", "dn", "nsdn"]
k_grid = [5, 9]
evaluations = ["faithfulness", "completeness", "gates", "oracle"]

[task]
kind = "gate-clean"
sources = 4
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gatecircuits"));
    c.env_remove("GATECIRCUITS_SEED");
    c
}

fn run(c: &mut Command) -> Output {
    c.output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn evaluate_writes_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", CONFIG);
    let out = dir.path().join("r.json");
    let csv = dir.path().join("r.csv");
    let o = run(bin().args(["evaluate", "-c"]).arg(&cfg).arg("-o").arg(&out).arg("--csv").arg(&csv));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = gatecircuits_harness::RunReport::load(&out).unwrap();
    assert_eq!(report.cells.len(), 6);
    assert!(report.oracle.as_ref().unwrap().faithful.is_some());
    let rows = std::fs::read_to_string(&csv).unwrap();
    assert!(rows.starts_with("algorithm,strategy,k,metric,value\n"));
    assert!(rows.contains("greedy,nsdn,9,faithfulness.sink,"));

    let o = run(bin().args(["plot-data", "-k", "completeness-curves", "-r"]).arg(&out));
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 7);
}

#[test]
fn classify_prints_labels() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", CONFIG);
    let o = run(bin().args(["classify", "-c"]).arg(&cfg));
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("greedy/ns/k=9: and [g0.1->g1.0 input->g0.1] or [g0.2->g1.1 input->g0.2] adder ["), "{text}");
    // Every strategy of one (algorithm, k) point shares the labeling.
    assert_eq!(text.matches("and [g0.1->g1.0 input->g0.1]").count(), 3);
}

#[test]
fn seed_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", CONFIG);
    let out = dir.path().join("r.json");
    let o = run(bin().env("GATECIRCUITS_SEED", "77").args(["discover", "-c"]).arg(&cfg).arg("-o").arg(&out));
    assert!(o.status.success());
    assert_eq!(gatecircuits_harness::RunReport::load(&out).unwrap().config.seed, 77);

    let o = run(bin().env("GATECIRCUITS_SEED", "x").args(["discover", "-c"]).arg(&cfg));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", &CONFIG.replace("version = 1", "version = 9").replace("k_grid = [5, 9]", "k_grid = []"));
    let o = run(bin().args(["evaluate", "-c"]).arg(&bad));
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("version") && err.contains("k_grid"), "{err}");

    let o = run(bin().args(["evaluate", "-c"]).arg(dir.path().join("missing.toml")));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failed_cells_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &CONFIG.replace("k_grid = [5, 9]", "k_grid = [5, 999]"));
    let out = dir.path().join("r.json");
    let o = run(bin().args(["discover", "-c"]).arg(&cfg).arg("-o").arg(&out));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8(o.stderr).unwrap().contains("k exceeds edge count"));
    assert!(out.exists());
}

#[test]
fn oracle_and_sweep_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", CONFIG);
    let o = run(bin().args(["oracle", "-c"]).arg(&cfg));
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["faithful"]["tie_count"], 2);

    let o = run(bin().args(["sweep-misalignment", "-c"]).arg(&cfg));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8(o.stdout).unwrap().starts_with("algorithm,k_ns,k_dn,ratio,"));
}

#[test]
fn verify_subset_passes_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for p in [&a, &b] {
        let o = run(bin().args(["verify", "--only", "1,2,3", "-o"]).arg(p));
        assert!(o.status.success());
        let text = String::from_utf8(o.stdout).unwrap();
        assert_eq!(text.lines().filter(|l| l.contains("[PASS]")).count(), 3, "{text}");
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn plot_data_on_an_empty_report_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", CONFIG);
    let out = dir.path().join("r.json");
    assert!(run(bin().args(["discover", "-c"]).arg(&cfg).arg("-o").arg(&out)).status.success());
    let mut report = gatecircuits_harness::RunReport::load(&out).unwrap();
    report.cells.clear();
    std::fs::write(&out, report.to_json().unwrap()).unwrap();
    let o = run(bin().args(["plot-data", "-k", "proportions", "-r"]).arg(&out));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8(o.stderr).unwrap().contains("no cells"));
}
