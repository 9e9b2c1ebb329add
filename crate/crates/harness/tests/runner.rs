// SPDX-License-Identifier: MIT OR Apache-2.0

use gatecircuits_harness::report::timings_path;
use gatecircuits_harness::verify::{recovery_cells, toys_with_or_bias};
use gatecircuits_harness::{emit_plot_data, run_experiment, ExperimentConfig, HarnessError, PlotKind, RunReport};

const AND_TOY: &str = r#"
version = 1
seed = 3
preset = "and-toy"
metric = "sink"
algorithms = ["greedy", "linear", "mask"]
strategies = ["ns"]
k_grid = [2]
evaluations = ["faithfulness", "completeness"]

[task]
kind = "zero-input"
"#;

const PLANTED: &str = r#"
version = 1
seed = 11
preset = "planted-graded"
metric = "sink"
algorithms = ["greedy", "linear"]
strategies = ["ns", "dn", "nsdn"]
k_grid = [8, 10, 12, 14, 16, 18]
evaluations = ["faithfulness", "completeness", "gates", "misalignment"]

[params]
ablation_repeats = 30

[task]
kind = "gate-clean"
sources = 18
"#;

fn cfg(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(text).unwrap()
}

#[test]
fn and_toy_cells_keep_both_heads() {
    // k counts the output edge too.
    let mut c = cfg(AND_TOY);
    c.k_grid = vec![3];
    let (report, _) = run_experiment(&c).unwrap();
    assert_eq!(report.cells.len(), 3);
    for c in &report.cells {
        let out = c.output.as_ref().unwrap_or_else(|| panic!("{}: {:?}", c.key(), c.error));
        assert!(out.circuit.contains(&"a0.0->m0".to_string()), "{}: {:?}", c.key(), out.circuit);
        assert!(out.circuit.contains(&"a0.1->m0".to_string()), "{}: {:?}", c.key(), out.circuit);
        assert!(out.eval.faithfulness.is_some() && out.eval.completeness.is_some());
    }
}

#[test]
fn reruns_are_byte_identical() {
    let a = run_experiment(&cfg(AND_TOY)).unwrap().0.to_json().unwrap();
    let b = run_experiment(&cfg(AND_TOY)).unwrap().0.to_json().unwrap();
    assert_eq!(a, b);
    let parsed = RunReport::from_json(&a).unwrap();
    assert_eq!(parsed.to_json().unwrap(), a);
}

#[test]
fn oversized_k_fails_only_its_cell() {
    let mut c = cfg(AND_TOY);
    c.k_grid = vec![2, 999];
    let (report, _) = run_experiment(&c).unwrap();
    assert_eq!(report.cells.len(), 6);
    let failed: Vec<_> = report.failed_cells().collect();
    assert_eq!(failed.len(), 3);
    for f in failed {
        assert_eq!(f.k, 999);
        assert!(f.error.as_deref().unwrap().contains("k exceeds edge count"));
    }
}

#[test]
fn adding_cells_keeps_existing_results() {
    let small = run_experiment(&cfg(AND_TOY)).unwrap().0;
    let mut c = cfg(AND_TOY);
    c.k_grid = vec![1, 2];
    let big = run_experiment(&c).unwrap().0;
    for cell in &small.cells {
        assert!(big.cells.contains(cell), "{}", cell.key());
    }
}

#[test]
fn report_and_sidecar_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    let mut c = cfg(AND_TOY);
    c.output = Some(path.clone());
    let (report, timings) = run_experiment(&c).unwrap();
    assert_eq!(RunReport::load(&path).unwrap(), report);
    assert!(timings_path(&path).exists());
    assert_eq!(timings.cells.len(), 3);
    let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 2, "{names:?}");
}

#[test]
fn config_echo_reruns_the_same_report() {
    let (report, _) = run_experiment(&cfg(AND_TOY)).unwrap();
    let echoed = ExperimentConfig::from_toml(&report.config.to_toml().unwrap()).unwrap();
    assert_eq!(run_experiment(&echoed).unwrap().0.to_json().unwrap(), report.to_json().unwrap());
}

#[test]
fn invalid_config_lists_every_problem() {
    let mut c = cfg(AND_TOY);
    c.algorithms.clear();
    c.k_grid.clear();
    match run_experiment(&c) {
        Err(HarnessError::Config(errs)) => assert_eq!(errs.len(), 2, "{errs:?}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn plot_data_shapes() {
    let (report, _) = run_experiment(&cfg(PLANTED)).unwrap();
    assert_eq!(report.failed_cells().count(), 0, "{:?}", report.failed_cells().collect::<Vec<_>>());

    let curves = emit_plot_data(&report, PlotKind::CompletenessCurves).unwrap();
    let lines: Vec<&str> = curves.lines().collect();
    assert_eq!(lines[0], "algorithm,strategy,k,metric,distance_of_removal,accuracy_of_removal");
    assert_eq!(lines.iter().filter(|l| l.starts_with("greedy,nsdn,")).count(), 6);
    assert_eq!(lines.len(), 1 + 2 * 3 * 6);

    let boxes = emit_plot_data(&report, PlotKind::BoxAblation).unwrap();
    let rows: Vec<Vec<&str>> = boxes.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r[4] == "1" || r[4] == "2"));
    // 30 repeats of each removal count per receiver.
    let first = (rows[0][0], rows[0][1], rows[0][2]);
    let same = rows.iter().filter(|r| (r[0], r[1], r[2]) == first).count();
    assert_eq!(same, 60);

    let props = emit_plot_data(&report, PlotKind::Proportions).unwrap();
    assert_eq!(props.lines().count(), 1 + 2 * 6);
    assert!(emit_plot_data(&report, PlotKind::MisalignmentSweep).is_ok());
    assert!(emit_plot_data(&report, PlotKind::FaithfulnessCurves).is_ok());
}

#[test]
fn plot_data_errors() {
    let (mut report, _) = run_experiment(&cfg(AND_TOY)).unwrap();
    let err = emit_plot_data(&report, PlotKind::Proportions).unwrap_err();
    assert!(err.to_string().contains("no proportions data"), "{err}");
    report.cells.clear();
    let err = emit_plot_data(&report, PlotKind::CompletenessCurves).unwrap_err();
    assert!(err.to_string().contains("no cells"), "{err}");
}

#[test]
fn corrupted_or_bias_breaks_the_recovery_matrix() {
    let (total, diffs) = recovery_cells(&toys_with_or_bias(1.0)).unwrap();
    assert_eq!((total, diffs.len()), (18, 0));
    let (_, diffs) = recovery_cells(&toys_with_or_bias(0.0)).unwrap();
    assert!(!diffs.is_empty());
    assert!(diffs.iter().all(|d| d.gate == gatecircuits::GateKind::Or), "{diffs:?}");
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        let c = ExperimentConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert!(c.validate().is_ok(), "{}", p.display());
        n += 1;
    }
    assert_eq!(n, 3);
}
