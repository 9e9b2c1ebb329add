// SPDX-License-Identifier: MIT OR Apache-2.0

//! Flat CSV projections of a report.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::HarnessError;
use crate::report::{Cell, CellOutput, RunReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    CompletenessCurves,
    FaithfulnessCurves,
    Proportions,
    BoxAblation,
    MisalignmentSweep,
}

impl PlotKind {
    pub const ALL: [PlotKind; 5] = [
        Self::CompletenessCurves,
        Self::FaithfulnessCurves,
        Self::Proportions,
        Self::BoxAblation,
        Self::MisalignmentSweep,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::CompletenessCurves => "completeness-curves",
            Self::FaithfulnessCurves => "faithfulness-curves",
            Self::Proportions => "proportions",
            Self::BoxAblation => "box-ablation",
            Self::MisalignmentSweep => "misalignment-sweep",
        }
    }

    pub fn header(&self) -> &'static [&'static str] {
        match self {
            Self::CompletenessCurves => {
                &["algorithm", "strategy", "k", "metric", "distance_of_removal", "accuracy_of_removal"]
            }
            Self::FaithfulnessCurves => &["algorithm", "strategy", "k", "metric", "distance", "accuracy"],
            Self::Proportions => &["algorithm", "k", "and", "or", "adder"],
            Self::BoxAblation => &["algorithm", "k", "receiver", "label", "edges_removed", "delta"],
            Self::MisalignmentSweep => {
                &["algorithm", "k_ns", "k_dn", "ratio", "and_score", "or_score", "total", "and_pairs", "or_pairs"]
            }
        }
    }
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlotKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| HarnessError::Report(format!("unknown plot kind `{s}`")))
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn ok_cells(report: &RunReport) -> impl Iterator<Item = (&Cell, &CellOutput)> {
    report.cells.iter().filter_map(|c| c.output.as_ref().map(|o| (c, o)))
}

/// Cells sharing an `(algorithm, k)` point carry the same gate outputs;
/// keep the first.
fn per_point(report: &RunReport) -> Vec<(&Cell, &CellOutput)> {
    let mut seen = BTreeSet::new();
    ok_cells(report).filter(|(c, _)| seen.insert((c.algorithm.name(), c.k))).collect()
}

fn rows(report: &RunReport, kind: PlotKind) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    match kind {
        PlotKind::CompletenessCurves => {
            for (c, o) in ok_cells(report) {
                if let Some(x) = &o.eval.completeness {
                    out.push(vec![
                        c.algorithm.to_string(),
                        c.strategy.to_string(),
                        c.k.to_string(),
                        x.metric.to_string(),
                        x.distance_of_removal.to_string(),
                        opt(x.accuracy_of_removal),
                    ]);
                }
            }
        }
        PlotKind::FaithfulnessCurves => {
            for (c, o) in ok_cells(report) {
                if let Some(x) = &o.eval.faithfulness {
                    out.push(vec![
                        c.algorithm.to_string(),
                        c.strategy.to_string(),
                        c.k.to_string(),
                        x.metric.to_string(),
                        x.distance.to_string(),
                        opt(x.accuracy),
                    ]);
                }
            }
        }
        PlotKind::Proportions => {
            for (c, o) in per_point(report) {
                if let Some(p) = &o.eval.proportions {
                    out.push(vec![
                        c.algorithm.to_string(),
                        c.k.to_string(),
                        p.and.to_string(),
                        p.or.to_string(),
                        p.adder.to_string(),
                    ]);
                }
            }
        }
        PlotKind::BoxAblation => {
            for (c, o) in per_point(report) {
                for s in &o.ablations {
                    out.push(vec![
                        c.algorithm.to_string(),
                        c.k.to_string(),
                        s.receiver.to_string(),
                        s.label.to_string(),
                        s.edges_removed.to_string(),
                        s.delta.to_string(),
                    ]);
                }
            }
        }
        PlotKind::MisalignmentSweep => {
            for (c, o) in per_point(report) {
                for m in &o.misalignment {
                    out.push(vec![
                        c.algorithm.to_string(),
                        m.k_ns.to_string(),
                        m.k_dn.to_string(),
                        m.ratio.to_string(),
                        m.and_score.to_string(),
                        m.or_score.to_string(),
                        m.total().to_string(),
                        m.and_pairs.to_string(),
                        m.or_pairs.to_string(),
                    ]);
                }
            }
        }
    }
    out
}

fn write_csv(header: &[&str], rows: &[Vec<String>]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| HarnessError::Report(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Report(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| HarnessError::Report(e.to_string()))
}

/// CSV data behind one figure.
pub fn emit_plot_data(report: &RunReport, kind: PlotKind) -> Result<String, HarnessError> {
    if report.cells.is_empty() {
        return Err(HarnessError::Report("no cells".into()));
    }
    let rows = rows(report, kind);
    if rows.is_empty() {
        return Err(HarnessError::Report(format!("report has no {kind} data")));
    }
    write_csv(kind.header(), &rows)
}

/// Every scalar measurement, one row per `(cell, metric)`.
pub fn flat_rows(report: &RunReport) -> Result<String, HarnessError> {
    let mut rows = Vec::new();
    for (c, o) in ok_cells(report) {
        let e = &o.eval;
        let mut push = |name: &str, v: f64| {
            rows.push(vec![c.algorithm.to_string(), c.strategy.to_string(), c.k.to_string(), name.into(), v.to_string()])
        };
        if let Some(f) = &e.faithfulness {
            push(&format!("faithfulness.{}", f.metric), f.distance);
            if let Some(a) = f.accuracy {
                push("faithfulness.accuracy", a);
            }
        }
        if let Some(f) = &e.completeness {
            push(&format!("completeness.{}-of-removal", f.metric), f.distance_of_removal);
            if let Some(a) = f.accuracy_of_removal {
                push("completeness.accuracy-of-removal", a);
            }
        }
        if let Some(s) = &e.incompleteness_sampled {
            push("incompleteness-sampled.mean", s.mean);
            push("incompleteness-sampled.std", s.std);
        }
        if let Some(r) = &e.randomness {
            push("randomness.mean-hamming", r.mean_hamming);
            push("randomness.std", r.std);
        }
        if let Some(p) = &e.proportions {
            push("proportions.and", p.and as f64);
            push("proportions.or", p.or as f64);
            push("proportions.adder", p.adder as f64);
        }
    }
    write_csv(&["algorithm", "strategy", "k", "metric", "value"], &rows)
}
