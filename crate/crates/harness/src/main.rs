// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gatecircuits_harness::config::SEED_ENV;
use gatecircuits_harness::plot::flat_rows;
use gatecircuits_harness::report::write_atomic;
use gatecircuits_harness::runner::{prepare, run_oracle};
use gatecircuits_harness::verify::{status_line, VerifyOptions};
use gatecircuits_harness::{
    emit_plot_data, run_experiment, verify_paper_suite, Evaluation, ExperimentConfig, HarnessError, PlotKind, RunReport,
};

#[derive(Parser)]
#[command(name = "gatecircuits", version, about = "Logic-gate-aware circuit discovery experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Run {
    /// Experiment config (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Report path; overrides the config's `output`.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Discover circuits for every grid cell.
    Discover(Run),
    /// Label AND, OR and ADDER edges from Ns and Dn circuits.
    Classify(Run),
    /// Run the grid with the configured evaluations.
    Evaluate {
        #[command(flatten)]
        run: Run,
        /// Also write flat per-metric rows as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Sweep the Dn circuit size around each k.
    SweepMisalignment(Run),
    /// Exhaustive minimal faithful and complete subsets.
    Oracle(Run),
    /// Run the acceptance suite.
    Verify {
        /// Comma separated criterion numbers.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
        #[arg(long, env = SEED_ENV, default_value_t = 0)]
        seed: u64,
        /// Write the JSON summary here.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Emit CSV for one figure from a report.
    PlotData {
        #[arg(short, long)]
        report: PathBuf,
        #[arg(short, long, value_parser = parse_kind)]
        kind: PlotKind,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn parse_kind(s: &str) -> Result<PlotKind, String> {
    s.parse().map_err(|e: HarnessError| e.to_string())
}

fn load(run: &Run, evaluations: Option<Vec<Evaluation>>) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig::load(&run.config)?;
    if let Some(o) = &run.output {
        cfg.output = Some(o.clone());
    }
    if let Some(e) = evaluations {
        cfg.evaluations = e;
    }
    Ok(cfg)
}

fn emit(text: &str, path: Option<&Path>) -> Result<(), HarnessError> {
    match path {
        Some(p) => write_atomic(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn finish(report: &RunReport, quiet_json: bool) -> Result<bool, HarnessError> {
    if !quiet_json {
        print!("{}", report.to_json()?);
    }
    let failed: Vec<_> = report.failed_cells().collect();
    for c in &failed {
        eprintln!("{}: {}", c.key(), c.error.as_deref().unwrap_or(""));
    }
    Ok(failed.is_empty())
}

fn summarize(report: &RunReport, line: impl Fn(&gatecircuits_harness::Cell) -> Option<String>) {
    for c in &report.cells {
        if let Some(l) = line(c) {
            println!("{}: {l}", c.key());
        }
    }
}

fn run(cli: Cli) -> Result<bool, HarnessError> {
    match cli.command {
        Command::Discover(r) => {
            let cfg = load(&r, Some(Vec::new()))?;
            let (report, _) = run_experiment(&cfg)?;
            summarize(&report, |c| c.output.as_ref().map(|o| o.circuit.join(" ")));
            finish(&report, true)
        }
        Command::Classify(r) => {
            let cfg = load(&r, Some(vec![Evaluation::Gates]))?;
            let (report, _) = run_experiment(&cfg)?;
            summarize(&report, |c| {
                c.output.as_ref().and_then(|o| o.labels.as_ref()).map(|l| {
                    format!("and [{}] or [{}] adder [{}]", l.and.join(" "), l.or.join(" "), l.adder.join(" "))
                })
            });
            finish(&report, true)
        }
        Command::Evaluate { run, csv } => {
            let cfg = load(&run, None)?;
            let (report, _) = run_experiment(&cfg)?;
            if let Some(p) = csv {
                write_atomic(&p, &flat_rows(&report)?)?;
            }
            finish(&report, cfg.output.is_some())
        }
        Command::SweepMisalignment(r) => {
            let cfg = load(&r, Some(vec![Evaluation::Misalignment]))?;
            let (report, _) = run_experiment(&cfg)?;
            if cfg.output.is_none() {
                print!("{}", emit_plot_data(&report, PlotKind::MisalignmentSweep)?);
            }
            finish(&report, true)
        }
        Command::Oracle(r) => {
            let cfg = load(&r, None)?;
            cfg.validate()?;
            let p = prepare(&cfg)?;
            let rep = run_oracle(&p, &cfg);
            emit(&(serde_json::to_string_pretty(&rep)? + "\n"), cfg.output.as_deref())?;
            if let Some(e) = &rep.error {
                eprintln!("oracle: {e}");
            }
            Ok(rep.error.is_none())
        }
        Command::Verify { only, seed, output } => {
            let opts = VerifyOptions { seed, only, ..VerifyOptions::default() };
            let summary = verify_paper_suite(&opts, |r, secs| println!("{}", status_line(r, secs)));
            if let Some(p) = output {
                write_atomic(&p, &summary.to_json()?)?;
            }
            Ok(summary.passed())
        }
        Command::PlotData { report, kind, output } => {
            let report = RunReport::load(&report)?;
            emit(&emit_plot_data(&report, kind)?, output.as_deref())?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
