// SPDX-License-Identifier: MIT OR Apache-2.0

//! Grid execution.

use std::collections::BTreeMap;
use std::time::Instant;

use gatecircuits::discovery::{discover, discover_pair};
use gatecircuits::evaluation::{self, AblationSample};
use gatecircuits::gates::{ratio_sweep, LabelNames};
use gatecircuits::model::make_trained_transformer;
use gatecircuits::rng::derive_str;
use gatecircuits::{
    classify_gates, group_gates, AblationMode, Algorithm, DiscoveryConfig, EvalReport, MisalignmentReport, Model,
    ModelSpec, OracleMode, OracleScope, RunSet, Strategy, TaskDataset, TaskSpec,
};

use crate::config::{Evaluation, ExperimentConfig};
use crate::error::HarnessError;
use crate::report::{
    timings_path, write_atomic, Cell, CellOutput, ModelInfo, OracleReport, OracleSubset, RunReport, Timings,
};

/// A model with its evaluation runs, ready for discovery.
pub struct Prepared {
    pub model: Model<f64>,
    pub runs: RunSet<f64>,
    pub info: ModelInfo,
}

fn with_pairs(task: &TaskSpec, n: usize) -> TaskSpec {
    let mut t = task.clone();
    match &mut t {
        TaskSpec::Induction { n_pairs, .. } | TaskSpec::Copy { n_pairs, .. } => *n_pairs = n,
        _ => {}
    }
    t
}

/// Build (and train, if needed) the model and cache its runs.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, HarnessError> {
    let spec = cfg.model_spec()?;
    let data = gatecircuits::make_task(&cfg.task, derive_str(cfg.seed, "task"))?;
    let (model, training) = match (&spec, &cfg.training) {
        (ModelSpec::TrainedTransformer(_), Some(t)) => {
            let fit = gatecircuits::make_task(&with_pairs(&cfg.task, t.pairs), derive_str(cfg.seed, "train-task"))?;
            let (m, summary) = make_trained_transformer::<f64>(&spec, &fit, &t.optimizer)?;
            log::info!("trained to accuracy {:.3} in {} steps", summary.accuracy, summary.steps);
            (Model::Transformer(m), Some(summary))
        }
        (ModelSpec::TrainedTransformer(_), None) => {
            return Err(HarnessError::Config(vec!["training: trained transformers need a [training] table".into()]))
        }
        _ => (Model::from_spec(&spec)?, None),
    };
    prepare_with(model, &data, cfg, training)
}

/// Cache runs for an already built model.
pub fn prepare_with(
    model: Model<f64>,
    data: &TaskDataset,
    cfg: &ExperimentConfig,
    training: Option<gatecircuits::model::TrainSummary>,
) -> Result<Prepared, HarnessError> {
    let mode = cfg.ablation.unwrap_or_else(|| AblationMode::default_for(&model));
    let runs = RunSet::new(&model, data, mode, derive_str(cfg.seed, "runs"))?;
    let g = gatecircuits::EdgeModel::graph(&model);
    let info = ModelInfo { family: model.spec().family().into(), nodes: g.num_nodes(), edges: g.num_edges(), training };
    Ok(Prepared { model, runs, info })
}

/// Discovery settings shared by every cell of one algorithm.
pub fn base_config(cfg: &ExperimentConfig, algorithm: Algorithm, strategy: Strategy) -> DiscoveryConfig {
    let mut d = DiscoveryConfig::new(algorithm, strategy, cfg.metric);
    if algorithm == Algorithm::Mask {
        if let Some(m) = &cfg.mask {
            d.mask = Some(m.clone());
        }
    }
    d.greedy_sizing = cfg.greedy_sizing;
    d
}

/// Results shared by all strategies of one `(algorithm, k)` point.
#[derive(Clone)]
struct PairOutputs {
    labels: LabelNames,
    gate_stats: Vec<evaluation::GateEffect>,
    proportions: evaluation::Proportions,
    ablations: Vec<AblationSample>,
}

struct Grid<'a> {
    cfg: &'a ExperimentConfig,
    p: &'a Prepared,
    gates: BTreeMap<(String, usize), Result<PairOutputs, String>>,
    sweeps: BTreeMap<(String, usize), Result<Vec<MisalignmentReport>, String>>,
}

impl Grid<'_> {
    fn pair_outputs(&mut self, alg: Algorithm, k: usize) -> Result<PairOutputs, String> {
        let key = (alg.name().to_string(), k);
        if let Some(r) = self.gates.get(&key) {
            return r.clone();
        }
        let r = self.compute_pair(alg, k).map_err(|e| e.to_string());
        self.gates.insert(key, r.clone());
        r
    }

    fn compute_pair(&self, alg: Algorithm, k: usize) -> Result<PairOutputs, HarnessError> {
        let (m, runs, cfg) = (&self.p.model, &self.p.runs, self.cfg);
        let seed = derive_str(cfg.seed, &format!("{}/pair/k={k}", alg.name()));
        let base = base_config(cfg, alg, Strategy::Ns).with_seed(seed);
        let (c_ns, c_dn) = discover_pair(m, runs, &base, k)?;
        let labeling = classify_gates(&c_ns, &c_dn)?;
        let graph = gatecircuits::EdgeModel::graph(m);
        let gates = group_gates(&labeling, graph)?;
        let gate_stats =
            if gates.is_empty() { Vec::new() } else { evaluation::gate_effects(m, runs, &gates, cfg.metric)? };
        let ablations = evaluation::ablation_box(
            m,
            runs,
            &gates,
            cfg.params.ablation_repeats,
            derive_str(seed, "ablation"),
            cfg.metric,
        )?;
        Ok(PairOutputs {
            labels: labeling.names(graph)?,
            gate_stats,
            proportions: evaluation::proportions(&labeling),
            ablations,
        })
    }

    fn sweep(&mut self, alg: Algorithm, k: usize) -> Result<Vec<MisalignmentReport>, String> {
        let key = (alg.name().to_string(), k);
        if let Some(r) = self.sweeps.get(&key) {
            return r.clone();
        }
        let r = self.compute_sweep(alg, k).map_err(|e| e.to_string());
        self.sweeps.insert(key, r.clone());
        r
    }

    fn compute_sweep(&self, alg: Algorithm, k: usize) -> Result<Vec<MisalignmentReport>, HarnessError> {
        let cfg = self.cfg;
        let seed = derive_str(cfg.seed, &format!("{}/sweep/k={k}", alg.name()));
        let base = base_config(cfg, alg, Strategy::Ns).with_seed(seed);
        let range = sweep_range(k, cfg.params.misalignment_spread, self.p.info.edges);
        let sampler = cfg.params.sampler.clone().with_seed(derive_str(seed, "sampler"));
        Ok(ratio_sweep(&self.p.model, &self.p.runs, &base, k, range, &sampler, cfg.params.misalignment_m)?)
    }

    fn cell(&mut self, alg: Algorithm, strategy: Strategy, k: usize) -> Cell {
        let mut cell = Cell { algorithm: alg, strategy, k, seed: 0, output: None, error: None };
        cell.seed = derive_str(self.cfg.seed, &cell.key());
        match self.run_cell(alg, strategy, k, cell.seed) {
            Ok(out) => cell.output = Some(out),
            Err(e) => cell.error = Some(e),
        }
        cell
    }

    fn run_cell(&mut self, alg: Algorithm, strategy: Strategy, k: usize, seed: u64) -> Result<CellOutput, String> {
        let cfg = self.cfg;
        let (m, runs) = (&self.p.model, &self.p.runs);
        let dcfg = base_config(cfg, alg, strategy).with_k(k).with_seed(seed);
        let fail = |e: gatecircuits::Error| e.to_string();
        let circuit = discover(m, runs, &dcfg).map_err(fail)?.circuit;
        let graph = gatecircuits::EdgeModel::graph(m);
        let mut eval = EvalReport::default();
        if cfg.wants(Evaluation::Faithfulness) {
            eval.faithfulness = Some(evaluation::faithfulness(m, runs, &circuit, cfg.metric).map_err(fail)?);
        }
        if cfg.wants(Evaluation::Completeness) {
            eval.completeness = Some(evaluation::completeness(m, runs, &circuit, cfg.metric).map_err(fail)?);
        }
        if cfg.wants(Evaluation::IncompletenessSampled) {
            let (lo, hi) = cfg.params.incompleteness_sizes;
            eval.incompleteness_sampled = Some(
                evaluation::incompleteness_sampled(
                    m,
                    runs,
                    &circuit,
                    cfg.params.incompleteness_samples,
                    lo..=hi,
                    derive_str(seed, "incompleteness"),
                    cfg.metric,
                )
                .map_err(fail)?,
            );
        }
        if cfg.wants(Evaluation::Randomness) {
            let seeds = evaluation::run_seeds(seed, cfg.params.randomness_runs);
            eval.randomness = Some(evaluation::randomness(m, runs, &dcfg, k, &seeds).map_err(fail)?);
        }
        let mut out = CellOutput {
            circuit: graph.edge_names(&circuit),
            eval,
            labels: None,
            ablations: Vec::new(),
            misalignment: Vec::new(),
        };
        if cfg.wants(Evaluation::Gates) {
            let pair = self.pair_outputs(alg, k)?;
            out.labels = Some(pair.labels);
            out.eval.gate_stats = pair.gate_stats;
            out.eval.proportions = Some(pair.proportions);
            out.ablations = pair.ablations;
        }
        if cfg.wants(Evaluation::Misalignment) {
            out.misalignment = self.sweep(alg, k)?;
        }
        Ok(out)
    }
}

/// Dn sizes within `spread` of `k`, clamped to the graph.
pub fn sweep_range(k: usize, spread: f64, edges: usize) -> std::ops::RangeInclusive<usize> {
    let lo = ((k as f64) * (1.0 - spread)).round().max(1.0) as usize;
    let hi = (((k as f64) * (1.0 + spread)).round() as usize).min(edges);
    lo..=hi.max(lo)
}

/// Both oracle subsets of a small model.
pub fn run_oracle(p: &Prepared, cfg: &ExperimentConfig) -> OracleReport {
    let graph = gatecircuits::EdgeModel::graph(&p.model);
    let mut rep = OracleReport { faithful: None, complete: None, error: None };
    for mode in [OracleMode::Faithful, OracleMode::Complete] {
        match evaluation::minimal_subset_oracle(&p.model, &p.runs, cfg.metric, mode, OracleScope::default_for(mode)) {
            Ok(r) => {
                let s = OracleSubset { edges: evaluation::oracle_names(graph, &r), tie_count: r.tie_count };
                match mode {
                    OracleMode::Faithful => rep.faithful = Some(s),
                    OracleMode::Complete => rep.complete = Some(s),
                }
            }
            Err(e) => {
                rep.error = Some(e.to_string());
                break;
            }
        }
    }
    rep
}

/// Run the whole grid on a prepared model.
pub fn run_prepared(cfg: &ExperimentConfig, p: &Prepared) -> (RunReport, Vec<(String, f64)>) {
    let mut grid = Grid { cfg, p, gates: BTreeMap::new(), sweeps: BTreeMap::new() };
    let mut cells = Vec::new();
    let mut times = Vec::new();
    for &alg in &cfg.algorithms {
        for &strategy in &cfg.strategies {
            for &k in &cfg.k_grid {
                let t0 = Instant::now();
                let cell = grid.cell(alg, strategy, k);
                if let Some(e) = &cell.error {
                    log::warn!("{}: {e}", cell.key());
                }
                times.push((cell.key(), t0.elapsed().as_secs_f64()));
                cells.push(cell);
            }
        }
    }
    let oracle = cfg.wants(Evaluation::Oracle).then(|| run_oracle(p, cfg));
    let report = RunReport {
        engine_version: gatecircuits::VERSION.to_string(),
        config: cfg.clone(),
        model: p.info.clone(),
        cells,
        oracle,
    };
    (report, times)
}

/// Validate, prepare and run `cfg`, writing the report if an output path
/// is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(RunReport, Timings), HarnessError> {
    cfg.validate()?;
    let t0 = Instant::now();
    let p = prepare(cfg)?;
    let setup = t0.elapsed().as_secs_f64();
    let (report, cells) = run_prepared(cfg, &p);
    let timings = Timings { total_seconds: t0.elapsed().as_secs_f64(), setup_seconds: setup, cells };
    if let Some(path) = &cfg.output {
        write_atomic(path, &report.to_json()?)?;
        write_atomic(&timings_path(path), &(serde_json::to_string_pretty(&timings)? + "\n"))?;
    }
    Ok((report, timings))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_range_is_clamped() {
        assert_eq!(sweep_range(10, 0.4, 100), 6..=14);
        assert_eq!(sweep_range(2, 0.9, 3), 1..=3);
        assert_eq!(sweep_range(1, 0.0, 5), 1..=1);
    }
}
