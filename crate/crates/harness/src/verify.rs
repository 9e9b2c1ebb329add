// SPDX-License-Identifier: MIT OR Apache-2.0

//! The acceptance suite.

use std::collections::BTreeMap;
use std::time::Instant;

use gatecircuits::discovery::discover;
use gatecircuits::evaluation::{self, mean_std};
use gatecircuits::gates::{best_alignment, ratio_sweep, SamplerConfig, DEFAULT_M};
use gatecircuits::model::engine::{edge_gradients, forward, loss_with_edge_override};
use gatecircuits::model::planted::{planted_kinds, PlantedNetwork};
use gatecircuits::model::{make_trained_transformer, ToySpec, TrainSummary};
use gatecircuits::rng::{self, derive, derive_str};
use gatecircuits::{
    make_task, AblationMode, Algorithm, Circuit, DiscoveryConfig, EdgeModel, Gate, GateKind, GateNetworkSpec,
    InductionCorruption, Model, ModelSpec, OracleMode, OracleScope, OutputDistance, OutputLoss, RunSet, Strategy,
    TaskSpec, TrainConfig, TransformerSpec,
};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

/// Outcome of one criterion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    /// Per-check outcomes inside the criterion.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub checks: BTreeMap<String, bool>,
}

/// Everything `verify` measured. Free of wall times so reruns compare
/// byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifySummary {
    pub engine_version: String,
    pub seed: u64,
    pub results: Vec<CriterionResult>,
}

impl VerifySummary {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn to_json(&self) -> Result<String, HarnessError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Runtime budget in seconds for each criterion.
pub fn budget(id: u8) -> f64 {
    match id {
        1 => 10.0,
        2 => 1.0,
        3 | 4 | 9 => 60.0,
        5 => 30.0,
        6 => 1800.0,
        7 => 300.0,
        8 => 600.0,
        _ => f64::INFINITY,
    }
}

pub const CRITERIA: [(u8, &str); 9] = [
    (1, "gate recovery matrix"),
    (2, "adder toy outputs"),
    (3, "minimal subset oracle"),
    (4, "edge gradient check"),
    (5, "one- and two-edge ablations"),
    (6, "directional orderings on a trained transformer"),
    (7, "misalignment sweep"),
    (8, "completeness metric variance"),
    (9, "determinism"),
];

/// Criteria that run fast enough to repeat for the determinism check.
pub const FAST: [u8; 4] = [1, 2, 3, 5];

#[derive(Clone, Debug, Default)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Criteria to run; all when empty.
    pub only: Vec<u8>,
    pub orderings: OrderingSetup,
}

fn result(id: u8, passed: bool, detail: String, checks: BTreeMap<String, bool>) -> CriterionResult {
    let name = CRITERIA.iter().find(|c| c.0 == id).map(|c| c.1).unwrap_or("unknown").to_string();
    CriterionResult { id, name, passed, detail, checks }
}

fn errored(id: u8, e: impl std::fmt::Display) -> CriterionResult {
    result(id, false, format!("error: {e}"), BTreeMap::new())
}

/// Run the selected criteria, calling `report` after each with its wall
/// time.
pub fn verify_paper_suite(
    opts: &VerifyOptions,
    mut report: impl FnMut(&CriterionResult, f64),
) -> VerifySummary {
    let mut results = Vec::new();
    for (id, _) in CRITERIA {
        if !opts.only.is_empty() && !opts.only.contains(&id) {
            continue;
        }
        let t0 = Instant::now();
        let r = run_criterion(id, opts).unwrap_or_else(|e| errored(id, e));
        report(&r, t0.elapsed().as_secs_f64());
        results.push(r);
    }
    VerifySummary { engine_version: gatecircuits::VERSION.to_string(), seed: opts.seed, results }
}

fn run_criterion(id: u8, opts: &VerifyOptions) -> Result<CriterionResult, HarnessError> {
    let seed = opts.seed;
    match id {
        1 => recovery_matrix(&standard_toys()),
        2 => adder_outputs(),
        3 => oracle_suite(seed),
        4 => gradient_check(seed),
        5 => ablation_pattern(seed),
        6 => orderings(seed, &opts.orderings),
        7 => misalignment(seed),
        8 => metric_variance(seed, &opts.orderings),
        9 => determinism(seed),
        _ => Err(HarnessError::Report(format!("no criterion {id}"))),
    }
}

/// One-line status for terminals.
pub fn status_line(r: &CriterionResult, seconds: f64) -> String {
    let budget = budget(r.id);
    let time = if seconds <= budget { "" } else { " OVER BUDGET" };
    format!(
        "criterion {} [{}] {}: {} ({seconds:.1}s of {budget:.0}s{time})",
        r.id,
        if r.passed { "PASS" } else { "FAIL" },
        r.name,
        r.detail
    )
}

// ---------------------------------------------------------------------------
// 1. Recovery matrix
// ---------------------------------------------------------------------------

const HEAD_EDGES: [&str; 2] = ["a0.0->m0", "a0.1->m0"];

/// The three toys with their standard biases.
pub fn standard_toys() -> Vec<(GateKind, ModelSpec)> {
    GateKind::ALL.iter().map(|&k| (k, gatecircuits::make_gate_toy(k).0)).collect()
}

/// Head edges each algorithm recovers on each toy, as published.
pub fn recovery_expected(alg: Algorithm, strategy: Strategy, gate: GateKind) -> usize {
    match (gate, strategy) {
        (GateKind::Adder, _) => 2,
        (GateKind::And, Strategy::Ns) | (GateKind::Or, Strategy::Dn) => 2,
        (_, _) if alg == Algorithm::Linear => 0,
        _ => 1,
    }
}

fn recovery_tau(alg: Algorithm) -> f64 {
    match alg {
        Algorithm::Mask => 0.5,
        _ => 0.1,
    }
}

/// One recovery-matrix cell that came out differently.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellDiff {
    pub algorithm: Algorithm,
    pub strategy: Strategy,
    pub gate: GateKind,
    pub expected: usize,
    pub found: usize,
}

/// Recovered head-edge counts for every cell, and the cells that differ
/// from the published matrix.
pub fn recovery_cells(toys: &[(GateKind, ModelSpec)]) -> Result<(usize, Vec<CellDiff>), HarnessError> {
    let data = make_task(&TaskSpec::ZeroInput, 0)?;
    let mut diffs = Vec::new();
    let mut total = 0;
    for (gate, spec) in toys {
        let m: Model<f64> = Model::from_spec(spec)?;
        let runs = RunSet::new(&m, &data, AblationMode::Zero, 0)?;
        let heads = m.graph().circuit_from_names(&HEAD_EDGES)?;
        for alg in Algorithm::ALL {
            for strategy in [Strategy::Ns, Strategy::Dn] {
                let cfg = DiscoveryConfig::new(alg, strategy, OutputDistance::Sink).with_tau(recovery_tau(alg));
                let c = discover(&m, &runs, &cfg)?.circuit;
                let found = c.intersection(&heads)?.len();
                let expected = recovery_expected(alg, strategy, *gate);
                total += 1;
                if found != expected {
                    diffs.push(CellDiff { algorithm: alg, strategy, gate: *gate, expected, found });
                }
            }
        }
    }
    Ok((total, diffs))
}

/// Check the matrix on the given toys.
pub fn recovery_matrix(toys: &[(GateKind, ModelSpec)]) -> Result<CriterionResult, HarnessError> {
    let (total, diffs) = recovery_cells(toys)?;
    let mut detail = format!("{}/{total} cells match", total - diffs.len());
    for d in &diffs {
        detail.push_str(&format!(
            "; {}/{}/{}: expected {} found {}",
            d.algorithm, d.strategy, d.gate, d.expected, d.found
        ));
    }
    Ok(result(1, diffs.is_empty() && total == 18, detail, BTreeMap::new()))
}

/// The toys with the OR toy's second bias replaced.
pub fn toys_with_or_bias(bias2: f64) -> Vec<(GateKind, ModelSpec)> {
    let mut toys = standard_toys();
    for (k, spec) in &mut toys {
        if *k == GateKind::Or {
            *spec = ModelSpec::ToyTransformer(ToySpec { gate: GateKind::Or, bias1: 1.0, bias2 });
        }
    }
    toys
}

// ---------------------------------------------------------------------------
// 2. ADDER outputs
// ---------------------------------------------------------------------------

fn adder_outputs() -> Result<CriterionResult, HarnessError> {
    let m: Model<f64> = Model::from_spec(&gatecircuits::make_gate_toy(GateKind::Adder).0)?;
    let runs = RunSet::new(&m, &make_task(&TaskSpec::ZeroInput, 0)?, AblationMode::Zero, 0)?;
    let g = m.graph();
    let full = g.full_circuit();
    let mut checks = BTreeMap::new();
    let mut values = Vec::new();
    for (name, removed, want) in [
        ("none", vec![], 2.5),
        ("head 1", vec![HEAD_EDGES[0]], 1.5),
        ("head 2", vec![HEAD_EDGES[1]], 1.0),
        ("both", HEAD_EDGES.to_vec(), 0.0),
    ] {
        let retained = full.difference(&g.circuit_from_names(&removed)?)?;
        let out = runs.runs()[0].patched(&m, &retained, Strategy::Ns)?[0];
        checks.insert(format!("ablate {name}"), (out - want).abs() <= 1e-9);
        values.push(format!("{out}"));
    }
    let ok = checks.values().all(|&b| b);
    Ok(result(2, ok, format!("outputs {} (want 2.5/1.5/1/0)", values.join("/")), checks))
}

// ---------------------------------------------------------------------------
// 3. Oracle
// ---------------------------------------------------------------------------

/// Receiver and kind of every gate edge.
fn gate_edges(spec: &GateNetworkSpec, m: &Model<f64>) -> BTreeMap<usize, (usize, GateKind)> {
    let g = m.graph();
    planted_kinds(spec, g)
        .into_iter()
        .enumerate()
        .filter_map(|(e, k)| k.map(|k| (e, (g.edge_ends(e).1, k))))
        .collect()
}

/// Does `c` keep every edge of `all` kinds and exactly one edge of every
/// `one` gate?
fn minimal_rule_holds(edges: &BTreeMap<usize, (usize, GateKind)>, c: &Circuit, one: GateKind) -> bool {
    let mut per_gate: BTreeMap<usize, usize> = BTreeMap::new();
    for (&e, &(recv, kind)) in edges {
        if kind == one {
            *per_gate.entry(recv).or_default() += usize::from(c.contains(e));
        } else if !c.contains(e) {
            return false;
        }
    }
    per_gate.values().all(|&n| n == 1)
}

fn or_product(edges: &BTreeMap<usize, (usize, GateKind)>) -> u64 {
    let mut sizes: BTreeMap<usize, u64> = BTreeMap::new();
    for &(recv, kind) in edges.values() {
        if kind == GateKind::Or {
            *sizes.entry(recv).or_default() += 1;
        }
    }
    sizes.values().product()
}

fn oracle_suite(seed: u64) -> Result<CriterionResult, HarnessError> {
    let mut nets = vec![("fig2".to_string(), GateNetworkSpec::fig2())];
    for i in 0..5u64 {
        let s = derive(seed, i);
        nets.push((format!("planted-{i}"), PlantedNetwork::random_small(s).build(s)?));
    }
    let mut checks = BTreeMap::new();
    let mut failed = Vec::new();
    for (name, spec) in &nets {
        let m: Model<f64> = Model::from_spec(&ModelSpec::GateNetwork(spec.clone()))?;
        let data = make_task(&TaskSpec::GateClean { sources: spec.sources.len() }, 0)?;
        let runs = RunSet::new(&m, &data, AblationMode::Zero, 0)?;
        let edges = gate_edges(spec, &m);
        let oracle = |mode| {
            evaluation::minimal_subset_oracle(&m, &runs, OutputDistance::Sink, mode, OracleScope::default_for(mode))
        };
        let f = oracle(OracleMode::Faithful)?;
        let c = oracle(OracleMode::Complete)?;
        let ok_f = minimal_rule_holds(&edges, &f.circuit, GateKind::Or);
        let ok_t = f.tie_count == or_product(&edges);
        let ok_c = minimal_rule_holds(&edges, &c.circuit, GateKind::And);
        for (what, ok) in [("faithful", ok_f), ("ties", ok_t), ("complete", ok_c)] {
            checks.insert(format!("{name} {what}"), ok);
            if !ok {
                failed.push(format!("{name} {what}"));
            }
        }
    }
    let detail = if failed.is_empty() {
        format!("{} networks agree with the minimal-subset rule", nets.len())
    } else {
        format!("disagreements: {}", failed.join(", "))
    };
    Ok(result(3, failed.is_empty(), detail, checks))
}

// ---------------------------------------------------------------------------
// 4. Gradients
// ---------------------------------------------------------------------------

/// Relative error with a floor on the scale, so gradients that vanish
/// compare absolutely.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn gradient_check(seed: u64) -> Result<CriterionResult, HarnessError> {
    let spec = TransformerSpec { layers: 2, heads: 2, model_dim: 16, mlp_dim: 32, vocab_size: 8, context: 6, seed };
    let task = TaskSpec::induction(8, 6, 128);
    let fit = make_task(&task, derive_str(seed, "gradient-train"))?;
    let tc = TrainConfig { steps: 400, accuracy_floor: 0.0, seed, ..TrainConfig::default() };
    let (t, summary) = make_trained_transformer::<f64>(&ModelSpec::TrainedTransformer(spec), &fit, &tc)?;
    let probe = make_task(&task, derive_str(seed, "gradient-probe"))?;
    let mut r = rng::seeded(derive_str(seed, "gradient-edges"));
    let n_edges = t.graph().num_edges();
    let h = 1e-6;
    let (mut worst, mut checked, mut kinks) = (0.0f64, 0, 0);
    for i in 0..1000 {
        if checked == 120 {
            break;
        }
        let pair = &probe.pairs()[i % probe.len()];
        let cache = forward(&t, &pair.clean)?;
        let loss = OutputLoss::Nll { label: pair.clean_label };
        let grads = edge_gradients(&t, &cache, &loss, None)?;
        let e = r.gen_range(0..n_edges);
        let g = grads.grad(e);
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        // Directional derivative along the edge's own gradient.
        let base = cache.edge_value(e);
        let central = |h: f64| -> Result<f64, HarnessError> {
            let step = |sign: f64| base.iter().zip(g).map(|(v, d)| v + sign * h * d / norm).collect::<Vec<_>>();
            Ok((loss_with_edge_override(&t, &cache, e, step(1.0), &loss)?
                - loss_with_edge_override(&t, &cache, e, step(-1.0), &loss)?)
                / (2.0 * h))
        };
        let fd = central(h)?;
        if relative_error(fd, central(2.0 * h)?) > 1e-3 {
            kinks += 1;
            continue;
        }
        worst = worst.max(relative_error(fd, norm));
        checked += 1;
    }
    let ok = checked >= 100 && worst < 1e-4;
    Ok(result(
        4,
        ok,
        format!(
            "{checked} edges, worst relative error {worst:.2e}, {kinks} draws next to a kink, model accuracy {:.3}",
            summary.accuracy
        ),
        BTreeMap::new(),
    ))
}

// ---------------------------------------------------------------------------
// 5. Ablation pattern
// ---------------------------------------------------------------------------

/// The planted gates of a network, from its spec.
pub fn planted_gates(spec: &GateNetworkSpec, m: &Model<f64>) -> Vec<Gate> {
    let g = m.graph();
    let mut by: BTreeMap<usize, (GateKind, Vec<gatecircuits::EdgeId>)> = BTreeMap::new();
    for (e, (recv, kind)) in gate_edges(spec, m) {
        by.entry(recv).or_insert((kind, Vec::new())).1.push(g.edges()[e]);
    }
    by.into_iter().map(|(recv, (label, edges))| Gate { receiver: g.nodes()[recv], label, edges }).collect()
}

fn ablation_pattern(seed: u64) -> Result<CriterionResult, HarnessError> {
    let mut checks = BTreeMap::new();
    let mut worst: BTreeMap<GateKind, f64> = BTreeMap::new();
    for (i, net) in [PlantedNetwork::graded(3, 2), PlantedNetwork::graded(2, 3)].into_iter().enumerate() {
        let spec = net.build(derive(seed, i as u64))?;
        let m: Model<f64> = Model::from_spec(&ModelSpec::GateNetwork(spec.clone()))?;
        let data = make_task(&TaskSpec::GateClean { sources: spec.sources.len() }, 0)?;
        let runs = RunSet::new(&m, &data, AblationMode::Zero, 0)?;
        let gates: Vec<Gate> = planted_gates(&spec, &m).into_iter().filter(|g| g.receiver != spec.sink.unwrap()).collect();
        let samples =
            evaluation::ablation_box(&m, &runs, &gates, 30, derive_str(seed, "ablation"), OutputDistance::Sink)?;
        for (node, label, d1, d2) in evaluation::ablation_means(&samples) {
            let (ok, ratio) = match label {
                GateKind::And => (d1 >= 0.9 * d2, d1 / d2),
                GateKind::Or => (d1 <= 0.05 * d2, if d2 > 0.0 { d1 / d2 } else { 0.0 }),
                GateKind::Adder => (d2 >= 1.5 * d1 && d1 > 0.0, d2 / d1),
            };
            checks.insert(format!("net {i} {node} {label}"), ok);
            let w = worst.entry(label).or_insert(ratio);
            *w = match label {
                GateKind::And | GateKind::Adder => w.min(ratio),
                GateKind::Or => w.max(ratio),
            };
        }
    }
    let ok = checks.values().all(|&b| b);
    let detail = format!(
        "{} gates; worst d1/d2 AND {:.3}, OR {:.3}; worst d2/d1 ADDER {:.3}",
        checks.len(),
        worst.get(&GateKind::And).copied().unwrap_or(f64::NAN),
        worst.get(&GateKind::Or).copied().unwrap_or(f64::NAN),
        worst.get(&GateKind::Adder).copied().unwrap_or(f64::NAN),
    );
    Ok(result(5, ok, detail, checks))
}

// ---------------------------------------------------------------------------
// 6. Orderings on a trained transformer
// ---------------------------------------------------------------------------

/// Model and protocol for the trained-transformer criteria.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderingSetup {
    pub model: TransformerSpec,
    pub vocab_size: usize,
    pub seq_len: usize,
    pub corruption: InductionCorruption,
    pub train_pairs: usize,
    pub train: TrainConfig,
    pub k: usize,
    pub pairs: usize,
    pub seeds: usize,
    pub randomness_runs: usize,
    pub algorithms: Vec<Algorithm>,
}

impl Default for OrderingSetup {
    fn default() -> Self {
        Self {
            model: TransformerSpec { layers: 2, heads: 4, model_dim: 32, mlp_dim: 64, vocab_size: 10, context: 8, seed: 0 },
            vocab_size: 10,
            seq_len: 8,
            corruption: InductionCorruption::BreakMatch,
            train_pairs: 512,
            train: TrainConfig::default(),
            k: 24,
            pairs: 32,
            seeds: 10,
            randomness_runs: 30,
            algorithms: Algorithm::ALL.to_vec(),
        }
    }
}

impl OrderingSetup {
    fn task(&self, n: usize) -> TaskSpec {
        TaskSpec::Induction { vocab_size: self.vocab_size, seq_len: self.seq_len, n_pairs: n, corruption: self.corruption }
    }

    /// Train the model once.
    pub fn train_model(&self, seed: u64) -> Result<(Model<f64>, TrainSummary), HarnessError> {
        let fit = make_task(&self.task(self.train_pairs), derive_str(seed, "orderings-train"))?;
        let mut spec = self.model.clone();
        spec.seed = derive(spec.seed, seed);
        let (t, s) = make_trained_transformer::<f64>(&ModelSpec::TrainedTransformer(spec), &fit, &self.train)?;
        Ok((Model::Transformer(t), s))
    }

    /// Evaluation runs for one root seed.
    pub fn runs(&self, m: &Model<f64>, seed: u64, i: usize) -> Result<RunSet<f64>, HarnessError> {
        let s = derive(derive_str(seed, "orderings-runs"), i as u64);
        Ok(RunSet::new(m, &make_task(&self.task(self.pairs), s)?, AblationMode::Interchange, s)?)
    }
}

/// Faithfulness and completeness distances of one circuit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub faithful: f64,
    pub removal: f64,
}

fn measure(m: &Model<f64>, runs: &RunSet<f64>, c: &Circuit) -> Result<Pair, HarnessError> {
    Ok(Pair {
        faithful: evaluation::faithfulness(m, runs, c, OutputDistance::Kl)?.distance,
        removal: evaluation::completeness(m, runs, c, OutputDistance::Kl)?.distance_of_removal,
    })
}

fn orderings(seed: u64, setup: &OrderingSetup) -> Result<CriterionResult, HarnessError> {
    let (m, summary) = setup.train_model(seed)?;
    let need = (setup.seeds * 8).div_ceil(10);
    let mut checks = BTreeMap::new();
    let mut parts = vec![format!("accuracy {:.3}", summary.accuracy)];
    let run_sets: Vec<RunSet<f64>> = (0..setup.seeds).map(|i| setup.runs(&m, seed, i)).collect::<Result<_, _>>()?;
    for &alg in &setup.algorithms {
        let (mut a, mut b1, mut b2) = (0, 0, 0);
        for (i, runs) in run_sets.iter().enumerate() {
            let s = derive(derive_str(seed, alg.name()), i as u64);
            let circuit = |st| -> Result<Circuit, HarnessError> {
                let cfg = DiscoveryConfig::new(alg, st, OutputDistance::Kl).with_k(setup.k).with_seed(s);
                Ok(discover(&m, runs, &cfg)?.circuit)
            };
            let ns = measure(&m, runs, &circuit(Strategy::Ns)?)?;
            let dn = measure(&m, runs, &circuit(Strategy::Dn)?)?;
            let both = measure(&m, runs, &circuit(Strategy::NsDn)?)?;
            a += usize::from(both.removal > ns.removal);
            b1 += usize::from(both.faithful <= 1.2 * ns.faithful);
            b2 += usize::from(dn.faithful > ns.faithful);
        }
        let n = setup.seeds;
        checks.insert(format!("{alg} completeness"), a >= need);
        checks.insert(format!("{alg} faithfulness nsdn"), b1 >= need);
        checks.insert(format!("{alg} faithfulness dn"), b2 >= need);
        parts.push(format!("{alg}: a {a}/{n} b {b1}/{n},{b2}/{n}"));
    }
    let runs = &run_sets[0];
    let seeds = evaluation::run_seeds(derive_str(seed, "orderings-randomness"), setup.randomness_runs);
    for &alg in setup.algorithms.iter().filter(|a| **a != Algorithm::Linear) {
        let h = |st| -> Result<f64, HarnessError> {
            let cfg = DiscoveryConfig::new(alg, st, OutputDistance::Kl);
            Ok(evaluation::randomness(&m, runs, &cfg, setup.k, &seeds)?.mean_hamming)
        };
        let (ns, nsdn) = (h(Strategy::Ns)?, h(Strategy::NsDn)?);
        checks.insert(format!("{alg} randomness"), ns > nsdn);
        parts.push(format!("{alg} hamming ns {ns:.2} nsdn {nsdn:.2}"));
    }
    let ok = checks.values().all(|&b| b);
    Ok(result(6, ok, parts.join("; "), checks))
}

// ---------------------------------------------------------------------------
// 7. Misalignment sweep
// ---------------------------------------------------------------------------

fn misalignment(seed: u64) -> Result<CriterionResult, HarnessError> {
    let spec = PlantedNetwork::graded(4, 2).build(seed)?;
    let m: Model<f64> = Model::from_spec(&ModelSpec::GateNetwork(spec.clone()))?;
    let data = make_task(&TaskSpec::GateClean { sources: spec.sources.len() }, 0)?;
    let runs = RunSet::new(&m, &data, AblationMode::Zero, 0)?;
    let base = DiscoveryConfig::new(Algorithm::Greedy, Strategy::Ns, OutputDistance::Sink);
    let k_ns = 30;
    let sampler = SamplerConfig::default().with_seed(derive_str(seed, "misalignment"));
    let sweep = ratio_sweep(&m, &runs, &base, k_ns, 18..=42, &sampler, DEFAULT_M)?;
    let argmax = |f: &dyn Fn(&gatecircuits::MisalignmentReport) -> f64| {
        sweep.iter().max_by(|a, b| f(a).total_cmp(&f(b))).map(|r| r.k_dn).unwrap_or(0)
    };
    let and_at = argmax(&|r| r.and_score);
    let or_at = argmax(&|r| r.or_score);
    let best = best_alignment(&sweep).ok_or_else(|| HarnessError::Report("empty sweep".into()))?;
    let mut checks = BTreeMap::new();
    checks.insert("and-score max at smallest k_dn".to_string(), and_at == 18);
    checks.insert("or-score max at largest k_dn".to_string(), or_at == 42);
    checks.insert("best ratio in [0.8, 1.25]".to_string(), (0.8..=1.25).contains(&best.ratio));
    let ok = checks.values().all(|&b| b);
    Ok(result(
        7,
        ok,
        format!(
            "and-score max at k_dn {and_at}, or-score max at k_dn {or_at}, best ratio {:.3} (k_dn {})",
            best.ratio, best.k_dn
        ),
        checks,
    ))
}

// ---------------------------------------------------------------------------
// 8. Metric variance
// ---------------------------------------------------------------------------

fn metric_variance(seed: u64, setup: &OrderingSetup) -> Result<CriterionResult, HarnessError> {
    let (m, _) = setup.train_model(seed)?;
    let runs = setup.runs(&m, seed, 0)?;
    let (mut s5, mut s30, mut rem) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..5 {
        let s = derive(derive_str(seed, "variance"), i as u64);
        let cfg = DiscoveryConfig::new(Algorithm::Greedy, Strategy::NsDn, OutputDistance::Kl).with_k(setup.k).with_seed(s);
        let c = discover(&m, &runs, &cfg)?.circuit;
        let sampled = |n| evaluation::incompleteness_sampled(&m, &runs, &c, n, 2..=5, s, OutputDistance::Kl);
        s5.push(sampled(5)?.mean);
        s30.push(sampled(30)?.mean);
        rem.push(evaluation::completeness(&m, &runs, &c, OutputDistance::Kl)?.distance_of_removal);
    }
    let (sd5, sd30, sdr) = (mean_std(&s5).1, mean_std(&s30).1, mean_std(&rem).1);
    let mut checks = BTreeMap::new();
    checks.insert("std(5) >= std(30)".to_string(), sd5 >= sd30);
    checks.insert("std(30) >= std(removal)".to_string(), sd30 >= sdr);
    let ok = checks.values().all(|&b| b);
    Ok(result(8, ok, format!("std 5 samples {sd5:.4}, 30 samples {sd30:.4}, removal {sdr:.4}"), checks))
}

// ---------------------------------------------------------------------------
// 9. Determinism
// ---------------------------------------------------------------------------

const DETERMINISM_GRID: &str = r#"
version = 1
seed = 0
preset = "planted-small"
metric = "sink"
algorithms = ["greedy", "linear", "mask"]
strategies = ["ns", "dn", "nsdn"]
k_grid = [4, 6]
evaluations = ["faithfulness", "completeness", "randomness", "gates", "oracle"]

[params]
randomness_runs = 3

[task]
kind = "gate-clean"
sources = 4
"#;

fn determinism(seed: u64) -> Result<CriterionResult, HarnessError> {
    let fast = VerifyOptions { seed, only: FAST.to_vec(), ..VerifyOptions::default() };
    let once = || verify_paper_suite(&fast, |_, _| {}).to_json();
    let same_verify = once()? == once()?;
    let mut cfg = crate::ExperimentConfig::from_toml(DETERMINISM_GRID)?;
    cfg.seed = seed;
    let grid = || -> Result<String, HarnessError> { crate::run_experiment(&cfg)?.0.to_json() };
    let same_grid = grid()? == grid()?;
    let mut checks = BTreeMap::new();
    checks.insert("verify summary".to_string(), same_verify);
    checks.insert("grid report".to_string(), same_grid);
    let ok = same_verify && same_grid;
    Ok(result(9, ok, format!("verify reruns identical: {same_verify}; grid reruns identical: {same_grid}"), checks))
}
