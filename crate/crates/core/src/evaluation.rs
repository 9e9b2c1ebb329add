// SPDX-License-Identifier: MIT OR Apache-2.0

//! Circuit evaluation: faithfulness, completeness, randomness, gate effects
//! and the exhaustive minimal-subset oracle.

use std::ops::RangeInclusive;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::discovery::{discover, DiscoveryConfig};
use crate::error::{Error, Result};
use crate::gates::{Gate, GateLabeling};
use crate::graph::{Circuit, ComputationalGraph, NodeId};
use crate::intervention::{circuit_accuracy, circuit_distance, circuit_pair_distance, RunSet, Strategy};
use crate::metric::OutputDistance;
use crate::model::{EdgeModel, GateKind, Model};
use crate::rng;
use crate::scalar::Scalar;

/// Largest graph the oracle will enumerate.
pub const ORACLE_MAX_EDGES: usize = 14;

/// Distance below which a circuit counts as optimally faithful.
pub const ORACLE_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Faithfulness {
    pub metric: OutputDistance,
    pub distance: f64,
    /// `None` for scalar-sink models.
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Completeness {
    pub metric: OutputDistance,
    pub distance_of_removal: f64,
    pub accuracy_of_removal: Option<f64>,
}

/// Mean and spread of a sampled statistic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sampled {
    pub mean: f64,
    pub std: f64,
    pub samples: usize,
}

impl Sampled {
    pub fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        Self { mean, std, samples: values.len() }
    }
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Randomness {
    pub mean_hamming: f64,
    pub std: f64,
    pub run_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateEffect {
    pub receiver: NodeId,
    pub label: GateKind,
    pub size: usize,
    pub gate_effect: f64,
    pub edge_effect: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proportions {
    pub and: usize,
    pub or: usize,
    pub adder: usize,
}

impl Proportions {
    pub fn total(&self) -> usize {
        self.and + self.or + self.adder
    }
}

/// Everything measured for one circuit. Absent fields were not requested.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faithfulness: Option<Faithfulness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completeness: Option<Completeness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub incompleteness_sampled: Option<Sampled>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub randomness: Option<Randomness>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gate_stats: Vec<GateEffect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proportions: Option<Proportions>,
}

fn accuracy_if_labeled<S: Scalar>(model: &Model<S>, runs: &RunSet<S>, retained: &Circuit) -> Result<Option<f64>> {
    if model.has_scalar_sink() {
        Ok(None)
    } else {
        circuit_accuracy(model, runs, retained, Strategy::Ns).map(Some)
    }
}

/// How well the circuit alone reproduces the full model.
pub fn faithfulness<S: Scalar>(
    model: &Model<S>,
    runs: &RunSet<S>,
    circuit: &Circuit,
    metric: OutputDistance,
) -> Result<Faithfulness> {
    model.graph().check(circuit)?;
    Ok(Faithfulness {
        metric,
        distance: circuit_distance(model, runs, circuit, Strategy::Ns, metric)?,
        accuracy: accuracy_if_labeled(model, runs, circuit)?,
    })
}

/// How much the model degrades once the circuit is removed.
pub fn completeness<S: Scalar>(
    model: &Model<S>,
    runs: &RunSet<S>,
    circuit: &Circuit,
    metric: OutputDistance,
) -> Result<Completeness> {
    let rest = model.graph().complement(circuit)?;
    Ok(Completeness {
        metric,
        distance_of_removal: circuit_distance(model, runs, &rest, Strategy::Ns, metric)?,
        accuracy_of_removal: accuracy_if_labeled(model, runs, &rest)?,
    })
}

/// `D(C \ K || G \ K)` over random sub-circuits `K` of the circuit.
pub fn incompleteness_sampled<S: Scalar, M: EdgeModel<S> + ?Sized>(
    model: &M,
    runs: &RunSet<S>,
    circuit: &Circuit,
    n_samples: usize,
    sizes: RangeInclusive<usize>,
    seed: u64,
    metric: OutputDistance,
) -> Result<Sampled> {
    let graph = model.graph();
    graph.check(circuit)?;
    if n_samples == 0 {
        return Err(Error::Evaluation("need at least one sample".into()));
    }
    if circuit.len() < *sizes.end() {
        return Err(Error::Size(format!(
            "circuit too small: {} edges for sub-circuits of up to {}",
            circuit.len(),
            sizes.end()
        )));
    }
    let mut r = rng::seeded(rng::derive_str(seed, "incompleteness"));
    let full = graph.full_circuit();
    let mut values = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let k = circuit.random_subcircuit(sizes.clone(), &mut r)?;
        let c_minus = circuit.difference(&k)?;
        let g_minus = full.difference(&k)?;
        values.push(circuit_pair_distance(model, runs, &c_minus, &g_minus, Strategy::Ns, metric)?);
    }
    Ok(Sampled::of(&values))
}

/// Pairwise Hamming distances between circuits discovered under each seed.
pub fn randomness<S: Scalar, M: EdgeModel<S> + ?Sized>(
    model: &M,
    runs: &RunSet<S>,
    config: &DiscoveryConfig,
    k: usize,
    seeds: &[u64],
) -> Result<Randomness> {
    if seeds.len() < 2 {
        return Err(Error::Evaluation("randomness needs at least two runs".into()));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Evaluation("seeds must differ".into()));
    }
    let circuits: Vec<Circuit> = seeds
        .iter()
        .map(|&s| discover(model, runs, &config.clone().with_k(k).with_seed(s)).map(|d| d.circuit))
        .collect::<Result<_>>()?;
    let mut distances = Vec::new();
    for i in 0..circuits.len() {
        for j in i + 1..circuits.len() {
            distances.push(circuits[i].hamming_distance(&circuits[j])? as f64);
        }
    }
    let (mean_hamming, std) = mean_std(&distances);
    Ok(Randomness { mean_hamming, std, run_count: seeds.len() })
}

/// `run_count` distinct seeds derived from `root`.
pub fn run_seeds(root: u64, run_count: usize) -> Vec<u64> {
    (0..run_count as u64).map(|i| rng::derive(rng::derive_str(root, "randomness"), i)).collect()
}

/// Output change from ablating each gate as a whole, and that change spread
/// evenly over its edges.
pub fn gate_effects<S: Scalar, M: EdgeModel<S> + ?Sized>(
    model: &M,
    runs: &RunSet<S>,
    gates: &[Gate],
    metric: OutputDistance,
) -> Result<Vec<GateEffect>> {
    if gates.is_empty() {
        return Err(Error::Evaluation("no gates to evaluate".into()));
    }
    let graph = model.graph();
    let full = graph.full_circuit();
    let base = circuit_distance(model, runs, &full, Strategy::Ns, metric)?;
    gates
        .iter()
        .map(|g| {
            let rest = full.difference(&g.circuit(graph)?)?;
            let gate_effect = circuit_distance(model, runs, &rest, Strategy::Ns, metric)? - base;
            Ok(GateEffect {
                receiver: g.receiver,
                label: g.label,
                size: g.edges.len(),
                gate_effect,
                edge_effect: gate_effect / g.edges.len() as f64,
            })
        })
        .collect()
}

pub fn proportions(labeling: &GateLabeling) -> Proportions {
    Proportions { and: labeling.and().len(), or: labeling.or().len(), adder: labeling.adder().len() }
}

// ---------------------------------------------------------------------------
// One- and two-edge ablations
// ---------------------------------------------------------------------------

/// One draw of the one-vs-two-edge ablation protocol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationSample {
    pub receiver: NodeId,
    pub label: GateKind,
    pub edges_removed: usize,
    pub delta: f64,
}

/// Ablate one and two random in-edges of every gate with at least two
/// edges, `repeats` times each, recording the change in distance.
pub fn ablation_box<S: Scalar, M: EdgeModel<S> + ?Sized>(
    model: &M,
    runs: &RunSet<S>,
    gates: &[Gate],
    repeats: usize,
    seed: u64,
    metric: OutputDistance,
) -> Result<Vec<AblationSample>> {
    let graph = model.graph();
    let full = graph.full_circuit();
    let mut r = rng::seeded(rng::derive_str(seed, "ablation-box"));
    let mut out = Vec::new();
    for g in gates.iter().filter(|g| g.edges.len() >= 2) {
        let edges: Vec<usize> = g.edges.iter().map(|e| graph.require_edge(e)).collect::<Result<_>>()?;
        for _ in 0..repeats {
            for removed in [1usize, 2] {
                let mut c = full.clone();
                for k in index::sample(&mut r, edges.len(), removed) {
                    c.remove(edges[k]);
                }
                out.push(AblationSample {
                    receiver: g.receiver,
                    label: g.label,
                    edges_removed: removed,
                    delta: circuit_distance(model, runs, &c, Strategy::Ns, metric)?,
                });
            }
        }
    }
    Ok(out)
}

/// Mean `(delta(1 edge), delta(2 edges))` per receiver, in first-seen order.
pub fn ablation_means(samples: &[AblationSample]) -> Vec<(NodeId, GateKind, f64, f64)> {
    let mut keys: Vec<(NodeId, GateKind)> = Vec::new();
    for s in samples {
        if !keys.contains(&(s.receiver, s.label)) {
            keys.push((s.receiver, s.label));
        }
    }
    keys.into_iter()
        .map(|(node, label)| {
            let mean = |n: usize| {
                let v: Vec<f64> = samples
                    .iter()
                    .filter(|s| s.receiver == node && s.label == label && s.edges_removed == n)
                    .map(|s| s.delta)
                    .collect();
                mean_std(&v).0
            };
            (node, label, mean(1), mean(2))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Oracle
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleMode {
    /// Smallest circuit whose distance from the full model is zero.
    Faithful,
    /// Smallest circuit whose removal reaches the largest distance.
    Complete,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleScope {
    /// Search over every edge subset of the graph.
    Global,
    /// Search each receiver's in-edges with the rest of the graph intact,
    /// then take the union.
    GateLocal,
}

impl OracleScope {
    /// Global for faithful, gate-local for complete. The smallest globally
    /// complete set is a single bottleneck edge, so completeness is only
    /// informative per receiver.
    pub fn default_for(mode: OracleMode) -> Self {
        match mode {
            OracleMode::Faithful => Self::Global,
            OracleMode::Complete => Self::GateLocal,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    pub circuit: Circuit,
    /// Number of distinct minimal subsets.
    pub tie_count: u64,
    pub mode: OracleMode,
    pub scope: OracleScope,
}

/// Subsets of `items` of size `k` in lexicographic order.
fn for_each_combination(items: &[usize], k: usize, f: &mut dyn FnMut(&[usize]) -> Result<()>) -> Result<()> {
    let n = items.len();
    if k > n {
        return Ok(());
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut chosen = vec![0usize; k];
    loop {
        for (c, &i) in chosen.iter_mut().zip(&idx) {
            *c = items[i];
        }
        f(&chosen)?;
        let mut i = k;
        loop {
            if i == 0 {
                return Ok(());
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return Ok(());
            }
        }
        if idx[i] == i + n - k {
            return Ok(());
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Smallest subset of `items` passing `ok`, its tie count, scanning sizes
/// upward.
fn smallest_passing(
    items: &[usize],
    ok: &mut dyn FnMut(&[usize]) -> Result<bool>,
) -> Result<(Vec<usize>, u64)> {
    for k in 0..=items.len() {
        let mut first: Option<Vec<usize>> = None;
        let mut ties = 0u64;
        for_each_combination(items, k, &mut |s| {
            if ok(s)? {
                ties += 1;
                if first.is_none() {
                    first = Some(s.to_vec());
                }
            }
            Ok(())
        })?;
        if let Some(s) = first {
            return Ok((s, ties));
        }
    }
    Err(Error::Evaluation("no subset satisfies the oracle condition".into()))
}

fn largest_removal(items: &[usize], removal: &mut dyn FnMut(&[usize]) -> Result<f64>) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for k in 0..=items.len() {
        for_each_combination(items, k, &mut |s| {
            best = best.max(removal(s)?);
            Ok(())
        })?;
    }
    Ok(best)
}

/// Exhaustive search for the minimal faithful or complete edge subset.
///
/// Ties resolve to the lexicographically first subset in canonical edge
/// order.
pub fn minimal_subset_oracle<S: Scalar, M: EdgeModel<S> + ?Sized>(
    model: &M,
    runs: &RunSet<S>,
    metric: OutputDistance,
    mode: OracleMode,
    scope: OracleScope,
) -> Result<OracleResult> {
    let graph = model.graph();
    let n = graph.num_edges();
    if n > ORACLE_MAX_EDGES {
        return Err(Error::Size(format!(
            "graph too large for enumeration ({n} edges, limit {ORACLE_MAX_EDGES})"
        )));
    }
    let full = graph.full_circuit();
    let dist = |retained: &Circuit| circuit_distance(model, runs, retained, Strategy::Ns, metric);
    let keep_only = |domain: &[usize], kept: &[usize]| {
        let mut c = full.clone();
        for e in domain {
            if !kept.contains(e) {
                c.remove(*e);
            }
        }
        c
    };
    let remove = |removed: &[usize]| {
        let mut c = full.clone();
        for &e in removed {
            c.remove(e);
        }
        c
    };
    let search = |domain: &[usize]| -> Result<(Vec<usize>, u64)> {
        match mode {
            OracleMode::Faithful => {
                smallest_passing(domain, &mut |s| Ok(dist(&keep_only(domain, s))? <= ORACLE_EPS))
            }
            OracleMode::Complete => {
                let best = largest_removal(domain, &mut |s| dist(&remove(s)))?;
                smallest_passing(domain, &mut |s| Ok(dist(&remove(s))? >= best - ORACLE_EPS))
            }
        }
    };
    let (chosen, tie_count) = match scope {
        OracleScope::Global => search(&(0..n).collect::<Vec<_>>())?,
        OracleScope::GateLocal => {
            let mut chosen = Vec::new();
            let mut ties = 1u64;
            for node in 0..graph.num_nodes() {
                let domain = graph.in_edges(node);
                if domain.is_empty() {
                    continue;
                }
                let (s, t) = search(domain)?;
                chosen.extend(s);
                ties *= t;
            }
            (chosen, ties)
        }
    };
    Ok(OracleResult { circuit: graph.circuit_from_indices(chosen)?, tie_count, mode, scope })
}

/// Edge names of an oracle result, for reports.
pub fn oracle_names(graph: &ComputationalGraph, result: &OracleResult) -> Vec<String> {
    graph.edge_names(&result.circuit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::{classify_gates, group_gates};
    use crate::intervention::AblationMode;
    use crate::model::task::{make_task, TaskSpec};
    use crate::model::{make_gate_toy, GateNetworkSpec, ModelSpec};

    fn fig2() -> (Model<f64>, RunSet<f64>) {
        let m = Model::from_spec(&ModelSpec::GateNetwork(GateNetworkSpec::fig2())).unwrap();
        let d = make_task(&TaskSpec::GateClean { sources: 4 }, 0).unwrap();
        let runs = RunSet::new(&m, &d, AblationMode::Zero, 0).unwrap();
        (m, runs)
    }

    fn without(m: &Model<f64>, names: &[&str]) -> Circuit {
        let g = m.graph();
        g.complement(&g.circuit_from_names(names).unwrap()).unwrap()
    }

    #[test]
    fn faithfulness_and_completeness_boundaries() {
        let (m, runs) = fig2();
        let g = m.graph();
        let f = faithfulness(&m, &runs, &g.full_circuit(), OutputDistance::Sink).unwrap();
        assert_eq!((f.distance, f.accuracy), (0.0, None));
        let c = completeness(&m, &runs, &g.empty_circuit(), OutputDistance::Sink).unwrap();
        assert_eq!(c.distance_of_removal, 0.0);
        let c = completeness(&m, &runs, &g.full_circuit(), OutputDistance::Sink).unwrap();
        assert_eq!(c.distance_of_removal, 2.0);
        let f = faithfulness(&m, &runs, &without(&m, &["g0.3->g1.1"]), OutputDistance::Sink).unwrap();
        assert_eq!(f.distance, 0.0);
    }

    #[test]
    fn empty_circuit_on_adder_toy() {
        let m: Model<f64> = Model::from_spec(&make_gate_toy(GateKind::Adder).0).unwrap();
        let d = make_task(&TaskSpec::ZeroInput, 0).unwrap();
        let runs = RunSet::new(&m, &d, AblationMode::Zero, 0).unwrap();
        let f = faithfulness(&m, &runs, &m.graph().empty_circuit(), OutputDistance::Sink).unwrap();
        assert!((f.distance - 2.5).abs() < 1e-12);
    }

    #[test]
    fn removing_one_or_input_is_not_complete() {
        let (m, runs) = fig2();
        let g = m.graph();
        let one = g.circuit_from_names(&["g0.2->g1.1"]).unwrap();
        let both = g.circuit_from_names(&["g0.2->g1.1", "g0.3->g1.1"]).unwrap();
        let a = completeness(&m, &runs, &one, OutputDistance::Sink).unwrap().distance_of_removal;
        let b = completeness(&m, &runs, &both, OutputDistance::Sink).unwrap().distance_of_removal;
        assert_eq!((a, b), (0.0, 1.0));
    }

    #[test]
    fn incompleteness_of_the_full_graph_is_zero() {
        let (m, runs) = fig2();
        let full = m.graph().full_circuit();
        let s = incompleteness_sampled(&m, &runs, &full, 10, 2..=5, 0, OutputDistance::Sink).unwrap();
        assert_eq!((s.mean, s.std, s.samples), (0.0, 0.0, 10));
        let tiny = m.graph().circuit_from_names(&["g2.0->output"]).unwrap();
        assert!(incompleteness_sampled(&m, &runs, &tiny, 10, 2..=5, 0, OutputDistance::Sink).is_err());
    }

    #[test]
    fn randomness_rules() {
        let (m, runs) = fig2();
        let cfg = DiscoveryConfig::new(crate::discovery::Algorithm::Greedy, Strategy::Ns, OutputDistance::Sink);
        let err = randomness(&m, &runs, &cfg, 5, &[3, 3]).unwrap_err();
        assert!(err.to_string().contains("seeds must differ"));
        let lin = DiscoveryConfig::new(crate::discovery::Algorithm::Linear, Strategy::Ns, OutputDistance::Sink);
        let r = randomness(&m, &runs, &lin, 5, &run_seeds(0, 4)).unwrap();
        assert_eq!((r.mean_hamming, r.std, r.run_count), (0.0, 0.0, 4));
    }

    #[test]
    fn gate_effects_and_proportions() {
        let (m, runs) = fig2();
        let g = m.graph();
        let labels = classify_gates(&g.full_circuit(), &g.empty_circuit()).unwrap();
        let gates = group_gates(&labels, g).unwrap();
        let fx = gate_effects(&m, &runs, &gates, OutputDistance::Sink).unwrap();
        let b1 = fx.iter().find(|e| e.receiver == NodeId::gate(1, 0)).unwrap();
        assert_eq!((b1.gate_effect, b1.edge_effect, b1.size), (1.0, 0.5, 2));
        let out = fx.iter().find(|e| e.receiver == NodeId::output()).unwrap();
        assert_eq!(out.edge_effect, out.gate_effect);
        assert!(gate_effects(&m, &runs, &[], OutputDistance::Sink).is_err());
        assert_eq!(proportions(&labels), Proportions { and: 11, or: 0, adder: 0 });
    }

    #[test]
    fn oracle_on_fig2() {
        let (m, runs) = fig2();
        let g = m.graph();
        let names = |r: &OracleResult| g.edge_names(&r.circuit);
        let f = minimal_subset_oracle(&m, &runs, OutputDistance::Sink, OracleMode::Faithful, OracleScope::Global)
            .unwrap();
        assert_eq!(f.circuit.len(), 9);
        assert_eq!(f.tie_count, 2);
        let fnames = names(&f);
        for e in ["g0.0->g1.0", "g0.1->g1.0", "g1.0->g2.0", "g1.1->g2.0", "g2.0->output"] {
            assert!(fnames.contains(&e.to_string()), "{e} missing from {fnames:?}");
        }
        let or_kept = ["g0.2->g1.1", "g0.3->g1.1"].iter().filter(|e| fnames.contains(&e.to_string())).count();
        assert_eq!(or_kept, 1);

        let c = minimal_subset_oracle(&m, &runs, OutputDistance::Sink, OracleMode::Complete, OracleScope::GateLocal)
            .unwrap();
        assert_eq!(c.tie_count, 2);
        let cnames = names(&c);
        for e in ["g0.2->g1.1", "g0.3->g1.1", "g1.0->g2.0", "g1.1->g2.0"] {
            assert!(cnames.contains(&e.to_string()), "{e} missing from {cnames:?}");
        }
        let and_kept = ["g0.0->g1.0", "g0.1->g1.0"].iter().filter(|e| cnames.contains(&e.to_string())).count();
        assert_eq!(and_kept, 1);

        let global = minimal_subset_oracle(&m, &runs, OutputDistance::Sink, OracleMode::Complete, OracleScope::Global)
            .unwrap();
        assert_eq!(global.circuit.len(), 1);
    }

    #[test]
    fn oracle_on_a_chain_keeps_every_edge() {
        let spec = GateNetworkSpec { sources: vec![NodeId::gate(0, 0)], gates: vec![], sink: None };
        let m: Model<f64> = Model::from_spec(&ModelSpec::GateNetwork(spec)).unwrap();
        let d = make_task(&TaskSpec::GateClean { sources: 1 }, 0).unwrap();
        let runs = RunSet::new(&m, &d, AblationMode::Zero, 0).unwrap();
        for mode in [OracleMode::Faithful, OracleMode::Complete] {
            let r = minimal_subset_oracle(&m, &runs, OutputDistance::Sink, mode, OracleScope::GateLocal).unwrap();
            assert_eq!(r.circuit.len(), m.graph().num_edges());
        }
    }

    #[test]
    fn oracle_rejects_large_graphs() {
        let spec = ModelSpec::GateNetwork(crate::model::PlantedNetwork::graded(2, 2).build(0).unwrap());
        let m: Model<f64> = Model::from_spec(&spec).unwrap();
        let d = make_task(&TaskSpec::GateClean { sources: 12 }, 0).unwrap();
        let runs = RunSet::new(&m, &d, AblationMode::Zero, 0).unwrap();
        let err = minimal_subset_oracle(&m, &runs, OutputDistance::Sink, OracleMode::Faithful, OracleScope::Global);
        assert!(err.unwrap_err().to_string().contains("too large"));
    }

    #[test]
    fn combinations_are_lexicographic() {
        let mut seen = Vec::new();
        for_each_combination(&[1, 2, 3, 4], 2, &mut |s| {
            seen.push(s.to_vec());
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![vec![1, 2], vec![1, 3], vec![1, 4], vec![2, 3], vec![2, 4], vec![3, 4]]);
        let mut count = 0;
        for_each_combination(&[1, 2, 3], 0, &mut |_| {
            count += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(count, 1);
    }
}
