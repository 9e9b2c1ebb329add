// SPDX-License-Identifier: MIT OR Apache-2.0

//! Gate labels from an aligned noising/denoising circuit pair.
//!
//! Edges found only by noising are AND edges, edges found only by denoising
//! are OR edges, and edges found by both are ADDER edges.

use std::ops::RangeInclusive;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::discovery::{discover, DiscoveryConfig};
use crate::error::{Error, Result};
use crate::graph::{Circuit, ComputationalGraph, EdgeId, NodeId};
use crate::intervention::{circuit_pair_distance, RunSet, Strategy};
use crate::metric::OutputDistance;
use crate::model::{EdgeModel, GateKind};
use crate::rng;
use crate::scalar::Scalar;

/// Disjoint AND, OR and ADDER edge sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GateLabeling {
    and: Circuit,
    or: Circuit,
    adder: Circuit,
}

/// Serialized form of a [`GateLabeling`]: sorted edge names per label.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelNames {
    pub and: Vec<String>,
    pub or: Vec<String>,
    pub adder: Vec<String>,
}

impl GateLabeling {
    pub fn and(&self) -> &Circuit {
        &self.and
    }

    pub fn or(&self) -> &Circuit {
        &self.or
    }

    pub fn adder(&self) -> &Circuit {
        &self.adder
    }

    pub fn get(&self, label: GateKind) -> &Circuit {
        match label {
            GateKind::And => &self.and,
            GateKind::Or => &self.or,
            GateKind::Adder => &self.adder,
        }
    }

    /// Every labeled edge.
    pub fn union(&self) -> Circuit {
        let u = self.and.union(&self.or).expect("labels share a graph");
        u.union(&self.adder).expect("labels share a graph")
    }

    pub fn label_of(&self, edge: usize) -> Option<GateKind> {
        GateKind::ALL.into_iter().find(|&k| self.get(k).contains(edge))
    }

    pub fn len(&self) -> usize {
        self.and.len() + self.or.len() + self.adder.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn names(&self, graph: &ComputationalGraph) -> Result<LabelNames> {
        let sorted = |c: &Circuit| -> Result<Vec<String>> {
            graph.check(c)?;
            let mut v = graph.edge_names(c);
            v.sort();
            Ok(v)
        };
        Ok(LabelNames { and: sorted(&self.and)?, or: sorted(&self.or)?, adder: sorted(&self.adder)? })
    }

    pub fn from_names(graph: &ComputationalGraph, names: &LabelNames) -> Result<Self> {
        let and = graph.circuit_from_names(&names.and)?;
        let or = graph.circuit_from_names(&names.or)?;
        let adder = graph.circuit_from_names(&names.adder)?;
        let overlap = and.intersection(&or)?.len() + and.intersection(&adder)?.len() + or.intersection(&adder)?.len();
        if overlap > 0 {
            return Err(Error::Evaluation("label sets overlap".into()));
        }
        Ok(Self { and, or, adder })
    }
}

/// Label the edges of an aligned circuit pair.
pub fn classify_gates(c_ns: &Circuit, c_dn: &Circuit) -> Result<GateLabeling> {
    let and = c_ns.difference(c_dn)?;
    let or = c_dn.difference(c_ns)?;
    let adder = c_ns.intersection(c_dn)?;
    if c_ns.len() != c_dn.len() {
        log::debug!("classifying circuits of unequal size ({} Ns vs {} Dn edges)", c_ns.len(), c_dn.len());
    }
    Ok(GateLabeling { and, or, adder })
}

/// Edges sharing a receiver and a label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gate {
    pub receiver: NodeId,
    pub label: GateKind,
    pub edges: Vec<EdgeId>,
}

impl Gate {
    pub fn circuit(&self, graph: &ComputationalGraph) -> Result<Circuit> {
        graph.circuit_from_edges(&self.edges)
    }
}

/// Group labeled edges by `(receiver, label)`, receivers in topological
/// order.
pub fn group_gates(labeling: &GateLabeling, graph: &ComputationalGraph) -> Result<Vec<Gate>> {
    for k in GateKind::ALL {
        graph.check(labeling.get(k))?;
    }
    let mut gates = Vec::new();
    for node in 0..graph.num_nodes() {
        for label in GateKind::ALL {
            let set = labeling.get(label);
            let edges: Vec<EdgeId> =
                graph.in_edges(node).iter().filter(|&&e| set.contains(e)).map(|&e| graph.edges()[e]).collect();
            if !edges.is_empty() {
                gates.push(Gate { receiver: graph.nodes()[node], label, edges });
            }
        }
    }
    Ok(gates)
}

// ---------------------------------------------------------------------------
// Misalignment
// ---------------------------------------------------------------------------

/// How the expectations in the misalignment scores are estimated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Number of sampled sub-circuits `K`.
    pub samples: usize,
    pub min_size: usize,
    pub max_size: usize,
    /// Pair combinations are enumerated when there are at most this many,
    /// and sampled this many times otherwise.
    pub exhaustive_limit: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { samples: 30, min_size: 2, max_size: 5, exhaustive_limit: 200, seed: 0 }
    }
}

impl SamplerConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Evaluation("sampler needs at least one sample".into()));
        }
        if self.min_size > self.max_size || self.exhaustive_limit == 0 {
            return Err(Error::Evaluation("invalid sampler size range".into()));
        }
        Ok(())
    }
}

pub const DEFAULT_M: f64 = 1.5;

/// Misalignment of one `(k_ns, k_dn)` alignment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MisalignmentReport {
    pub k_ns: usize,
    pub k_dn: usize,
    pub and_score: f64,
    pub or_score: f64,
    pub m: f64,
    pub sample_count: usize,
    /// `k_ns / k_dn`.
    pub ratio: f64,
    pub and_pairs: usize,
    pub or_pairs: usize,
}

impl MisalignmentReport {
    pub fn total(&self) -> f64 {
        self.and_score + self.or_score
    }
}

/// Ordered same-receiver pairs inside `c`.
fn ordered_pairs(graph: &ComputationalGraph, c: &Circuit) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for node in 0..graph.num_nodes() {
        let ins: Vec<usize> = graph.in_edges(node).iter().copied().filter(|&e| c.contains(e)).collect();
        for &i in &ins {
            for &j in &ins {
                if i != j {
                    out.push((i, j));
                }
            }
        }
    }
    out
}

/// Number of unordered same-receiver pairs inside `c`.
pub fn same_receiver_pairs(graph: &ComputationalGraph, c: &Circuit) -> usize {
    ordered_pairs(graph, c).len() / 2
}

fn unordered(pairs: &[(usize, usize)]) -> Vec<(usize, usize)> {
    pairs.iter().copied().filter(|(i, j)| i < j).collect()
}

/// Edges of `c` that have a same-receiver partner in `c`.
fn paired_edges(pairs: &[(usize, usize)]) -> Vec<usize> {
    let mut v: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Mean of `f` over `a × b`, enumerated or sampled per the sampler.
fn product_mean<A: Copy, B: Copy>(
    a: &[A],
    b: &[B],
    limit: usize,
    r: &mut rng::Rng,
    mut f: impl FnMut(A, B) -> Result<f64>,
) -> Result<f64> {
    let total = a.len() * b.len();
    let mut sum = 0.0;
    if total <= limit {
        for &x in a {
            for &y in b {
                sum += f(x, y)?;
            }
        }
        Ok(sum / total as f64)
    } else {
        for _ in 0..limit {
            let x = a[r.gen_range(0..a.len())];
            let y = b[r.gen_range(0..b.len())];
            sum += f(x, y)?;
        }
        Ok(sum / limit as f64)
    }
}

fn without(full: &Circuit, edges: &[usize]) -> Circuit {
    let mut c = full.clone();
    for &e in edges {
        c.remove(e);
    }
    c
}

/// Sample `K ⊂ c` leaving at least one same-receiver pair in `c \ K`.
fn sample_k(graph: &ComputationalGraph, c: &Circuit, sampler: &SamplerConfig, r: &mut rng::Rng) -> Result<Circuit> {
    let n = c.len();
    let hi = sampler.max_size.min(n.saturating_sub(2));
    let lo = sampler.min_size.min(hi);
    for _ in 0..100 {
        let k = c.random_subcircuit(lo..=hi, r)?;
        if same_receiver_pairs(graph, &c.difference(&k)?) > 0 {
            return Ok(k);
        }
    }
    Err(Error::Evaluation("no sub-circuit leaves a same-receiver pair".into()))
}

fn require_pairs(graph: &ComputationalGraph, c: &Circuit) -> Result<Vec<(usize, usize)>> {
    graph.check(c)?;
    let pairs = ordered_pairs(graph, c);
    if pairs.is_empty() {
        return Err(Error::Evaluation("no same-receiver pair available".into()));
    }
    Ok(pairs)
}

/// AND misalignment: how much removing a second same-receiver edge still
/// moves the output, against the same quantity after ablating a random
/// sub-circuit `K` of `c_and`. Contexts are the full graph minus the named
/// edges, evaluated on the noising side.
pub fn misalignment_and<S: Scalar, M: EdgeModel<S> + ?Sized>(
    model: &M,
    runs: &RunSet<S>,
    c_and: &Circuit,
    sampler: &SamplerConfig,
    metric: OutputDistance,
) -> Result<f64> {
    sampler.validate()?;
    let graph = model.graph();
    let pairs = require_pairs(graph, c_and)?;
    let full = graph.full_circuit();
    let mut r = rng::seeded(rng::derive_str(sampler.seed, "misalignment-and"));
    let d = |base: &Circuit, i: usize, j: usize| {
        circuit_pair_distance(model, runs, &without(base, &[i]), &without(base, &[i, j]), Strategy::Ns, metric)
    };
    let unit = [()];
    let first = product_mean(&pairs, &unit, sampler.exhaustive_limit, &mut r, |(i, j), _| d(&full, i, j))?;
    let mut second = 0.0;
    for _ in 0..sampler.samples {
        let k = sample_k(graph, c_and, sampler, &mut r)?;
        let star = c_and.difference(&k)?;
        let base = graph.complement(&k)?;
        let star_pairs = ordered_pairs(graph, &star);
        second += product_mean(&star_pairs, &unit, sampler.exhaustive_limit, &mut r, |(i, j), _| d(&base, i, j))?;
    }
    Ok(first - second / sampler.samples as f64)
}

/// OR misalignment, offset by `m`. Same contexts as [`misalignment_and`],
/// but each term compares the circuit with and without `K` directly.
pub fn misalignment_or<S: Scalar, M: EdgeModel<S> + ?Sized>(
    model: &M,
    runs: &RunSet<S>,
    c_or: &Circuit,
    sampler: &SamplerConfig,
    metric: OutputDistance,
    m: f64,
) -> Result<f64> {
    sampler.validate()?;
    let graph = model.graph();
    let pairs = require_pairs(graph, c_or)?;
    let singles = paired_edges(&pairs);
    let pairs = unordered(&pairs);
    let full = graph.full_circuit();
    let mut r = rng::seeded(rng::derive_str(sampler.seed, "misalignment-or"));
    let (mut first, mut second) = (0.0, 0.0);
    for _ in 0..sampler.samples {
        let k = sample_k(graph, c_or, sampler, &mut r)?;
        let star = c_or.difference(&k)?;
        let base = graph.complement(&k)?;
        let star_all = ordered_pairs(graph, &star);
        let star_singles = paired_edges(&star_all);
        let star_pairs = unordered(&star_all);
        first += product_mean(&singles, &star_singles, sampler.exhaustive_limit, &mut r, |i, s| {
            circuit_pair_distance(model, runs, &without(&full, &[i]), &without(&base, &[s]), Strategy::Ns, metric)
        })?;
        second += product_mean(&pairs, &star_pairs, sampler.exhaustive_limit, &mut r, |(i, j), (a, b)| {
            circuit_pair_distance(
                model,
                runs,
                &without(&full, &[i, j]),
                &without(&base, &[a, b]),
                Strategy::Ns,
                metric,
            )
        })?;
    }
    Ok((first - second) / sampler.samples as f64 + m)
}

/// Fix the noising circuit at `k_ns` edges and sweep the denoising size.
///
/// A label set without any same-receiver pair shows no misalignment and
/// scores its baseline (0 for AND, `m` for OR).
pub fn ratio_sweep<S: Scalar, M: EdgeModel<S> + ?Sized>(
    model: &M,
    runs: &RunSet<S>,
    base: &DiscoveryConfig,
    k_ns: usize,
    k_dn: RangeInclusive<usize>,
    sampler: &SamplerConfig,
    m: f64,
) -> Result<Vec<MisalignmentReport>> {
    let n = model.graph().num_edges();
    if k_ns == 0 || k_ns > n || k_dn.is_empty() || *k_dn.start() == 0 || *k_dn.end() > n {
        return Err(Error::Size(format!("sweep range must lie within 1..={n} edges")));
    }
    let c_ns = discover(model, runs, &base.clone().with_strategy(Strategy::Ns).with_k(k_ns))?.circuit;
    let graph = model.graph();
    let mut out = Vec::new();
    for kd in k_dn {
        let c_dn = discover(model, runs, &base.clone().with_strategy(Strategy::Dn).with_k(kd))?.circuit;
        let labels = classify_gates(&c_ns, &c_dn)?;
        let and_pairs = same_receiver_pairs(graph, labels.and());
        let or_pairs = same_receiver_pairs(graph, labels.or());
        let cell = sampler.clone().with_seed(rng::derive(sampler.seed, kd as u64));
        let and_score =
            if and_pairs == 0 { 0.0 } else { misalignment_and(model, runs, labels.and(), &cell, base.metric)? };
        let or_score =
            if or_pairs == 0 { m } else { misalignment_or(model, runs, labels.or(), &cell, base.metric, m)? };
        out.push(MisalignmentReport {
            k_ns,
            k_dn: kd,
            and_score,
            or_score,
            m,
            sample_count: sampler.samples,
            ratio: k_ns as f64 / kd as f64,
            and_pairs,
            or_pairs,
        });
    }
    Ok(out)
}

/// The sweep point with the smallest summed score; ties go to the ratio
/// closest to 1.
pub fn best_alignment(reports: &[MisalignmentReport]) -> Option<&MisalignmentReport> {
    reports.iter().min_by(|a, b| {
        a.total().total_cmp(&b.total()).then((a.ratio - 1.0).abs().total_cmp(&(b.ratio - 1.0).abs()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intervention::AblationMode;
    use crate::model::task::{make_task, TaskSpec};
    use crate::model::{GateNetworkSpec, Model, ModelSpec};

    fn fig2() -> (Model<f64>, RunSet<f64>) {
        let m = Model::from_spec(&ModelSpec::GateNetwork(GateNetworkSpec::fig2())).unwrap();
        let d = make_task(&TaskSpec::GateClean { sources: 4 }, 0).unwrap();
        let runs = RunSet::new(&m, &d, AblationMode::Zero, 0).unwrap();
        (m, runs)
    }

    fn c(m: &Model<f64>, names: &[&str]) -> Circuit {
        m.graph().circuit_from_names(names).unwrap()
    }

    #[test]
    fn set_operations() {
        let (m, _) = fig2();
        let (a, b, cc, d) = ("g0.0->g1.0", "g0.1->g1.0", "g1.0->g2.0", "g1.1->g2.0");
        let l = classify_gates(&c(&m, &[a, b, cc]), &c(&m, &[b, cc, d])).unwrap();
        let names = l.names(m.graph()).unwrap();
        assert_eq!(names.and, vec![a]);
        assert_eq!(names.or, vec![d]);
        assert_eq!(names.adder, vec![b, cc]);
        assert_eq!(l.label_of(m.graph().require_edge(&a.parse().unwrap()).unwrap()), Some(GateKind::And));
        let same = classify_gates(&c(&m, &[a, b]), &c(&m, &[a, b])).unwrap();
        assert_eq!((same.and().len(), same.or().len(), same.adder().len()), (0, 0, 2));
        assert_eq!(GateLabeling::from_names(m.graph(), &names).unwrap(), l);
    }

    #[test]
    fn grouping_by_receiver_and_label() {
        let (m, _) = fig2();
        let l = classify_gates(
            &c(&m, &["g0.0->g1.0", "g0.1->g1.0", "g1.0->g2.0"]),
            &c(&m, &["g0.1->g1.0", "g1.0->g2.0", "g1.1->g2.0"]),
        )
        .unwrap();
        let gates = group_gates(&l, m.graph()).unwrap();
        assert_eq!(gates.len(), 4);
        assert_eq!(gates[0].receiver, NodeId::gate(1, 0));
        assert_eq!((gates[0].label, gates[0].edges.len()), (GateKind::And, 1));
        assert_eq!((gates[1].label, gates[1].edges.len()), (GateKind::Adder, 1));
        assert_eq!(gates[2].receiver, NodeId::gate(2, 0));
        assert_eq!((gates[2].label, gates[3].label), (GateKind::Or, GateKind::Adder));
        let both = classify_gates(&c(&m, &["g0.0->g1.0", "g0.1->g1.0"]), &c(&m, &[])).unwrap();
        let gates = group_gates(&both, m.graph()).unwrap();
        assert_eq!(gates.len(), 1);
        assert_eq!(gates[0].edges.len(), 2);
    }

    #[test]
    fn misalignment_needs_a_pair() {
        let (m, runs) = fig2();
        let s = SamplerConfig::default();
        let single = c(&m, &["g0.0->g1.0"]);
        let err = misalignment_and(&m, &runs, &single, &s, OutputDistance::Sink).unwrap_err();
        assert!(err.to_string().contains("no same-receiver pair"));
        assert!(misalignment_or(&m, &runs, &single, &s, OutputDistance::Sink, 1.5).is_err());
    }

    #[test]
    fn or_offset_is_additive() {
        let (m, runs) = fig2();
        let s = SamplerConfig::default();
        let or = c(&m, &["g0.2->g1.1", "g0.3->g1.1", "g1.0->g2.0", "g1.1->g2.0"]);
        let a = misalignment_or(&m, &runs, &or, &s, OutputDistance::Sink, 1.5).unwrap();
        let b = misalignment_or(&m, &runs, &or, &s, OutputDistance::Sink, 0.0).unwrap();
        assert!((a - b - 1.5).abs() < 1e-12);
    }
}

