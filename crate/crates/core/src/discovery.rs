// SPDX-License-Identifier: MIT OR Apache-2.0

//! Circuit discovery: greedy threshold search, linear attribution and
//! hard-concrete edge masks, each under Ns, Dn or their sum.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Circuit, ComputationalGraph, GraphId};
use crate::intervention::{circuit_distance, RunSet, Strategy};
use crate::metric::{OutputDistance, OutputLoss};
use crate::model::engine::{edge_gradients, weighted_loss_and_grad, EdgeModel};
use crate::rng;
use crate::scalar::{sigmoid, Scalar};

/// Discovery algorithm family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Greedy,
    Linear,
    Mask,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Greedy, Algorithm::Linear, Algorithm::Mask];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Greedy => "greedy",
            Self::Linear => "linear",
            Self::Mask => "mask",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Self::Greedy),
            "linear" => Ok(Self::Linear),
            "mask" => Ok(Self::Mask),
            _ => Err(Error::Unknown { kind: "algorithm", name: s.to_string() }),
        }
    }
}

/// How greedy search is sized to an exact edge count.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum GreedySizing {
    /// Bisect the threshold until the circuit has `k` edges.
    #[default]
    Bisect,
    /// Run once at `tau`, then trim or pad by recorded effect.
    Trim { tau: f64 },
}

/// Hard-concrete mask hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskParams {
    pub temperature: f64,
    pub stretch: (f64, f64),
    /// Weight of the expected-L0 penalty.
    pub lambda: f64,
    pub steps: usize,
    pub learning_rate: f64,
    pub init_mean: f64,
    pub init_std: f64,
    /// Pairs sampled per step; 0 uses every pair.
    pub batch_size: usize,
    /// Optimize the summed NsDn objective directly instead of averaging
    /// two independent runs.
    pub joint: bool,
}

impl Default for MaskParams {
    fn default() -> Self {
        Self {
            temperature: 2.0 / 3.0,
            stretch: (-0.1, 1.1),
            lambda: 1.0,
            steps: 300,
            learning_rate: 0.1,
            init_mean: 3.0,
            init_std: 0.5,
            batch_size: 0,
            joint: false,
        }
    }
}

/// One discovery run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryConfig {
    pub algorithm: Algorithm,
    pub strategy: Strategy,
    /// Threshold: greedy keeps edges with effect >= tau, linear keeps
    /// |score| >= tau, mask keeps final mask values >= tau.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Exact edge count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub metric: OutputDistance,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<MaskParams>,
    #[serde(default)]
    pub greedy_sizing: GreedySizing,
}

impl DiscoveryConfig {
    /// Config with default mask parameters when the algorithm needs them.
    pub fn new(algorithm: Algorithm, strategy: Strategy, metric: OutputDistance) -> Self {
        Self {
            algorithm,
            strategy,
            tau: None,
            k: None,
            metric,
            seed: 0,
            mask: (algorithm == Algorithm::Mask).then(MaskParams::default),
            greedy_sizing: GreedySizing::Bisect,
        }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = Some(tau);
        self.k = None;
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = Some(k);
        self.tau = None;
        self
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Check the config against a graph with `num_edges` edges.
    pub fn validate(&self, num_edges: usize) -> Result<()> {
        match (self.tau, self.k) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(Error::Discovery("exactly one of tau and k must be set".into()))
            }
            (Some(t), None) if !(t > 0.0 && t.is_finite()) => {
                return Err(Error::Discovery(format!("tau must be positive, got {t}")))
            }
            (None, Some(k)) if k > num_edges => {
                return Err(Error::Discovery(format!("k exceeds edge count ({k} > {num_edges})")))
            }
            _ => {}
        }
        if (self.algorithm == Algorithm::Mask) != self.mask.is_some() {
            return Err(Error::Discovery("mask parameters are required exactly for the mask algorithm".into()));
        }
        if let GreedySizing::Trim { tau } = self.greedy_sizing {
            if !(tau > 0.0) {
                return Err(Error::Discovery("trim tau must be positive".into()));
            }
        }
        if self.algorithm == Algorithm::Linear && !self.metric.is_differentiable() {
            return Err(Error::Discovery("linear attribution needs a differentiable metric".into()));
        }
        if self.algorithm == Algorithm::Mask && !self.metric.is_differentiable() {
            return Err(Error::Discovery("mask training needs a differentiable metric".into()));
        }
        Ok(())
    }
}

/// One real score per edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeScores {
    graph: GraphId,
    values: Vec<f64>,
}

impl EdgeScores {
    pub fn new(graph: &ComputationalGraph, values: Vec<f64>) -> Result<Self> {
        if values.len() != graph.num_edges() {
            return Err(Error::Shape("one score per edge required".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Discovery("non-finite edge score".into()));
        }
        Ok(Self { graph: graph.id(), values })
    }

    pub fn graph_id(&self) -> GraphId {
        self.graph
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, edge: usize) -> f64 {
        self.values[edge]
    }

    /// `(edge name, score)` in canonical edge order.
    pub fn named(&self, graph: &ComputationalGraph) -> Vec<(String, f64)> {
        graph.edges().iter().map(|e| e.to_string()).zip(self.values.iter().copied()).collect()
    }
}

/// The `k` edges of largest |score|; ties go to the earlier edge.
pub fn select_top_k(graph: &ComputationalGraph, scores: &EdgeScores, k: usize) -> Result<Circuit> {
    if scores.graph != graph.id() {
        return Err(Error::GraphMismatch("scores belong to a different graph".into()));
    }
    if k > graph.num_edges() {
        return Err(Error::Discovery(format!("k exceeds edge count ({k} > {})", graph.num_edges())));
    }
    let mut order: Vec<usize> = (0..scores.values.len()).collect();
    order.sort_by(|&a, &b| {
        scores.values[b].abs().total_cmp(&scores.values[a].abs()).then(a.cmp(&b))
    });
    graph.circuit_from_indices(order.into_iter().take(k))
}

/// Output of one discovery run.
#[derive(Clone, Debug, PartialEq)]
pub struct Discovered {
    pub circuit: Circuit,
    /// Per-edge scores: visit-time effects (greedy), attributions (linear)
    /// or final mask values (mask).
    pub scores: EdgeScores,
}

// ---------------------------------------------------------------------------
// Greedy
// ---------------------------------------------------------------------------

/// One greedy pass with the effect recorded for every visited edge.
#[derive(Clone, Debug)]
pub struct GreedyTrace {
    pub circuit: Circuit,
    /// Increase in the criterion when the edge was tried, at visit time.
    pub deltas: Vec<f64>,
}

fn mean_distances<S: Scalar, M: EdgeModel<S> + ?Sized>(
    model: &M,
    runs: &RunSet<S>,
    circuit: &Circuit,
    parts: &[Strategy],
    metric: OutputDistance,
) -> Result<Vec<f64>> {
    parts.iter().map(|&p| circuit_distance(model, runs, circuit, p, metric)).collect()
}

/// Greedy removal at threshold `tau`.
///
/// Receivers are visited output-first; each receiver's in-edges are tried in
/// an order drawn from `seed`. An edge is dropped when removing it from the
/// current circuit raises the criterion by less than `tau`.
pub fn greedy_trace<S: Scalar, M: EdgeModel<S> + ?Sized>(
    model: &M,
    runs: &RunSet<S>,
    strategy: Strategy,
    metric: OutputDistance,
    tau: f64,
    seed: u64,
) -> Result<GreedyTrace> {
    if !(tau > 0.0) {
        return Err(Error::Discovery(format!("tau must be positive, got {tau}")));
    }
    let g = model.graph();
    let parts = strategy.parts();
    let mut h = g.full_circuit();
    let mut cur = mean_distances(model, runs, &h, parts, metric)?;
    let mut deltas = vec![0.0; g.num_edges()];
    let mut order_rng = rng::seeded(rng::derive_str(seed, "greedy-order"));
    let receivers: Vec<usize> = g.receivers_output_first().collect();
    for r in receivers {
        let mut ins = g.in_edges(r).to_vec();
        ins.shuffle(&mut order_rng);
        for e in ins {
            h.remove(e);
            let new = mean_distances(model, runs, &h, parts, metric)?;
            let delta: f64 = new.iter().zip(&cur).map(|(a, b)| a - b).sum();
            deltas[e] = delta;
            if delta < tau {
                cur = new;
            } else {
                h.insert(e);
            }
        }
    }
    Ok(GreedyTrace { circuit: h, deltas })
}

/// Resize a greedy circuit to `k` edges by dropping its lowest-effect
/// members or adding the highest-effect removed edges.
fn resize(graph: &ComputationalGraph, trace: &GreedyTrace, k: usize) -> Result<Circuit> {
    let mut c = trace.circuit.clone();
    let by_delta = |a: &usize, b: &usize| trace.deltas[*a].total_cmp(&trace.deltas[*b]).then(a.cmp(b));
    if c.len() > k {
        let mut members: Vec<usize> = c.indices().collect();
        members.sort_by(by_delta);
        for e in members.into_iter().take(c.len() - k) {
            c.remove(e);
        }
    } else if c.len() < k {
        let mut removed: Vec<usize> = (0..graph.num_edges()).filter(|&e| !c.contains(e)).collect();
        removed.sort_by(|a, b| trace.deltas[*b].total_cmp(&trace.deltas[*a]).then(a.cmp(b)));
        for e in removed.into_iter().take(k - c.len()) {
            c.insert(e);
        }
    }
    Ok(c)
}

/// Greedy discovery under `cfg`.
pub fn greedy_discover<S: Scalar, M: EdgeModel<S> + ?Sized>(
    model: &M,
    runs: &RunSet<S>,
    cfg: &DiscoveryConfig,
) -> Result<Discovered> {
    let g = model.graph();
    cfg.validate(g.num_edges())?;
    let run = |tau: f64| greedy_trace(model, runs, cfg.strategy, cfg.metric, tau, cfg.seed);
    let done = |t: GreedyTrace, c: Circuit| -> Result<Discovered> {
        Ok(Discovered { circuit: c, scores: EdgeScores::new(g, t.deltas)? })
    };
    let Some(k) = cfg.k else {
        let t = run(cfg.tau.expect("validated"))?;
        let c = t.circuit.clone();
        return done(t, c);
    };
    if let GreedySizing::Trim { tau } = cfg.greedy_sizing {
        let t = run(tau)?;
        let c = resize(g, &t, k)?;
        return done(t, c);
    }
    let mut lo = 1e-12;
    let mut lo_run = run(lo)?;
    if lo_run.circuit.len() <= k {
        let c = resize(g, &lo_run, k)?;
        return done(lo_run, c);
    }
    let mut hi = lo_run.deltas.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-9) * 2.0;
    let mut hi_run = run(hi)?;
    let mut guard = 0;
    while hi_run.circuit.len() > k && guard < 60 {
        lo = hi;
        lo_run = hi_run;
        hi *= 4.0;
        hi_run = run(hi)?;
        guard += 1;
    }
    if hi_run.circuit.len() == k {
        let c = hi_run.circuit.clone();
        return done(hi_run, c);
    }
    if hi_run.circuit.len() > k {
        let c = resize(g, &hi_run, k)?;
        return done(hi_run, c);
    }
    for _ in 0..40 {
        if hi / lo < 1.0 + 1e-9 {
            break;
        }
        let mid = (lo * hi).sqrt();
        let t = run(mid)?;
        match t.circuit.len().cmp(&k) {
            std::cmp::Ordering::Equal => {
                let c = t.circuit.clone();
                return done(t, c);
            }
            std::cmp::Ordering::Greater => {
                lo = mid;
                lo_run = t;
            }
            std::cmp::Ordering::Less => hi = mid,
        }
    }
    let c = resize(g, &lo_run, k)?;
    done(lo_run, c)
}

// ---------------------------------------------------------------------------
// Linear attribution
// ---------------------------------------------------------------------------

/// First-order effect of patching each edge, averaged over pairs.
///
/// Ns scores are `(x~ - x) . dL(x)/dx` at the clean run. Dn scores are
/// `(x~ - x) . dL(x~)/dx~` at the corrupted run. NsDn adds the two.
pub fn linear_scores<S: Scalar, M: EdgeModel<S> + ?Sized>(
    model: &M,
    runs: &RunSet<S>,
    cfg: &DiscoveryConfig,
) -> Result<EdgeScores> {
    let g = model.graph();
    if !cfg.metric.is_differentiable() {
        return Err(Error::Discovery("linear attribution needs a differentiable metric".into()));
    }
    let mut total = vec![0.0f64; g.num_edges()];
    for run in runs.runs() {
        let loss = OutputLoss::attribution_proxy(cfg.metric, run.labels.clean, run.labels.corrupted)?;
        for &part in cfg.strategy.parts() {
            let (at, toward) = run.sides(part);
            let grads = edge_gradients(model, at, &loss, Some(toward))?;
            for (e, t) in total.iter_mut().enumerate() {
                let dot = run.corrupted.edge_value(e)
                    .iter()
                    .zip(run.clean.edge_value(e))
                    .zip(grads.grad(e))
                    .fold(S::zero(), |acc, ((c, x), gr)| acc + (*c - *x) * *gr);
                *t += dot.as_f64();
            }
        }
    }
    let n = runs.len() as f64;
    EdgeScores::new(g, total.into_iter().map(|v| v / n).collect())
}

fn threshold_abs(graph: &ComputationalGraph, scores: &EdgeScores, tau: f64) -> Result<Circuit> {
    graph.circuit_from_indices((0..scores.values.len()).filter(|&e| scores.values[e].abs() >= tau))
}

/// Linear-attribution discovery under `cfg`.
pub fn linear_discover<S: Scalar, M: EdgeModel<S> + ?Sized>(
    model: &M,
    runs: &RunSet<S>,
    cfg: &DiscoveryConfig,
) -> Result<Discovered> {
    let g = model.graph();
    cfg.validate(g.num_edges())?;
    let scores = linear_scores(model, runs, cfg)?;
    let circuit = match cfg.k {
        Some(k) => select_top_k(g, &scores, k)?,
        None => threshold_abs(g, &scores, cfg.tau.expect("validated"))?,
    };
    Ok(Discovered { circuit, scores })
}

// ---------------------------------------------------------------------------
// Hard-concrete masks
// ---------------------------------------------------------------------------

/// Deterministic gate value for a location parameter.
pub fn deterministic_mask(log_alpha: f64, p: &MaskParams) -> f64 {
    let (lo, hi) = p.stretch;
    (sigmoid(log_alpha) * (hi - lo) + lo).clamp(0.0, 1.0)
}

/// Final deterministic masks after optimizing the summed objective of `parts`.
fn optimize_masks<S: Scalar, M: EdgeModel<S> + ?Sized>(
    model: &M,
    runs: &RunSet<S>,
    parts: &[Strategy],
    metric: OutputDistance,
    p: &MaskParams,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = model.graph().num_edges();
    let (lo, hi) = p.stretch;
    let beta = p.temperature;
    if !(beta > 0.0) || !(lo < 0.0 && hi > 1.0) {
        return Err(Error::Discovery("mask stretch must straddle [0, 1] and temperature be positive".into()));
    }
    let mut r = rng::seeded(seed);
    let mut la: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut r);
            p.init_mean + p.init_std * z
        })
        .collect();
    let (mut m1, mut m2) = (vec![0.0; n], vec![0.0; n]);
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8f64);
    let l0_shift = beta * (-lo / hi).ln();
    let losses: Vec<Vec<OutputLoss<S>>> = runs
        .runs()
        .iter()
        .map(|run| {
            parts
                .iter()
                .map(|&part| OutputLoss::distance_to(metric, run.sides(part).0.logits().to_vec(), run.labels))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    for step in 1..=p.steps {
        let mut z = vec![S::zero(); n];
        let mut dz = vec![0.0; n];
        for e in 0..n {
            let u: f64 = r.gen_range(1e-6..1.0 - 1e-6);
            let s = sigmoid(((u / (1.0 - u)).ln() + la[e]) / beta);
            let stretched = s * (hi - lo) + lo;
            z[e] = S::lit(stretched.clamp(0.0, 1.0));
            if stretched > 0.0 && stretched < 1.0 {
                dz[e] = (hi - lo) * s * (1.0 - s) / beta;
            }
        }
        let batch: Vec<usize> = if p.batch_size == 0 || p.batch_size >= runs.len() {
            (0..runs.len()).collect()
        } else {
            (0..p.batch_size).map(|_| r.gen_range(0..runs.len())).collect()
        };
        let mut grad = vec![0.0; n];
        let mut loss = 0.0;
        for &i in &batch {
            let run = &runs.runs()[i];
            for (k, &part) in parts.iter().enumerate() {
                let (base, donor) = run.sides(part);
                let (l, gw) = weighted_loss_and_grad(model, base, donor, &z, &losses[i][k])?;
                loss += l.as_f64();
                for (a, b) in grad.iter_mut().zip(&gw) {
                    *a += b.as_f64();
                }
            }
        }
        let inv = 1.0 / batch.len() as f64;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Discovery(format!(
                "mask optimization diverged at step {step} (loss {loss}, lambda {}, lr {})",
                p.lambda, p.learning_rate
            )));
        }
        let (c1, c2) = (1.0 - b1.powi(step as i32), 1.0 - b2.powi(step as i32));
        for e in 0..n {
            let pe = sigmoid(la[e] - l0_shift);
            let g = grad[e] * inv * dz[e] + p.lambda * pe * (1.0 - pe);
            m1[e] = b1 * m1[e] + (1.0 - b1) * g;
            m2[e] = b2 * m2[e] + (1.0 - b2) * g * g;
            la[e] -= p.learning_rate * (m1[e] / c1) / ((m2[e] / c2).sqrt() + eps);
        }
    }
    Ok(la.iter().map(|&a| deterministic_mask(a, p)).collect())
}

/// Final masks for `cfg.strategy`; NsDn averages independent Ns and Dn runs
/// unless joint optimization is requested.
pub fn mask_scores<S: Scalar, M: EdgeModel<S> + ?Sized>(
    model: &M,
    runs: &RunSet<S>,
    cfg: &DiscoveryConfig,
) -> Result<EdgeScores> {
    let p = cfg.mask.as_ref().ok_or_else(|| Error::Discovery("mask parameters missing".into()))?;
    let g = model.graph();
    let seed_for = |s: Strategy| rng::derive_str(cfg.seed, &format!("mask-{s}"));
    let masks = match cfg.strategy {
        Strategy::NsDn if !p.joint => {
            let ns = optimize_masks(model, runs, &[Strategy::Ns], cfg.metric, p, seed_for(Strategy::Ns))?;
            let dn = optimize_masks(model, runs, &[Strategy::Dn], cfg.metric, p, seed_for(Strategy::Dn))?;
            average_masks(&ns, &dn)
        }
        s => optimize_masks(model, runs, s.parts(), cfg.metric, p, seed_for(s))?,
    };
    EdgeScores::new(g, masks)
}

/// Edge-wise mean of two mask vectors.
pub fn average_masks(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()
}

/// Mask discovery under `cfg`.
pub fn mask_discover<S: Scalar, M: EdgeModel<S> + ?Sized>(
    model: &M,
    runs: &RunSet<S>,
    cfg: &DiscoveryConfig,
) -> Result<Discovered> {
    let g = model.graph();
    cfg.validate(g.num_edges())?;
    let scores = mask_scores(model, runs, cfg)?;
    let circuit = match cfg.k {
        Some(k) => select_top_k(g, &scores, k)?,
        None => threshold_abs(g, &scores, cfg.tau.expect("validated"))?,
    };
    Ok(Discovered { circuit, scores })
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

/// Run the algorithm named in `cfg`.
pub fn discover<S: Scalar, M: EdgeModel<S> + ?Sized>(
    model: &M,
    runs: &RunSet<S>,
    cfg: &DiscoveryConfig,
) -> Result<Discovered> {
    match cfg.algorithm {
        Algorithm::Greedy => greedy_discover(model, runs, cfg),
        Algorithm::Linear => linear_discover(model, runs, cfg),
        Algorithm::Mask => mask_discover(model, runs, cfg),
    }
}

/// Ns and Dn circuits of exactly `k` edges each.
pub fn discover_pair<S: Scalar, M: EdgeModel<S> + ?Sized>(
    model: &M,
    runs: &RunSet<S>,
    base: &DiscoveryConfig,
    k: usize,
) -> Result<(Circuit, Circuit)> {
    let ns = discover(model, runs, &base.clone().with_strategy(Strategy::Ns).with_k(k))?;
    let dn = discover(model, runs, &base.clone().with_strategy(Strategy::Dn).with_k(k))?;
    Ok((ns.circuit, dn.circuit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::EdgeId;
    use crate::intervention::AblationMode;
    use crate::model::task::{make_task, TaskSpec};
    use crate::model::{make_gate_toy, GateKind, GateNetworkSpec, Model, ModelSpec};

    fn toy(kind: GateKind) -> (Model<f64>, RunSet<f64>) {
        let m = Model::from_spec(&make_gate_toy(kind).0).unwrap();
        let d = make_task(&TaskSpec::ZeroInput, 0).unwrap();
        let runs = RunSet::new(&m, &d, AblationMode::Zero, 0).unwrap();
        (m, runs)
    }

    fn head_edges(m: &Model<f64>, c: &Circuit) -> usize {
        ["a0.0->m0", "a0.1->m0"]
            .iter()
            .filter(|s| c.contains(m.graph().require_edge(&s.parse::<EdgeId>().unwrap()).unwrap()))
            .count()
    }

    #[test]
    fn top_k_by_magnitude() {
        let (m, _) = toy(GateKind::And);
        let g = m.graph();
        let s = EdgeScores::new(g, vec![0.9, -0.8, 0.1, 0.0, 0.0]).unwrap();
        assert_eq!(select_top_k(g, &s, 2).unwrap().indices().collect::<Vec<_>>(), vec![0, 1]);
        assert!(select_top_k(g, &s, 0).unwrap().is_empty());
        assert_eq!(select_top_k(g, &s, 5).unwrap().len(), 5);
        assert!(select_top_k(g, &s, 6).is_err());
    }

    #[test]
    fn config_validation() {
        let base = DiscoveryConfig::new(Algorithm::Greedy, Strategy::Ns, OutputDistance::Sink);
        assert!(base.validate(5).is_err());
        assert!(base.clone().with_tau(0.0).validate(5).is_err());
        assert!(base.clone().with_k(6).validate(5).is_err());
        assert!(base.clone().with_k(5).validate(5).is_ok());
        let mut m = DiscoveryConfig::new(Algorithm::Mask, Strategy::Ns, OutputDistance::Sink).with_k(1);
        m.mask = None;
        assert!(m.validate(5).is_err());
        let lin = DiscoveryConfig::new(Algorithm::Linear, Strategy::Ns, OutputDistance::Accuracy).with_k(1);
        assert!(lin.validate(5).is_err());
    }

    #[test]
    fn greedy_toys() {
        let cfg = |s| DiscoveryConfig::new(Algorithm::Greedy, s, OutputDistance::Sink).with_tau(0.1);
        let (m, runs) = toy(GateKind::Or);
        assert_eq!(head_edges(&m, &greedy_discover(&m, &runs, &cfg(Strategy::Ns)).unwrap().circuit), 1);
        let (m, runs) = toy(GateKind::And);
        assert_eq!(head_edges(&m, &greedy_discover(&m, &runs, &cfg(Strategy::Ns)).unwrap().circuit), 2);
        assert_eq!(head_edges(&m, &greedy_discover(&m, &runs, &cfg(Strategy::Dn)).unwrap().circuit), 1);
    }

    #[test]
    fn linear_toys() {
        let cfg = |s| DiscoveryConfig::new(Algorithm::Linear, s, OutputDistance::Sink).with_tau(0.1);
        let (m, runs) = toy(GateKind::Or);
        let s = linear_scores(&m, &runs, &cfg(Strategy::Ns)).unwrap();
        assert_eq!((s.get(2), s.get(3)), (0.0, 0.0));
        let (m, runs) = toy(GateKind::Adder);
        let s = linear_scores(&m, &runs, &cfg(Strategy::Ns)).unwrap();
        assert!(s.get(2).abs() >= 1.0 && s.get(3).abs() >= 1.0);
        let (m, runs) = toy(GateKind::And);
        let s = linear_scores(&m, &runs, &cfg(Strategy::Dn)).unwrap();
        assert_eq!((s.get(2), s.get(3)), (0.0, 0.0));
    }

    #[test]
    fn mask_toys() {
        let cfg = |s| DiscoveryConfig::new(Algorithm::Mask, s, OutputDistance::Sink).with_tau(0.5);
        let (m, runs) = toy(GateKind::And);
        let d = mask_discover(&m, &runs, &cfg(Strategy::Ns)).unwrap();
        assert_eq!(head_edges(&m, &d.circuit), 2);
        let (m, runs) = toy(GateKind::Or);
        let d = mask_discover(&m, &runs, &cfg(Strategy::Ns)).unwrap();
        assert_eq!(head_edges(&m, &d.circuit), 1, "{:?}", d.scores);
    }

    #[test]
    fn mask_averaging() {
        assert_eq!(average_masks(&[1.0, 0.2], &[0.0, 0.2]), vec![0.5, 0.2]);
    }

    #[test]
    fn greedy_fig2_pair() {
        let m: Model<f64> = Model::from_spec(&ModelSpec::GateNetwork(GateNetworkSpec::fig2())).unwrap();
        let d = make_task(&TaskSpec::GateClean { sources: 4 }, 0).unwrap();
        let runs = RunSet::new(&m, &d, AblationMode::Zero, 0).unwrap();
        let base = DiscoveryConfig::new(Algorithm::Greedy, Strategy::Ns, OutputDistance::Sink);
        let count = |c: &Circuit, names: &[&str]| {
            names.iter().filter(|s| c.contains(m.graph().require_edge(&s.parse().unwrap()).unwrap())).count()
        };
        let and = ["g0.0->g1.0", "g0.1->g1.0"];
        let or = ["g0.2->g1.1", "g0.3->g1.1"];
        let (ns, dn) = discover_pair(&m, &runs, &base, 9).unwrap();
        assert_eq!((count(&ns, &and), count(&ns, &or)), (2, 1));
        assert_eq!((count(&dn, &and), count(&dn, &or)), (1, 2));
        let (ns, dn) = discover_pair(&m, &runs, &base, 5).unwrap();
        assert_eq!((ns.len(), dn.len()), (5, 5));
        let (e_ns, e_dn) = discover_pair(&m, &runs, &base, 0).unwrap();
        assert!(e_ns.is_empty() && e_dn.is_empty());
    }
}
