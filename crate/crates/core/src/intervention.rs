// SPDX-License-Identifier: MIT OR Apache-2.0

//! Ablation modes, paired clean/corrupted runs and circuit distances.
//!
//! A noising (Ns) run starts from the clean input: circuit edges keep clean
//! values, every other edge takes its corrupted value, and the output is
//! compared with the clean full-graph output. A denoising (Dn) run is the
//! mirror image, starting from the corrupted input and comparing against the
//! corrupted full-graph output.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Circuit;
use crate::metric::{distance, LabelPair, OutputDistance};
use crate::model::engine::{forward, forward_patched, ActivationCache, EdgeModel};
use crate::model::{Model, TaskDataset, TaskPair};
use crate::rng;
use crate::scalar::{argmax, Scalar};

/// Intervention strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Ns,
    Dn,
    NsDn,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Ns, Strategy::Dn, Strategy::NsDn];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Ns => "ns",
            Self::Dn => "dn",
            Self::NsDn => "nsdn",
        }
    }

    /// The single strategies whose criteria are summed.
    pub fn parts(&self) -> &'static [Strategy] {
        match self {
            Self::Ns => &[Strategy::Ns],
            Self::Dn => &[Strategy::Dn],
            Self::NsDn => &[Strategy::Ns, Strategy::Dn],
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('+', "").as_str() {
            "ns" => Ok(Self::Ns),
            "dn" => Ok(Self::Dn),
            "nsdn" => Ok(Self::NsDn),
            _ => Err(Error::Unknown { kind: "strategy", name: s.to_string() }),
        }
    }
}

/// How corrupted activations are produced.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AblationMode {
    /// Every edge value is zero.
    Zero,
    /// Every edge value is drawn from `N(mean, std)`.
    Noise { mean: f64, std: f64 },
    /// Forward pass on the corrupted input.
    Interchange,
}

impl AblationMode {
    /// Interchange for trained transformers, zero ablation otherwise.
    pub fn default_for<S: Scalar>(model: &Model<S>) -> Self {
        match model {
            Model::Transformer(_) => Self::Interchange,
            Model::Scalar(_) => Self::Zero,
        }
    }

    fn validate(&self) -> Result<()> {
        if let Self::Noise { mean, std } = self {
            if !(*std >= 0.0 && std.is_finite() && mean.is_finite()) {
                return Err(Error::Spec("noise ablation needs finite mean and std >= 0".into()));
            }
        }
        Ok(())
    }
}

fn corrupted_from_clean<S: Scalar, M: EdgeModel<S> + ?Sized>(
    model: &M,
    clean: &ActivationCache<S>,
    pair: &TaskPair,
    mode: AblationMode,
    seed: u64,
) -> Result<ActivationCache<S>> {
    mode.validate()?;
    match mode {
        AblationMode::Zero => {
            let vals = clean.edge_values().iter().map(|v| vec![S::zero(); v.len()]).collect();
            ActivationCache::from_edge_values(model, vals)
        }
        AblationMode::Noise { mean, std } => {
            let vals = clean
                .edge_values()
                .iter()
                .enumerate()
                .map(|(e, v)| {
                    if std == 0.0 {
                        return vec![S::lit(mean); v.len()];
                    }
                    let n = Normal::new(mean, std).expect("validated");
                    let mut r = rng::seeded(rng::derive(seed, e as u64));
                    (0..v.len()).map(|_| S::lit(n.sample(&mut r))).collect()
                })
                .collect();
            ActivationCache::from_edge_values(model, vals)
        }
        AblationMode::Interchange => {
            let input = pair
                .corrupted
                .as_ref()
                .ok_or_else(|| Error::Task("interchange ablation needs a corrupted input".into()))?;
            forward(model, input)
        }
    }
}

/// Corrupted-side cache for `pair`. `seed` drives noise sampling.
pub fn corrupted_cache<S: Scalar, M: EdgeModel<S> + ?Sized>(
    model: &M,
    pair: &TaskPair,
    mode: AblationMode,
    seed: u64,
) -> Result<ActivationCache<S>> {
    let clean = forward(model, &pair.clean)?;
    corrupted_from_clean(model, &clean, pair, mode, seed)
}

/// Clean and corrupted caches for one dataset pair.
#[derive(Clone, Debug)]
pub struct PairRun<S> {
    pub clean: ActivationCache<S>,
    pub corrupted: ActivationCache<S>,
    pub labels: LabelPair,
}

impl<S: Scalar> PairRun<S> {
    /// `(base, donor)` for a single strategy.
    pub fn sides(&self, strategy: Strategy) -> (&ActivationCache<S>, &ActivationCache<S>) {
        match strategy {
            Strategy::Ns => (&self.clean, &self.corrupted),
            Strategy::Dn => (&self.corrupted, &self.clean),
            Strategy::NsDn => panic!("NsDn has no single side; iterate over parts()"),
        }
    }

    /// Label the strategy's reference run should predict.
    pub fn target_label(&self, strategy: Strategy) -> usize {
        match strategy {
            Strategy::Dn => self.labels.corrupted,
            _ => self.labels.clean,
        }
    }

    /// Output when `retained` keeps base-side values.
    pub fn patched<M: EdgeModel<S> + ?Sized>(&self, model: &M, retained: &Circuit, strategy: Strategy) -> Result<Vec<S>> {
        let (base, donor) = self.sides(strategy);
        forward_patched(model, base, donor, retained)
    }

    /// Distance between the full-graph reference and the patched output.
    pub fn distance<M: EdgeModel<S> + ?Sized>(
        &self,
        model: &M,
        retained: &Circuit,
        strategy: Strategy,
        metric: OutputDistance,
    ) -> Result<S> {
        let mut total = S::zero();
        for &part in strategy.parts() {
            let (base, _) = self.sides(part);
            let patched = self.patched(model, retained, part)?;
            total += distance(metric, base.logits(), &patched, self.labels)?;
        }
        Ok(total)
    }
}

/// Cached runs for every pair of a dataset.
#[derive(Clone, Debug)]
pub struct RunSet<S> {
    runs: Vec<PairRun<S>>,
    mode: AblationMode,
}

impl<S: Scalar> RunSet<S> {
    /// Forward every pair once. Noise seeds derive from `(seed, pair index)`.
    pub fn new<M: EdgeModel<S> + ?Sized>(model: &M, dataset: &TaskDataset, mode: AblationMode, seed: u64) -> Result<Self> {
        let noise_root = rng::derive_str(seed, "noise");
        let runs = dataset
            .pairs()
            .iter()
            .enumerate()
            .map(|(i, pair)| {
                let clean = forward(model, &pair.clean)?;
                let corrupted = corrupted_from_clean(model, &clean, pair, mode, rng::derive(noise_root, i as u64))?;
                Ok(PairRun {
                    clean,
                    corrupted,
                    labels: LabelPair { clean: pair.clean_label, corrupted: pair.corrupted_label },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if runs.is_empty() {
            return Err(Error::Evaluation("empty dataset".into()));
        }
        Ok(Self { runs, mode })
    }

    pub fn runs(&self) -> &[PairRun<S>] {
        &self.runs
    }

    pub fn len(&self) -> usize {
        self.runs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn mode(&self) -> AblationMode {
        self.mode
    }

    /// Subset of the runs, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let runs: Vec<PairRun<S>> = indices
            .iter()
            .map(|&i| self.runs.get(i).cloned().ok_or_else(|| Error::Evaluation(format!("no pair {i}"))))
            .collect::<Result<_>>()?;
        if runs.is_empty() {
            return Err(Error::Evaluation("empty dataset".into()));
        }
        Ok(Self { runs, mode: self.mode })
    }
}

/// Per-pair distances for one circuit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyRun {
    pub strategy: Strategy,
    pub distances: Vec<f64>,
}

impl StrategyRun {
    pub fn mean(&self) -> f64 {
        self.distances.iter().sum::<f64>() / self.distances.len() as f64
    }
}

/// Distances of `circuit` on every pair.
pub fn strategy_run<S: Scalar, M: EdgeModel<S> + ?Sized>(
    model: &M,
    runs: &RunSet<S>,
    circuit: &Circuit,
    strategy: Strategy,
    metric: OutputDistance,
) -> Result<StrategyRun> {
    let distances = runs
        .runs
        .iter()
        .map(|r| r.distance(model, circuit, strategy, metric).map(Scalar::as_f64))
        .collect::<Result<_>>()?;
    Ok(StrategyRun { strategy, distances })
}

/// Mean distance of `circuit` from the full graph under `strategy`.
pub fn circuit_distance<S: Scalar, M: EdgeModel<S> + ?Sized>(
    model: &M,
    runs: &RunSet<S>,
    circuit: &Circuit,
    strategy: Strategy,
    metric: OutputDistance,
) -> Result<f64> {
    Ok(strategy_run(model, runs, circuit, strategy, metric)?.mean())
}

/// Mean distance between the patched outputs of two circuits, with `a` as
/// the reference. Single strategies only.
pub fn circuit_pair_distance<S: Scalar, M: EdgeModel<S> + ?Sized>(
    model: &M,
    runs: &RunSet<S>,
    a: &Circuit,
    b: &Circuit,
    strategy: Strategy,
    metric: OutputDistance,
) -> Result<f64> {
    let mut total = 0.0;
    for r in &runs.runs {
        for &part in strategy.parts() {
            let pa = r.patched(model, a, part)?;
            let pb = r.patched(model, b, part)?;
            total += distance(metric, &pa, &pb, r.labels)?.as_f64();
        }
    }
    Ok(total / runs.len() as f64)
}

/// Fraction of pairs whose patched prediction is the strategy's target label.
///
/// NsDn averages the two single-strategy accuracies.
pub fn circuit_accuracy<S: Scalar>(model: &Model<S>, runs: &RunSet<S>, circuit: &Circuit, strategy: Strategy) -> Result<f64> {
    if model.has_scalar_sink() {
        return Err(Error::Metric("accuracy needs a model with label logits".into()));
    }
    let parts = strategy.parts();
    let mut hits = 0usize;
    for r in &runs.runs {
        for &part in parts {
            if argmax(&r.patched(model, circuit, part)?) == r.target_label(part) {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / (runs.len() * parts.len()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::task::{make_task, TaskSpec};
    use crate::model::{make_gate_toy, GateKind, GateNetworkSpec, ModelSpec};

    fn fig2() -> (Model<f64>, RunSet<f64>) {
        let m = Model::from_spec(&ModelSpec::GateNetwork(GateNetworkSpec::fig2())).unwrap();
        let d = make_task(&TaskSpec::GateClean { sources: 4 }, 0).unwrap();
        let runs = RunSet::new(&m, &d, AblationMode::Zero, 0).unwrap();
        (m, runs)
    }

    fn without(m: &Model<f64>, edge: &str) -> Circuit {
        let g = m.graph();
        let mut c = g.full_circuit();
        c.remove(g.require_edge(&edge.parse().unwrap()).unwrap());
        c
    }

    #[test]
    fn fig2_ns_distances() {
        let (m, runs) = fig2();
        let sink = OutputDistance::Sink;
        let full = m.graph().full_circuit();
        assert_eq!(circuit_distance(&m, &runs, &full, Strategy::Ns, sink).unwrap(), 0.0);
        assert_eq!(circuit_distance(&m, &runs, &full, Strategy::Dn, OutputDistance::Kl).unwrap(), 0.0);
        assert_eq!(circuit_distance(&m, &runs, &without(&m, "g0.3->g1.1"), Strategy::Ns, sink).unwrap(), 0.0);
        assert_eq!(circuit_distance(&m, &runs, &without(&m, "g0.0->g1.0"), Strategy::Ns, sink).unwrap(), 1.0);
    }

    #[test]
    fn nsdn_is_the_sum() {
        let (m, runs) = fig2();
        let c = without(&m, "g0.0->g1.0");
        for metric in [OutputDistance::Sink, OutputDistance::Kl] {
            let ns = strategy_run(&m, &runs, &c, Strategy::Ns, metric).unwrap();
            let dn = strategy_run(&m, &runs, &c, Strategy::Dn, metric).unwrap();
            let both = strategy_run(&m, &runs, &c, Strategy::NsDn, metric).unwrap();
            for i in 0..ns.distances.len() {
                assert_eq!(both.distances[i], ns.distances[i] + dn.distances[i]);
            }
        }
    }

    #[test]
    fn zero_and_zero_noise_agree() {
        let (spec, _) = make_gate_toy(GateKind::Adder);
        let m: Model<f64> = Model::from_spec(&spec).unwrap();
        let d = make_task(&TaskSpec::ZeroInput, 0).unwrap();
        let p = &d.pairs()[0];
        let zero = corrupted_cache(&m, p, AblationMode::Zero, 0).unwrap();
        let noise = corrupted_cache(&m, p, AblationMode::Noise { mean: 0.0, std: 0.0 }, 4).unwrap();
        assert_eq!(zero, noise);
        assert_eq!(zero.logits(), &[0.0]);
        assert!(corrupted_cache(&m, p, AblationMode::Interchange, 0).is_err());
        assert!(corrupted_cache(&m, p, AblationMode::Noise { mean: 0.0, std: -1.0 }, 0).is_err());
    }

    #[test]
    fn strategy_names() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!("Ns+Dn".parse::<Strategy>().unwrap(), Strategy::NsDn);
    }

    #[test]
    fn accuracy_rejected_on_scalar_sinks() {
        let (m, runs) = fig2();
        assert!(circuit_accuracy(&m, &runs, &m.graph().full_circuit(), Strategy::Ns).is_err());
    }
}
