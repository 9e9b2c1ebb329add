// SPDX-License-Identifier: MIT OR Apache-2.0

//! Gate networks with planted gate kinds.
//!
//! Every planted network has one layer of gates over disjoint sources and a
//! single sink gate reading all of them, so each edge into a gate node has a
//! known kind.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ComputationalGraph, NodeId, NodeKind};
use crate::rng;

use super::{GateKind, GateNetworkSpec, GateSpec};

/// One first-layer gate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedGate {
    pub kind: GateKind,
    pub arity: usize,
    #[serde(default = "one")]
    pub gain: f64,
}

fn one() -> f64 {
    1.0
}

impl PlantedGate {
    pub fn new(kind: GateKind, arity: usize) -> Self {
        Self { kind, arity, gain: 1.0 }
    }

    pub fn with_gain(mut self, gain: f64) -> Self {
        self.gain = gain;
        self
    }
}

/// Layout of a planted network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedNetwork {
    pub gates: Vec<PlantedGate>,
    /// ADDER or AND. Under an AND sink every first-layer gate is rescaled
    /// to output 1 on the all-ones input.
    pub sink: GateKind,
}

impl PlantedNetwork {
    /// Build the network. `seed` permutes gate order and source wiring.
    pub fn build(&self, seed: u64) -> Result<GateNetworkSpec> {
        if self.gates.is_empty() {
            return Err(Error::Spec("planted network needs at least one gate".into()));
        }
        if self.sink == GateKind::Or {
            return Err(Error::Spec("planted sinks are ADDER or AND gates".into()));
        }
        if let Some(g) = self.gates.iter().find(|g| g.arity < 2 || !(g.gain > 0.0)) {
            return Err(Error::Spec(format!("planted gates need arity >= 2 and a positive gain, got {g:?}")));
        }
        let mut r = rng::seeded(rng::derive_str(seed, "planted"));
        let mut order: Vec<PlantedGate> = self.gates.clone();
        order.shuffle(&mut r);
        let n_sources: usize = order.iter().map(|g| g.arity).sum();
        let sources: Vec<NodeId> = (0..n_sources).map(|i| NodeId::gate(0, i as u32)).collect();
        let mut wiring = sources.clone();
        wiring.shuffle(&mut r);
        let mut gates = Vec::new();
        let mut next = wiring.into_iter();
        for (i, g) in order.iter().enumerate() {
            let mut parents: Vec<NodeId> = next.by_ref().take(g.arity).collect();
            parents.sort();
            let gain = match (self.sink, g.kind) {
                (GateKind::And, GateKind::Adder) => 1.0 / g.arity as f64,
                (GateKind::And, _) => 1.0,
                _ => g.gain,
            };
            gates.push(GateSpec::new(NodeId::gate(1, i as u32), g.kind, parents).with_gain(gain));
        }
        let sink = NodeId::gate(2, 0);
        gates.push(GateSpec::new(sink, self.sink, (0..order.len()).map(|i| NodeId::gate(1, i as u32)).collect()));
        Ok(GateNetworkSpec { sources, gates, sink: Some(sink) })
    }

    /// One AND, OR and ADDER gate of `arity` inputs at each gain level
    /// `1..=levels`, under an ADDER sink. Gains carry small per-gate offsets
    /// so no two gates tie.
    pub fn graded(levels: usize, arity: usize) -> Self {
        let mut gates = Vec::new();
        for level in 1..=levels {
            let g = level as f64 + 0.01 * (level - 1) as f64;
            gates.push(PlantedGate::new(GateKind::And, arity).with_gain(g));
            gates.push(PlantedGate::new(GateKind::Or, arity).with_gain(g + 0.02));
            gates.push(PlantedGate::new(GateKind::Adder, arity).with_gain(g + 0.04));
        }
        Self { gates, sink: GateKind::Adder }
    }

    /// A random network of at most 12 edges with a gate of every kind.
    ///
    /// Either an ADDER sink over an AND and an OR gate, or an AND sink over
    /// an ADDER and an OR gate, with random gains.
    pub fn random_small(seed: u64) -> Self {
        let mut r = rng::seeded(rng::derive_str(seed, "planted-small"));
        let mut gain = || [0.5, 1.0, 2.0, 3.0][r.gen_range(0..4)];
        let (a, b) = (gain(), gain());
        if rng::derive(seed, 1) % 2 == 0 {
            Self {
                gates: vec![PlantedGate::new(GateKind::And, 2).with_gain(a), PlantedGate::new(GateKind::Or, 2).with_gain(b)],
                sink: GateKind::Adder,
            }
        } else {
            Self {
                gates: vec![PlantedGate::new(GateKind::Adder, 2), PlantedGate::new(GateKind::Or, 2)],
                sink: GateKind::And,
            }
        }
    }
}

/// Kind of the receiving gate for every edge into a gate with two or more
/// parents. Trunk edges (into sources and the output) have no kind.
pub fn planted_kinds(spec: &GateNetworkSpec, graph: &ComputationalGraph) -> Vec<Option<GateKind>> {
    graph
        .edges()
        .iter()
        .map(|e| {
            if e.receiver.kind != NodeKind::GateNode {
                return None;
            }
            spec.gates.iter().find(|g| g.node == e.receiver && g.parents.len() >= 2).map(|g| g.kind)
        })
        .collect()
}
