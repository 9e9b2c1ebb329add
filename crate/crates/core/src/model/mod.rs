// SPDX-License-Identifier: MIT OR Apache-2.0

//! Executable model families and their specifications.
//!
//! Three families share one execution engine:
//!
//! - gate networks, where every gate node is an AND (min), OR (max) or
//!   ADDER (sum) of its in-edges;
//! - one-layer toy transformers with two bias-only heads and a scalar MLP;
//! - small attention + MLP transformers trained on synthetic token tasks.
//!
//! The first two are [`ScalarNetwork`]s; the third is a [`Transformer`].

pub mod engine;
pub mod io;
pub mod planted;
pub mod scalar_net;
pub mod task;
pub mod transformer;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ComputationalGraph, EdgeId, NodeId, NodeKind};
use crate::scalar::Scalar;

pub use planted::{planted_kinds, PlantedGate, PlantedNetwork};
pub use engine::{ActivationCache, EdgeGradients, EdgeModel};
pub use scalar_net::{Activation, NodeOp, ScalarNetwork};
pub use task::{make_task, InductionCorruption, TaskDataset, TaskPair, TaskSpec};
pub use transformer::{make_trained_transformer, TrainConfig, TrainSummary, Transformer};

/// Logical relation between a receiver and its senders.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GateKind {
    And,
    Or,
    Adder,
}

impl GateKind {
    pub const ALL: [GateKind; 3] = [GateKind::And, GateKind::Or, GateKind::Adder];

    pub fn name(&self) -> &'static str {
        match self {
            Self::And => "AND",
            Self::Or => "OR",
            Self::Adder => "ADDER",
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "AND" => Ok(Self::And),
            "OR" => Ok(Self::Or),
            "ADDER" => Ok(Self::Adder),
            _ => Err(Error::Unknown { kind: "gate kind", name: s.to_string() }),
        }
    }
}

fn unit_gain() -> f64 {
    1.0
}

fn is_unit(g: &f64) -> bool {
    *g == 1.0
}

/// One gate node of a gate network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateSpec {
    pub node: NodeId,
    pub kind: GateKind,
    pub parents: Vec<NodeId>,
    /// Output scale; values other than 1 model components of unequal strength.
    #[serde(default = "unit_gain", skip_serializing_if = "is_unit")]
    pub gain: f64,
}

impl GateSpec {
    pub fn new(node: NodeId, kind: GateKind, parents: Vec<NodeId>) -> Self {
        Self { node, kind, parents, gain: 1.0 }
    }

    pub fn with_gain(mut self, gain: f64) -> Self {
        self.gain = gain;
        self
    }
}

/// A network of AND/OR/ADDER gates over binary sources.
///
/// Source `i` reads bit `i` of the input vector through an edge from the
/// input node. The output reads the sink, which defaults to the last gate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateNetworkSpec {
    pub sources: Vec<NodeId>,
    #[serde(default)]
    pub gates: Vec<GateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sink: Option<NodeId>,
}

impl GateNetworkSpec {
    /// `A1 AND A2 = B1`, `A3 OR A4 = B2`, `B1 + B2 = C`.
    pub fn fig2() -> Self {
        let a = |i| NodeId::gate(0, i);
        let b1 = NodeId::gate(1, 0);
        let b2 = NodeId::gate(1, 1);
        let c = NodeId::gate(2, 0);
        Self {
            sources: (0..4).map(a).collect(),
            gates: vec![
                GateSpec::new(b1, GateKind::And, vec![a(0), a(1)]),
                GateSpec::new(b2, GateKind::Or, vec![a(2), a(3)]),
                GateSpec::new(c, GateKind::Adder, vec![b1, b2]),
            ],
            sink: Some(c),
        }
    }

    pub fn sink_node(&self) -> Result<NodeId> {
        self.sink
            .or_else(|| self.gates.last().map(|g| g.node))
            .or_else(|| if self.sources.len() == 1 { Some(self.sources[0]) } else { None })
            .ok_or_else(|| Error::Graph("no output node".into()))
    }

    fn validate(&self) -> Result<()> {
        let mut seen: Vec<NodeId> = Vec::new();
        for s in &self.sources {
            if s.kind != NodeKind::GateNode {
                return Err(Error::Spec(format!("source {s} must be a gate node")));
            }
            if seen.contains(s) {
                return Err(Error::Spec(format!("duplicate node {s}")));
            }
            seen.push(*s);
        }
        for g in &self.gates {
            if g.node.kind != NodeKind::GateNode {
                return Err(Error::Spec(format!("gate {} must be a gate node", g.node)));
            }
            if seen.contains(&g.node) {
                return Err(Error::Spec(format!("duplicate node {}", g.node)));
            }
            if g.parents.is_empty() {
                return Err(Error::Spec(format!("gate {} has no parents", g.node)));
            }
            for p in &g.parents {
                if !seen.contains(p) {
                    return Err(Error::Spec(format!(
                        "gate {} references {p}, which is not an earlier node",
                        g.node
                    )));
                }
            }
            if !g.gain.is_finite() {
                return Err(Error::Spec(format!("gate {} has a non-finite gain", g.node)));
            }
            seen.push(g.node);
        }
        let sink = self.sink_node()?;
        if !seen.contains(&sink) {
            return Err(Error::Spec(format!("sink {sink} is not a node of the network")));
        }
        Ok(())
    }

    /// Kind of the gate at `node`, if it is a gate.
    pub fn kind_of(&self, node: &NodeId) -> Option<GateKind> {
        self.gates.iter().find(|g| &g.node == node).map(|g| g.kind)
    }
}

/// One-layer toy: two bias-only heads feeding a scalar MLP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToySpec {
    pub gate: GateKind,
    pub bias1: f64,
    pub bias2: f64,
}

/// Attention + ReLU MLP transformer without layer norm.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformerSpec {
    pub layers: usize,
    pub heads: usize,
    pub model_dim: usize,
    pub mlp_dim: usize,
    pub vocab_size: usize,
    /// Longest supported input.
    pub context: usize,
    pub seed: u64,
}

impl TransformerSpec {
    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads.max(1)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("layers", self.layers),
            ("heads", self.heads),
            ("model_dim", self.model_dim),
            ("mlp_dim", self.mlp_dim),
            ("vocab_size", self.vocab_size),
            ("context", self.context),
        ] {
            if v == 0 {
                return Err(Error::Spec(format!("{name} must be at least 1")));
            }
        }
        if self.model_dim % self.heads != 0 {
            return Err(Error::Spec("model_dim must be divisible by heads".into()));
        }
        Ok(())
    }
}

/// Specification of any supported model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ModelSpec {
    GateNetwork(GateNetworkSpec),
    ToyTransformer(ToySpec),
    TrainedTransformer(TransformerSpec),
}

impl ModelSpec {
    pub fn family(&self) -> &'static str {
        match self {
            Self::GateNetwork(_) => "gate-network",
            Self::ToyTransformer(_) => "toy-transformer",
            Self::TrainedTransformer(_) => "trained-transformer",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::GateNetwork(g) => g.validate(),
            Self::ToyTransformer(t) => {
                if t.bias1.is_finite() && t.bias2.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Spec("toy biases must be finite".into()))
                }
            }
            Self::TrainedTransformer(t) => t.validate(),
        }
    }
}

/// Build the computational graph described by `spec`.
pub fn build_graph(spec: &ModelSpec) -> Result<ComputationalGraph> {
    if let ModelSpec::GateNetwork(g) = spec {
        if g.sources.is_empty() && g.gates.is_empty() {
            return Err(Error::Graph("no output node".into()));
        }
    }
    spec.validate()?;
    let input = NodeId::input(0);
    let output = NodeId::output();
    match spec {
        ModelSpec::GateNetwork(g) => {
            let mut nodes = vec![input];
            let mut edges = Vec::new();
            for s in &g.sources {
                nodes.push(*s);
                edges.push(EdgeId::new(input, *s));
            }
            for gate in &g.gates {
                nodes.push(gate.node);
                for p in &gate.parents {
                    edges.push(EdgeId::new(*p, gate.node));
                }
            }
            nodes.push(output);
            edges.push(EdgeId::new(g.sink_node()?, output));
            ComputationalGraph::new(nodes, edges)
        }
        ModelSpec::ToyTransformer(_) => {
            let (a1, a2, m) = (NodeId::head(0, 0), NodeId::head(0, 1), NodeId::mlp(0));
            ComputationalGraph::new(
                vec![input, a1, a2, m, output],
                vec![
                    EdgeId::new(input, a1),
                    EdgeId::new(input, a2),
                    EdgeId::new(a1, m),
                    EdgeId::new(a2, m),
                    EdgeId::new(m, output),
                ],
            )
        }
        ModelSpec::TrainedTransformer(t) => {
            let mut nodes = vec![input];
            for l in 0..t.layers as u32 {
                for h in 0..t.heads as u32 {
                    nodes.push(NodeId::head(l, h));
                }
                nodes.push(NodeId::mlp(l));
            }
            nodes.push(output);
            let mut edges = Vec::new();
            for (j, r) in nodes.iter().enumerate().skip(1) {
                for s in &nodes[..j] {
                    // heads of one layer read the same residual stream
                    if s.kind == NodeKind::AttentionHead
                        && r.kind == NodeKind::AttentionHead
                        && s.layer == r.layer
                    {
                        continue;
                    }
                    edges.push(EdgeId::new(*s, *r));
                }
            }
            ComputationalGraph::new(nodes, edges)
        }
    }
}

/// The toy for `kind`, with its graph.
///
/// AND and OR use unit biases; ADDER uses biases 1 and 1.5 with a plain ReLU.
pub fn make_gate_toy(kind: GateKind) -> (ModelSpec, ComputationalGraph) {
    let (bias1, bias2) = match kind {
        GateKind::And | GateKind::Or => (1.0, 1.0),
        GateKind::Adder => (1.0, 1.5),
    };
    let spec = ModelSpec::ToyTransformer(ToySpec { gate: kind, bias1, bias2 });
    let graph = build_graph(&spec).expect("toy graph is valid");
    (spec, graph)
}

/// Executable gate network or toy.
pub fn make_gate_network<S: Scalar>(spec: &ModelSpec) -> Result<ScalarNetwork<S>> {
    ScalarNetwork::from_spec(spec)
}

/// Any executable model.
#[derive(Clone, Debug)]
pub enum Model<S: Scalar> {
    Scalar(ScalarNetwork<S>),
    Transformer(Transformer<S>),
}

impl<S: Scalar> Model<S> {
    /// Instantiate a model; transformers start from their seeded initialization.
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        match spec {
            ModelSpec::TrainedTransformer(t) => Ok(Self::Transformer(Transformer::new(t.clone())?)),
            _ => Ok(Self::Scalar(ScalarNetwork::from_spec(spec)?)),
        }
    }

    pub fn spec(&self) -> ModelSpec {
        match self {
            Self::Scalar(n) => n.spec().clone(),
            Self::Transformer(t) => ModelSpec::TrainedTransformer(t.spec().clone()),
        }
    }

    /// True for models whose output is a single scalar sink.
    pub fn has_scalar_sink(&self) -> bool {
        matches!(self, Self::Scalar(_))
    }
}

impl<S: Scalar> From<ScalarNetwork<S>> for Model<S> {
    fn from(n: ScalarNetwork<S>) -> Self {
        Self::Scalar(n)
    }
}

impl<S: Scalar> From<Transformer<S>> for Model<S> {
    fn from(t: Transformer<S>) -> Self {
        Self::Transformer(t)
    }
}

impl<S: Scalar> EdgeModel<S> for Model<S> {
    fn graph(&self) -> &ComputationalGraph {
        match self {
            Self::Scalar(n) => n.graph(),
            Self::Transformer(t) => t.graph(),
        }
    }

    fn source(&self, node: usize, input: &[u32]) -> Result<Vec<S>> {
        match self {
            Self::Scalar(n) => n.source(node, input),
            Self::Transformer(t) => t.source(node, input),
        }
    }

    fn eval(&self, node: usize, ins: &[&[S]]) -> Vec<S> {
        match self {
            Self::Scalar(n) => n.eval(node, ins),
            Self::Transformer(t) => t.eval(node, ins),
        }
    }

    fn backprop(&self, node: usize, ins: &[&[S]], grad_out: &[S], dir: Option<&[i8]>) -> Vec<Vec<S>> {
        match self {
            Self::Scalar(n) => n.backprop(node, ins, grad_out, dir),
            Self::Transformer(t) => t.backprop(node, ins, grad_out, dir),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_graph_has_five_edges() {
        let (_, g) = make_gate_toy(GateKind::And);
        let names: Vec<String> = g.edges().iter().map(|e| e.to_string()).collect();
        assert_eq!(names, ["input->a0.0", "input->a0.1", "a0.0->m0", "a0.1->m0", "m0->output"]);
    }

    #[test]
    fn fig2_graph_shape() {
        let g = build_graph(&ModelSpec::GateNetwork(GateNetworkSpec::fig2())).unwrap();
        assert_eq!(g.num_edges(), 11);
        let sources = g.edges().iter().filter(|e| e.sender == NodeId::input(0)).count();
        assert_eq!(sources, 4);
        assert!(g.edge_index(&"g2.0->output".parse().unwrap()).is_some());
    }

    #[test]
    fn empty_gate_network_has_no_output() {
        let spec = ModelSpec::GateNetwork(GateNetworkSpec { sources: vec![], gates: vec![], sink: None });
        let err = build_graph(&spec).unwrap_err();
        assert!(err.to_string().contains("no output node"));
    }

    #[test]
    fn forward_references_are_rejected() {
        let mut spec = GateNetworkSpec::fig2();
        spec.gates.swap(0, 2);
        assert!(build_graph(&ModelSpec::GateNetwork(spec)).is_err());
    }

    #[test]
    fn transformer_edge_count() {
        let spec = ModelSpec::TrainedTransformer(TransformerSpec {
            layers: 2,
            heads: 4,
            model_dim: 32,
            mlp_dim: 64,
            vocab_size: 16,
            context: 12,
            seed: 0,
        });
        assert_eq!(build_graph(&spec).unwrap().num_edges(), 54);
        assert_eq!(build_graph(&spec).unwrap(), build_graph(&spec).unwrap());
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = ModelSpec::GateNetwork(GateNetworkSpec::fig2());
        let s = serde_json::to_string(&spec).unwrap();
        assert!(s.contains("\"g1.0\""));
        let back: ModelSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, spec);
    }
}
