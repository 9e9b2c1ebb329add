// SPDX-License-Identifier: MIT OR Apache-2.0

//! Analytic networks with scalar nodes: gate networks and the one-layer toys.

use crate::error::{Error, Result};
use crate::graph::{ComputationalGraph, NodeId, NodeKind};
use crate::scalar::Scalar;

use super::engine::EdgeModel;
use super::{build_graph, GateKind, ModelSpec};

/// Scalar nonlinearity of a toy MLP node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    /// `ReLU(x - 1)`: active only when both unit heads fire.
    AndShift,
    /// `1 - ReLU(1 - x)`: saturates once one unit head fires.
    OrClamp,
    Relu,
}

impl Activation {
    fn apply<S: Scalar>(&self, x: S) -> S {
        let relu = |v: S| if v > S::zero() { v } else { S::zero() };
        match self {
            Self::AndShift => relu(x - S::one()),
            Self::OrClamp => S::one() - relu(S::one() - x),
            Self::Relu => relu(x),
        }
    }

    /// One-sided derivative; `dir > 0` takes the right limit, `dir < 0` the left.
    fn slope<S: Scalar>(&self, x: S, dir: i8) -> S {
        let (kink, left, right) = match self {
            Self::AndShift => (S::one(), S::zero(), S::one()),
            Self::OrClamp => (S::one(), S::one(), S::zero()),
            Self::Relu => (S::zero(), S::zero(), S::one()),
        };
        if x < kink || (x == kink && dir < 0) {
            left
        } else {
            right
        }
    }
}

/// What a node computes from its in-edges.
#[derive(Clone, Debug, PartialEq)]
pub enum NodeOp<S> {
    /// The input node.
    Input,
    /// Bit `slot` of the input vector.
    Select { slot: usize },
    And,
    Or,
    Adder,
    /// `bias + sum(inputs)`.
    Head { bias: S },
    Mlp(Activation),
    /// Sum of in-edges.
    Output,
}

/// Network whose nodes all carry scalar values.
#[derive(Clone, Debug)]
pub struct ScalarNetwork<S> {
    spec: ModelSpec,
    graph: ComputationalGraph,
    ops: Vec<NodeOp<S>>,
    gains: Vec<S>,
    width: usize,
}

impl<S: Scalar> ScalarNetwork<S> {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let graph = build_graph(spec)?;
        let n = graph.num_nodes();
        let mut ops = vec![NodeOp::Output; n];
        let mut gains = vec![S::one(); n];
        let width;
        match spec {
            ModelSpec::GateNetwork(g) => {
                width = g.sources.len();
                for (slot, s) in g.sources.iter().enumerate() {
                    ops[idx(&graph, s)] = NodeOp::Select { slot };
                }
                for gate in &g.gates {
                    let i = idx(&graph, &gate.node);
                    ops[i] = match gate.kind {
                        GateKind::And => NodeOp::And,
                        GateKind::Or => NodeOp::Or,
                        GateKind::Adder => NodeOp::Adder,
                    };
                    gains[i] = S::lit(gate.gain);
                }
            }
            ModelSpec::ToyTransformer(t) => {
                width = 1;
                ops[idx(&graph, &NodeId::head(0, 0))] = NodeOp::Head { bias: S::lit(t.bias1) };
                ops[idx(&graph, &NodeId::head(0, 1))] = NodeOp::Head { bias: S::lit(t.bias2) };
                ops[idx(&graph, &NodeId::mlp(0))] = NodeOp::Mlp(match t.gate {
                    GateKind::And => Activation::AndShift,
                    GateKind::Or => Activation::OrClamp,
                    GateKind::Adder => Activation::Relu,
                });
            }
            ModelSpec::TrainedTransformer(_) => {
                return Err(Error::Spec("transformers are not scalar networks".into()))
            }
        }
        ops[idx(&graph, &NodeId::input(0))] = NodeOp::Input;
        Ok(Self { spec: spec.clone(), graph, ops, gains, width })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn op(&self, node: usize) -> &NodeOp<S> {
        &self.ops[node]
    }

    /// Length of the input vector.
    pub fn input_width(&self) -> usize {
        self.width
    }
}

fn idx(g: &ComputationalGraph, n: &NodeId) -> usize {
    g.node_index(n).expect("node built from the same spec")
}

impl<S: Scalar> EdgeModel<S> for ScalarNetwork<S> {
    fn graph(&self) -> &ComputationalGraph {
        &self.graph
    }

    fn source(&self, node: usize, input: &[u32]) -> Result<Vec<S>> {
        debug_assert_eq!(self.graph.nodes()[node].kind, NodeKind::Input);
        match &self.spec {
            ModelSpec::ToyTransformer(_) => Ok(vec![S::zero()]),
            _ => {
                if input.len() != self.width {
                    return Err(Error::Shape(format!(
                        "expected {} input bits, got {}",
                        self.width,
                        input.len()
                    )));
                }
                if let Some(b) = input.iter().find(|&&b| b > 1) {
                    return Err(Error::Shape(format!("input bit {b} is not 0 or 1")));
                }
                Ok(input.iter().map(|&b| if b == 1 { S::one() } else { S::zero() }).collect())
            }
        }
    }

    fn eval(&self, node: usize, ins: &[&[S]]) -> Vec<S> {
        let sum = || ins.iter().flat_map(|v| v.iter()).fold(S::zero(), |a, b| a + *b);
        let v = match &self.ops[node] {
            NodeOp::Input => unreachable!("input nodes have no in-edges"),
            NodeOp::Select { slot } => ins[0][*slot],
            NodeOp::And => ins.iter().map(|v| v[0]).fold(S::infinity(), S::min),
            NodeOp::Or => ins.iter().map(|v| v[0]).fold(S::neg_infinity(), S::max),
            NodeOp::Adder | NodeOp::Output => sum(),
            NodeOp::Head { bias } => *bias + sum(),
            NodeOp::Mlp(act) => act.apply(sum()),
        };
        vec![v * self.gains[node]]
    }

    fn backprop(&self, node: usize, ins: &[&[S]], grad_out: &[S], dir: Option<&[i8]>) -> Vec<Vec<S>> {
        let g = grad_out[0] * self.gains[node];
        let d = |k: usize| dir.map_or(0, |d| d[k]);
        let spread = |w: S| -> Vec<Vec<S>> { ins.iter().map(|v| vec![w; v.len()]).collect() };
        match &self.ops[node] {
            NodeOp::Input => Vec::new(),
            NodeOp::Select { slot } => {
                let mut v = vec![S::zero(); ins[0].len()];
                v[*slot] = g;
                vec![v]
            }
            NodeOp::Adder | NodeOp::Output | NodeOp::Head { .. } => spread(g),
            NodeOp::Mlp(act) => {
                let x = ins.iter().flat_map(|v| v.iter()).fold(S::zero(), |a, b| a + *b);
                ins.iter()
                    .enumerate()
                    .map(|(k, v)| {
                        let dk = if dir.is_some() { d(k) } else { 1 };
                        vec![g * act.slope(x, dk); v.len()]
                    })
                    .collect()
            }
            op @ (NodeOp::And | NodeOp::Or) => {
                let is_and = matches!(op, NodeOp::And);
                let vals: Vec<S> = ins.iter().map(|v| v[0]).collect();
                let ext = if is_and {
                    vals.iter().copied().fold(S::infinity(), S::min)
                } else {
                    vals.iter().copied().fold(S::neg_infinity(), S::max)
                };
                let tied = vals.iter().filter(|&&v| v == ext).count();
                // at a tie, an edge moves the min down (or the max up) on its own
                let toward = if is_and { -1 } else { 1 };
                (0..vals.len())
                    .map(|k| {
                        let w = if vals[k] != ext {
                            S::zero()
                        } else if tied == 1 {
                            S::one()
                        } else if d(k) == 0 {
                            S::one() / S::lit(tied as f64)
                        } else if d(k) == toward {
                            S::one()
                        } else {
                            S::zero()
                        };
                        vec![g * w]
                    })
                    .collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::EdgeId;
    use crate::metric::OutputLoss;
    use crate::model::engine::{edge_gradients, forward, forward_patched, ActivationCache};
    use crate::model::{make_gate_toy, GateNetworkSpec};

    fn toy(kind: GateKind) -> ScalarNetwork<f64> {
        ScalarNetwork::from_spec(&make_gate_toy(kind).0).unwrap()
    }

    fn zero_cache(net: &ScalarNetwork<f64>) -> ActivationCache<f64> {
        let g = net.graph();
        let vals = (0..g.num_edges()).map(|_| vec![0.0]).collect();
        ActivationCache::from_edge_values(net, vals).unwrap()
    }

    fn edge(g: &ComputationalGraph, s: &str) -> usize {
        g.require_edge(&s.parse::<EdgeId>().unwrap()).unwrap()
    }

    /// Output with the named head edges ablated to zero.
    fn toy_output(kind: GateKind, ablate: &[&str]) -> f64 {
        let net = toy(kind);
        let g = net.graph();
        let clean = forward(&net, &[0]).unwrap();
        let zero = zero_cache(&net);
        let mut keep = g.full_circuit();
        for a in ablate {
            keep.remove(edge(g, a));
        }
        forward_patched(&net, &clean, &zero, &keep).unwrap()[0]
    }

    #[test]
    fn toy_truth_tables() {
        let (a1, a2) = ("a0.0->m0", "a0.1->m0");
        assert_eq!(toy_output(GateKind::And, &[]), 1.0);
        assert_eq!(toy_output(GateKind::And, &[a1]), 0.0);
        assert_eq!(toy_output(GateKind::And, &[a2]), 0.0);
        assert_eq!(toy_output(GateKind::Or, &[a2]), 1.0);
        assert_eq!(toy_output(GateKind::Or, &[a1, a2]), 0.0);
        assert_eq!(toy_output(GateKind::Adder, &[]), 2.5);
        assert_eq!(toy_output(GateKind::Adder, &[a1]), 1.5);
        assert_eq!(toy_output(GateKind::Adder, &[a2]), 1.0);
        assert_eq!(toy_output(GateKind::Adder, &[a1, a2]), 0.0);
    }

    #[test]
    fn and_toy_mlp_input_is_two() {
        let net = toy(GateKind::And);
        let c = forward(&net, &[0]).unwrap();
        let m = net.graph().node_index(&NodeId::mlp(0)).unwrap();
        let x: f64 = net.graph().in_edges(m).iter().map(|&e| c.edge_value(e)[0]).sum();
        assert_eq!(x, 2.0);
        assert_eq!(c.logits(), &[1.0]);
    }

    #[test]
    fn fig2_semantics() {
        let net: ScalarNetwork<f64> =
            ScalarNetwork::from_spec(&ModelSpec::GateNetwork(GateNetworkSpec::fig2())).unwrap();
        let g = net.graph();
        let clean = forward(&net, &[1, 1, 1, 1]).unwrap();
        let corrupt = forward(&net, &[0, 0, 0, 0]).unwrap();
        let node = |s: &str| clean.node_value(g.node_index(&s.parse().unwrap()).unwrap())[0];
        assert_eq!((node("g1.0"), node("g1.1"), node("g2.0")), (1.0, 1.0, 2.0));
        assert!(corrupt.edge_values().iter().all(|v| v.iter().all(|x| *x == 0.0)));

        let mut keep = g.full_circuit();
        keep.remove(edge(g, "g0.2->g1.1"));
        assert_eq!(forward_patched(&net, &clean, &corrupt, &keep).unwrap(), vec![2.0]);
        let mut keep = g.full_circuit();
        keep.remove(edge(g, "g0.0->g1.0"));
        assert_eq!(forward_patched(&net, &clean, &corrupt, &keep).unwrap(), vec![1.0]);
    }

    #[test]
    fn kink_gradients_follow_direction() {
        let loss = OutputLoss::SinkValue;
        for (kind, at_clean, expect) in [
            (GateKind::And, true, 1.0),
            (GateKind::And, false, 0.0),
            (GateKind::Or, true, 0.0),
            (GateKind::Or, false, 1.0),
            (GateKind::Adder, true, 1.0),
            (GateKind::Adder, false, 1.0),
        ] {
            let net = toy(kind);
            let clean = forward(&net, &[0]).unwrap();
            let zero = zero_cache(&net);
            let (at, toward) = if at_clean { (&clean, &zero) } else { (&zero, &clean) };
            let grads = edge_gradients(&net, at, &loss, Some(toward)).unwrap();
            let e = edge(net.graph(), "a0.0->m0");
            assert_eq!(grads.grad(e), &[expect], "{kind} at clean={at_clean}");
        }
    }

    #[test]
    fn min_tie_breaks_by_direction() {
        let net: ScalarNetwork<f64> =
            ScalarNetwork::from_spec(&ModelSpec::GateNetwork(GateNetworkSpec::fig2())).unwrap();
        let b1 = net.graph().node_index(&"g1.0".parse().unwrap()).unwrap();
        let ins: [&[f64]; 2] = [&[1.0], &[1.0]];
        assert_eq!(net.backprop(b1, &ins, &[1.0], None), vec![vec![0.5], vec![0.5]]);
        assert_eq!(net.backprop(b1, &ins, &[1.0], Some(&[-1, 1])), vec![vec![1.0], vec![0.0]]);
    }
}
