// SPDX-License-Identifier: MIT OR Apache-2.0

//! Computational graphs, circuits and their set algebra.
//!
//! A [`ComputationalGraph`] is a DAG of model components. Edges carry a
//! sender's output into a receiver's input. A [`Circuit`] is a subset of a
//! graph's edges; it is the unit every discovery algorithm produces and every
//! evaluation consumes.
//!
//! Node indices are positions in the graph's topological order and edge
//! indices are positions in canonical edge order, so both are stable for a
//! given structure.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

// ---------------------------------------------------------------------------
// Node and edge identifiers
// ---------------------------------------------------------------------------

/// Component category of a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    Input,
    AttentionHead,
    Mlp,
    GateNode,
    Output,
}

/// A node, identified by `(kind, layer, index)`.
///
/// Rendered as `input`, `a5.9` (head 9 of layer 5), `m8` (MLP of layer 8),
/// `g1.0` (gate node) or `output`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct NodeId {
    pub kind: NodeKind,
    pub layer: u32,
    pub index: u32,
}

impl NodeId {
    pub const fn new(kind: NodeKind, layer: u32, index: u32) -> Self {
        Self { kind, layer, index }
    }

    pub const fn input(index: u32) -> Self {
        Self::new(NodeKind::Input, 0, index)
    }

    pub const fn head(layer: u32, index: u32) -> Self {
        Self::new(NodeKind::AttentionHead, layer, index)
    }

    pub const fn mlp(layer: u32) -> Self {
        Self::new(NodeKind::Mlp, layer, 0)
    }

    pub const fn gate(layer: u32, index: u32) -> Self {
        Self::new(NodeKind::GateNode, layer, index)
    }

    /// The output node always sorts after every other node.
    pub const fn output() -> Self {
        Self::new(NodeKind::Output, u32::MAX, 0)
    }

    fn order_key(&self) -> (u32, NodeKind, u32) {
        (self.layer, self.kind, self.index)
    }
}

impl Ord for NodeId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order_key().cmp(&other.order_key())
    }
}

impl PartialOrd for NodeId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            NodeKind::Input if self.index == 0 => write!(f, "input"),
            NodeKind::Input => write!(f, "input{}", self.index),
            NodeKind::AttentionHead => write!(f, "a{}.{}", self.layer, self.index),
            NodeKind::Mlp if self.index == 0 => write!(f, "m{}", self.layer),
            NodeKind::Mlp => write!(f, "m{}.{}", self.layer, self.index),
            NodeKind::GateNode => write!(f, "g{}.{}", self.layer, self.index),
            NodeKind::Output => write!(f, "output"),
        }
    }
}

impl FromStr for NodeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::Unknown { kind: "node", name: s.to_string() };
        let num = |t: &str| t.parse::<u32>().map_err(|_| unknown());
        let pair = |t: &str| -> Result<(u32, u32)> {
            let (l, i) = t.split_once('.').ok_or_else(unknown)?;
            Ok((num(l)?, num(i)?))
        };
        match s {
            "input" => return Ok(Self::input(0)),
            "output" => return Ok(Self::output()),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("input") {
            return Ok(Self::input(num(rest)?));
        }
        if let Some(rest) = s.strip_prefix('a') {
            let (l, i) = pair(rest)?;
            return Ok(Self::head(l, i));
        }
        if let Some(rest) = s.strip_prefix('m') {
            return match rest.split_once('.') {
                Some(_) => {
                    let (l, i) = pair(rest)?;
                    Ok(Self::new(NodeKind::Mlp, l, i))
                }
                None => Ok(Self::mlp(num(rest)?)),
            };
        }
        if let Some(rest) = s.strip_prefix('g') {
            let (l, i) = pair(rest)?;
            return Ok(Self::gate(l, i));
        }
        Err(unknown())
    }
}

/// A directed edge `sender -> receiver`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct EdgeId {
    pub sender: NodeId,
    pub receiver: NodeId,
}

impl EdgeId {
    pub const fn new(sender: NodeId, receiver: NodeId) -> Self {
        Self { sender, receiver }
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.sender, self.receiver)
    }
}

impl FromStr for EdgeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once("->")
            .ok_or_else(|| Error::Unknown { kind: "edge", name: s.to_string() })?;
        Ok(Self::new(a.trim().parse()?, b.trim().parse()?))
    }
}

macro_rules! string_serde {
    ($t:ty) => {
        impl From<$t> for String {
            fn from(v: $t) -> String {
                v.to_string()
            }
        }

        impl TryFrom<String> for $t {
            type Error = Error;

            fn try_from(s: String) -> Result<Self> {
                s.parse()
            }
        }
    };
}

string_serde!(NodeId);
string_serde!(EdgeId);

/// Opaque structural fingerprint identifying a graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GraphId(pub u64);

// ---------------------------------------------------------------------------
// ComputationalGraph
// ---------------------------------------------------------------------------

/// Immutable DAG of components.
#[derive(Clone, Debug)]
pub struct ComputationalGraph {
    id: GraphId,
    nodes: Vec<NodeId>,
    edges: Vec<EdgeId>,
    node_index: HashMap<NodeId, usize>,
    edge_index: HashMap<EdgeId, usize>,
    edge_ends: Vec<(usize, usize)>,
    in_edges: Vec<Vec<usize>>,
    out_edges: Vec<Vec<usize>>,
    output: usize,
}

impl PartialEq for ComputationalGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

impl ComputationalGraph {
    /// Build and validate a graph.
    ///
    /// Rejects duplicate nodes or edges, self-edges, cycles, inputs with
    /// parents, graphs without exactly one output node, non-input nodes not
    /// reachable from an input, and nodes with out-edges that cannot reach
    /// the output.
    pub fn new(nodes: Vec<NodeId>, edges: Vec<EdgeId>) -> Result<Self> {
        let outputs = nodes.iter().filter(|n| n.kind == NodeKind::Output).count();
        if outputs == 0 {
            return Err(Error::Graph("no output node".into()));
        }
        if outputs > 1 {
            return Err(Error::Graph(format!("{outputs} output nodes")));
        }
        let mut seen = BTreeSet::new();
        for n in &nodes {
            if !seen.insert(*n) {
                return Err(Error::Graph(format!("duplicate node {n}")));
            }
        }
        let mut edge_set = BTreeSet::new();
        for e in &edges {
            if e.sender == e.receiver {
                return Err(Error::Graph(format!("self-edge on {}", e.sender)));
            }
            for end in [e.sender, e.receiver] {
                if !seen.contains(&end) {
                    return Err(Error::Unknown { kind: "node", name: end.to_string() });
                }
            }
            if e.receiver.kind == NodeKind::Input {
                return Err(Error::Graph(format!("input node {} has a parent", e.receiver)));
            }
            if e.sender.kind == NodeKind::Output {
                return Err(Error::Graph("output node has an out-edge".into()));
            }
            if !edge_set.insert(*e) {
                return Err(Error::Graph(format!("duplicate edge {e}")));
            }
        }

        // Kahn's algorithm; ties broken by (layer, kind, index).
        let mut indeg: HashMap<NodeId, usize> = nodes.iter().map(|n| (*n, 0)).collect();
        let mut children: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
        for e in &edge_set {
            *indeg.get_mut(&e.receiver).expect("checked") += 1;
            children.entry(e.sender).or_default().push(e.receiver);
        }
        let mut ready: BTreeSet<NodeId> =
            indeg.iter().filter(|(_, d)| **d == 0).map(|(n, _)| *n).collect();
        let mut topo = Vec::with_capacity(nodes.len());
        while let Some(n) = ready.pop_first() {
            topo.push(n);
            for c in children.get(&n).map(Vec::as_slice).unwrap_or(&[]) {
                let d = indeg.get_mut(c).expect("checked");
                *d -= 1;
                if *d == 0 {
                    ready.insert(*c);
                }
            }
        }
        if topo.len() != nodes.len() {
            return Err(Error::Graph("graph contains a cycle".into()));
        }

        let node_index: HashMap<NodeId, usize> =
            topo.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        let edges: Vec<EdgeId> = edge_set.into_iter().collect();
        let edge_index: HashMap<EdgeId, usize> =
            edges.iter().enumerate().map(|(i, e)| (*e, i)).collect();
        let mut in_edges = vec![Vec::new(); topo.len()];
        let mut out_edges = vec![Vec::new(); topo.len()];
        let mut edge_ends = Vec::with_capacity(edges.len());
        for (i, e) in edges.iter().enumerate() {
            let (s, r) = (node_index[&e.sender], node_index[&e.receiver]);
            out_edges[s].push(i);
            in_edges[r].push(i);
            edge_ends.push((s, r));
        }
        let output = topo.iter().position(|n| n.kind == NodeKind::Output).expect("one output");

        // forward reachability from inputs
        let mut from_input = vec![false; topo.len()];
        for (i, n) in topo.iter().enumerate() {
            if n.kind == NodeKind::Input {
                from_input[i] = true;
            }
            if from_input[i] {
                for &e in &out_edges[i] {
                    from_input[edge_ends[e].1] = true;
                }
            }
        }
        if let Some(i) = (0..topo.len()).find(|&i| !from_input[i]) {
            return Err(Error::Graph(format!("node {} unreachable from any input", topo[i])));
        }
        // backward reachability to the output
        let mut to_output = vec![false; topo.len()];
        to_output[output] = true;
        for i in (0..topo.len()).rev() {
            if out_edges[i].iter().any(|&e| to_output[edge_ends[e].1]) {
                to_output[i] = true;
            }
        }
        if let Some(i) = (0..topo.len()).find(|&i| !to_output[i] && !out_edges[i].is_empty()) {
            return Err(Error::Graph(format!("node {} cannot reach the output", topo[i])));
        }
        if let Some(i) = (0..topo.len()).find(|&i| i != output && out_edges[i].is_empty()) {
            return Err(Error::Graph(format!("dead node {}", topo[i])));
        }

        let id = GraphId(fingerprint(&topo, &edges));
        Ok(Self { id, nodes: topo, edges, node_index, edge_index, edge_ends, in_edges, out_edges, output })
    }

    pub fn id(&self) -> GraphId {
        self.id
    }

    /// Nodes in topological order.
    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    /// Edges in canonical order.
    pub fn edges(&self) -> &[EdgeId] {
        &self.edges
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn node_index(&self, node: &NodeId) -> Option<usize> {
        self.node_index.get(node).copied()
    }

    pub fn edge_index(&self, edge: &EdgeId) -> Option<usize> {
        self.edge_index.get(edge).copied()
    }

    /// Resolve an edge, returning [`Error::Unknown`] when absent.
    pub fn require_edge(&self, edge: &EdgeId) -> Result<usize> {
        self.edge_index(edge)
            .ok_or_else(|| Error::Unknown { kind: "edge", name: edge.to_string() })
    }

    /// `(sender, receiver)` node indices of an edge.
    pub fn edge_ends(&self, edge: usize) -> (usize, usize) {
        self.edge_ends[edge]
    }

    pub fn in_edges(&self, node: usize) -> &[usize] {
        &self.in_edges[node]
    }

    pub fn out_edges(&self, node: usize) -> &[usize] {
        &self.out_edges[node]
    }

    pub fn output(&self) -> usize {
        self.output
    }

    /// Receivers in reverse topological order, output first.
    pub fn receivers_output_first(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).rev().filter(move |&i| !self.in_edges[i].is_empty())
    }

    /// Full edge set as a circuit.
    pub fn full_circuit(&self) -> Circuit {
        Circuit { graph: self.id, members: vec![true; self.edges.len()] }
    }

    pub fn empty_circuit(&self) -> Circuit {
        Circuit { graph: self.id, members: vec![false; self.edges.len()] }
    }

    /// Circuit from a list of edges.
    pub fn circuit_from_edges<'a, I>(&self, edges: I) -> Result<Circuit>
    where
        I: IntoIterator<Item = &'a EdgeId>,
    {
        let mut c = self.empty_circuit();
        for e in edges {
            c.members[self.require_edge(e)?] = true;
        }
        Ok(c)
    }

    /// Circuit from edge indices.
    pub fn circuit_from_indices<I: IntoIterator<Item = usize>>(&self, indices: I) -> Result<Circuit> {
        let mut c = self.empty_circuit();
        for i in indices {
            if i >= self.edges.len() {
                return Err(Error::Size(format!("edge index {i} out of range")));
            }
            c.members[i] = true;
        }
        Ok(c)
    }

    /// Circuit from rendered edge names such as `a0.1->m0`.
    pub fn circuit_from_names<S: AsRef<str>>(&self, names: &[S]) -> Result<Circuit> {
        let edges = names.iter().map(|n| n.as_ref().parse()).collect::<Result<Vec<EdgeId>>>()?;
        self.circuit_from_edges(edges.iter())
    }

    /// Every graph edge not in `circuit`.
    pub fn complement(&self, circuit: &Circuit) -> Result<Circuit> {
        self.check(circuit)?;
        Ok(Circuit { graph: self.id, members: circuit.members.iter().map(|m| !m).collect() })
    }

    /// Canonical rendering of a circuit: edge names in canonical edge order.
    pub fn edge_names(&self, circuit: &Circuit) -> Vec<String> {
        circuit.indices().map(|i| self.edges[i].to_string()).collect()
    }

    pub fn check(&self, circuit: &Circuit) -> Result<()> {
        if circuit.graph != self.id || circuit.members.len() != self.edges.len() {
            return Err(Error::GraphMismatch("circuit belongs to another graph".into()));
        }
        Ok(())
    }
}

fn fingerprint(nodes: &[NodeId], edges: &[EdgeId]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |s: &str| {
        for b in s.as_bytes().iter().chain(b"|") {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    for n in nodes {
        eat(&n.to_string());
    }
    for e in edges {
        eat(&e.to_string());
    }
    h
}

// ---------------------------------------------------------------------------
// Circuit
// ---------------------------------------------------------------------------

/// A subset of a graph's edges.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Circuit {
    graph: GraphId,
    members: Vec<bool>,
}

impl Circuit {
    pub fn graph_id(&self) -> GraphId {
        self.graph
    }

    pub fn contains(&self, edge: usize) -> bool {
        self.members[edge]
    }

    pub fn insert(&mut self, edge: usize) {
        self.members[edge] = true;
    }

    pub fn remove(&mut self, edge: usize) {
        self.members[edge] = false;
    }

    /// Member edge indices in canonical order.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().enumerate().filter(|(_, m)| **m).map(|(i, _)| i)
    }

    pub fn len(&self) -> usize {
        self.members.iter().filter(|m| **m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.members.iter().any(|m| *m)
    }

    /// Number of edges in the owning graph.
    pub fn universe(&self) -> usize {
        self.members.len()
    }

    /// `|members| / |edges|`.
    pub fn sparsity_ratio(&self) -> f64 {
        if self.members.is_empty() {
            0.0
        } else {
            self.len() as f64 / self.members.len() as f64
        }
    }

    pub(crate) fn mask(&self) -> &[bool] {
        &self.members
    }

    fn same_graph(&self, other: &Circuit) -> Result<()> {
        if self.graph != other.graph || self.members.len() != other.members.len() {
            return Err(Error::GraphMismatch("circuits belong to different graphs".into()));
        }
        Ok(())
    }

    fn zip_with(&self, other: &Circuit, f: impl Fn(bool, bool) -> bool) -> Result<Circuit> {
        self.same_graph(other)?;
        Ok(Circuit {
            graph: self.graph,
            members: self.members.iter().zip(&other.members).map(|(a, b)| f(*a, *b)).collect(),
        })
    }

    /// Edges in `self` but not in `other`.
    pub fn difference(&self, other: &Circuit) -> Result<Circuit> {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn intersection(&self, other: &Circuit) -> Result<Circuit> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn union(&self, other: &Circuit) -> Result<Circuit> {
        self.zip_with(other, |a, b| a || b)
    }

    /// Size of the symmetric difference.
    pub fn hamming_distance(&self, other: &Circuit) -> Result<usize> {
        self.same_graph(other)?;
        Ok(self.members.iter().zip(&other.members).filter(|(a, b)| a != b).count())
    }

    /// Uniformly sample a sub-circuit whose size is drawn uniformly from
    /// `sizes`.
    pub fn random_subcircuit(&self, sizes: RangeInclusive<usize>, rng: &mut Rng) -> Result<Circuit> {
        let (lo, hi) = (*sizes.start(), *sizes.end());
        let n = self.len();
        if lo > hi || hi > n {
            return Err(Error::Size(format!("size range [{lo},{hi}] invalid for a circuit of {n} edges")));
        }
        let size = rng.gen_range(lo..=hi);
        let members: Vec<usize> = self.indices().collect();
        let mut out = Circuit { graph: self.graph, members: vec![false; self.members.len()] };
        for k in index::sample(rng, n, size).into_iter() {
            out.members[members[k]] = true;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn chain() -> ComputationalGraph {
        let i = NodeId::input(0);
        let a = NodeId::gate(0, 0);
        let b = NodeId::gate(0, 1);
        let o = NodeId::output();
        ComputationalGraph::new(
            vec![o, b, a, i],
            vec![EdgeId::new(i, a), EdgeId::new(i, b), EdgeId::new(a, o), EdgeId::new(b, o)],
        )
        .unwrap()
    }

    #[test]
    fn topo_order_puts_input_first_and_output_last() {
        let g = chain();
        assert_eq!(g.nodes()[0], NodeId::input(0));
        assert_eq!(g.nodes()[g.num_nodes() - 1], NodeId::output());
        assert_eq!(g.output(), g.num_nodes() - 1);
    }

    #[test]
    fn names_round_trip() {
        for s in ["input", "input3", "a5.9", "m8", "m2.1", "g1.0", "output"] {
            assert_eq!(s.parse::<NodeId>().unwrap().to_string(), s);
        }
        let e: EdgeId = "a0.1->m0".parse().unwrap();
        assert_eq!(e.to_string(), "a0.1->m0");
        assert!("q1->m0".parse::<EdgeId>().is_err());
    }

    #[test]
    fn rejects_cycles_and_missing_output() {
        let a = NodeId::gate(0, 0);
        let b = NodeId::gate(0, 1);
        let i = NodeId::input(0);
        let o = NodeId::output();
        let err = ComputationalGraph::new(
            vec![i, a, b, o],
            vec![EdgeId::new(i, a), EdgeId::new(a, b), EdgeId::new(b, a), EdgeId::new(b, o)],
        )
        .unwrap_err();
        assert!(err.to_string().contains("cycle"));
        let err = ComputationalGraph::new(vec![], vec![]).unwrap_err();
        assert!(err.to_string().contains("no output node"));
    }

    #[test]
    fn rejects_unreachable_and_dead_nodes() {
        let i = NodeId::input(0);
        let a = NodeId::gate(0, 0);
        let b = NodeId::gate(0, 1);
        let o = NodeId::output();
        // b has no parent
        assert!(ComputationalGraph::new(
            vec![i, a, b, o],
            vec![EdgeId::new(i, a), EdgeId::new(a, o), EdgeId::new(b, o)]
        )
        .is_err());
        // b has no child
        assert!(ComputationalGraph::new(
            vec![i, a, b, o],
            vec![EdgeId::new(i, a), EdgeId::new(a, o), EdgeId::new(i, b)]
        )
        .is_err());
    }

    #[test]
    fn set_algebra_examples() {
        let g = chain();
        let a = g.circuit_from_indices([0, 1, 2]).unwrap();
        let b = g.circuit_from_indices([1, 2, 3]).unwrap();
        assert_eq!(a.difference(&b).unwrap().indices().collect::<Vec<_>>(), vec![0]);
        assert_eq!(a.intersection(&b).unwrap().indices().collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(a.union(&b).unwrap().len(), 4);
        assert!(a.difference(&a).unwrap().is_empty());
        assert!(g.complement(&g.full_circuit()).unwrap().is_empty());
    }

    #[test]
    fn hamming_examples() {
        let g = chain();
        let c = |ix: &[usize]| g.circuit_from_indices(ix.iter().copied()).unwrap();
        assert_eq!(c(&[0, 1]).hamming_distance(&c(&[0, 1])).unwrap(), 0);
        assert_eq!(c(&[0, 1]).hamming_distance(&c(&[1, 2])).unwrap(), 2);
        assert_eq!(c(&[0]).hamming_distance(&c(&[])).unwrap(), 1);
    }

    #[test]
    fn mismatched_graphs_are_rejected() {
        let g = chain();
        let i = NodeId::input(0);
        let o = NodeId::output();
        let h = ComputationalGraph::new(vec![i, o], vec![EdgeId::new(i, o)]).unwrap();
        assert!(g.full_circuit().union(&h.full_circuit()).is_err());
        assert!(g.complement(&h.full_circuit()).is_err());
    }

    #[test]
    fn random_subcircuit_bounds() {
        let g = chain();
        let full = g.full_circuit();
        assert!(full.random_subcircuit(0..=0, &mut seeded(1)).unwrap().is_empty());
        assert!(full.random_subcircuit(5..=6, &mut seeded(1)).is_err());
        let a = full.random_subcircuit(2..=3, &mut seeded(7)).unwrap();
        let b = full.random_subcircuit(2..=3, &mut seeded(7)).unwrap();
        assert_eq!(a, b);
        assert!((2..=3).contains(&a.len()));
    }
}
