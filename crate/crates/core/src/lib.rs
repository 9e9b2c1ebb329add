// SPDX-License-Identifier: MIT OR Apache-2.0

//! Logic-gate-aware circuit discovery on small computational graphs.
//!
//! A model is a DAG of components whose edges carry sender outputs into
//! receiver inputs. Circuits are edge subsets. Discovery runs under the
//! noising (Ns) or denoising (Dn) strategy, or both, and the two circuits
//! are compared edge by edge to label AND, OR and ADDER gates.

pub mod discovery;
pub mod error;
pub mod evaluation;
pub mod gates;
pub mod graph;
pub mod intervention;
pub mod metric;
pub mod model;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use discovery::{Algorithm, DiscoveryConfig, EdgeScores, MaskParams};
pub use evaluation::{EvalReport, OracleMode, OracleScope};
pub use gates::{classify_gates, group_gates, Gate, GateLabeling, MisalignmentReport, SamplerConfig};
pub use graph::{Circuit, ComputationalGraph, EdgeId, GraphId, NodeId, NodeKind};
pub use intervention::{AblationMode, RunSet, Strategy};
pub use metric::{LabelPair, OutputDistance, OutputLoss};
pub use model::{
    build_graph, make_gate_network, make_gate_toy, make_task, make_trained_transformer, ActivationCache,
    EdgeGradients, EdgeModel, GateKind, GateNetworkSpec, GateSpec, Model, ModelSpec, TaskDataset, TaskPair,
    TaskSpec, InductionCorruption, ToySpec, TrainConfig, Transformer, TransformerSpec,
};
pub use scalar::Scalar;

/// Engine version recorded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type ModelF64 = Model<f64>;
pub type ModelF32 = Model<f32>;
pub type TransformerF64 = Transformer<f64>;
pub type ScalarNetworkF64 = model::ScalarNetwork<f64>;
pub type ActivationCacheF64 = ActivationCache<f64>;
