// SPDX-License-Identifier: MIT OR Apache-2.0

//! Crate-wide error type.

use thiserror::Error;

/// Every fallible operation in the crate returns this error.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Graph construction failed a structural invariant.
    #[error("invalid graph: {0}")]
    Graph(String),

    /// Two circuits (or a circuit and a cache) refer to different graphs.
    #[error("graph mismatch: {0}")]
    GraphMismatch(String),

    /// An edge or node name did not resolve in the graph.
    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    /// A sampling range or size request cannot be satisfied.
    #[error("size out of range: {0}")]
    Size(String),

    /// Model specification is inconsistent.
    #[error("invalid model spec: {0}")]
    Spec(String),

    /// Task or dataset generation failed.
    #[error("task: {0}")]
    Task(String),

    /// Input shape or cache shape did not match the model.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Metric is not valid for the requested use.
    #[error("metric: {0}")]
    Metric(String),

    /// Discovery configuration is invalid or a run failed.
    #[error("discovery: {0}")]
    Discovery(String),

    /// Training did not reach the accuracy floor.
    #[error("training failed: {0}")]
    Training(String),

    /// Evaluation precondition failed.
    #[error("evaluation: {0}")]
    Evaluation(String),

    /// Binary or line-delimited serialization failure.
    #[error("serialization: {0}")]
    Serialization(String),
}

/// Result alias using [`Error`].
pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
