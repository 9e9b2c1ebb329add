// SPDX-License-Identifier: MIT OR Apache-2.0

//! Output distances and differentiable output losses.
//!
//! A distance compares a reference output with a patched output. Scalar-sink
//! models emit a single logit; the KL route maps a sink value `v` to the
//! two-class logits `[v, 0]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{argmax, log_softmax, softmax, Scalar};

/// Distance between two model outputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutputDistance {
    /// `KL(reference || patched)` over the softmax of the logits.
    #[serde(rename = "kl")]
    Kl,
    /// `|reference - patched|` of a scalar sink.
    #[serde(rename = "sink")]
    Sink,
    /// Absolute change in `logit[clean_label] - logit[corrupted_label]`.
    #[serde(rename = "logitdiff")]
    LogitDiff,
    /// 1 when the argmax prediction flips, else 0.
    #[serde(rename = "acc")]
    Accuracy,
}

impl OutputDistance {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Kl => "kl",
            Self::Sink => "sink",
            Self::LogitDiff => "logitdiff",
            Self::Accuracy => "acc",
        }
    }

    pub fn is_differentiable(&self) -> bool {
        !matches!(self, Self::Accuracy)
    }
}

impl fmt::Display for OutputDistance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OutputDistance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kl" => Ok(Self::Kl),
            "sink" => Ok(Self::Sink),
            "logitdiff" => Ok(Self::LogitDiff),
            "acc" => Ok(Self::Accuracy),
            other => Err(Error::Metric(format!("unknown metric `{other}`"))),
        }
    }
}

/// Labels consulted by label-aware metrics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabelPair {
    pub clean: usize,
    pub corrupted: usize,
}

fn as_distribution_logits<S: Scalar>(logits: &[S]) -> Vec<S> {
    if logits.len() == 1 {
        vec![logits[0], S::zero()]
    } else {
        logits.to_vec()
    }
}

/// `KL(p || q)` with `p`, `q` the softmax of the given logits.
pub fn kl_divergence<S: Scalar>(p_logits: &[S], q_logits: &[S]) -> S {
    let p_l = as_distribution_logits(p_logits);
    let q_l = as_distribution_logits(q_logits);
    let lp = log_softmax(&p_l);
    let lq = log_softmax(&q_l);
    let kl = lp
        .iter()
        .zip(&lq)
        .map(|(a, b)| a.exp() * (*a - *b))
        .fold(S::zero(), |acc, x| acc + x);
    if kl < S::zero() {
        S::zero()
    } else {
        kl
    }
}

fn logit_diff<S: Scalar>(logits: &[S], labels: LabelPair) -> Result<S> {
    let n = logits.len();
    if labels.clean >= n || labels.corrupted >= n {
        return Err(Error::Metric(format!("label out of range for {n} logits")));
    }
    Ok(logits[labels.clean] - logits[labels.corrupted])
}

/// Distance between a reference output and a patched output.
pub fn distance<S: Scalar>(
    metric: OutputDistance,
    reference: &[S],
    patched: &[S],
    labels: LabelPair,
) -> Result<S> {
    if reference.len() != patched.len() {
        return Err(Error::Shape("logit lengths differ".into()));
    }
    match metric {
        OutputDistance::Kl => Ok(kl_divergence(reference, patched)),
        OutputDistance::Sink => {
            if reference.len() != 1 {
                return Err(Error::Metric("sink distance needs a scalar sink".into()));
            }
            Ok((reference[0] - patched[0]).abs())
        }
        OutputDistance::LogitDiff => {
            Ok((logit_diff(reference, labels)? - logit_diff(patched, labels)?).abs())
        }
        OutputDistance::Accuracy => {
            Ok(if argmax(reference) == argmax(patched) { S::zero() } else { S::one() })
        }
    }
}

/// A differentiable scalar function of the output logits.
#[derive(Clone, Debug, PartialEq)]
pub enum OutputLoss<S> {
    /// The sink value itself.
    SinkValue,
    /// `logit[pos] - logit[neg]`.
    LogitDiff { pos: usize, neg: usize },
    /// `-log softmax(logits)[label]`.
    Nll { label: usize },
    /// `distance(reference, logits)` for a differentiable distance.
    Distance { metric: OutputDistance, reference: Vec<S>, labels: LabelPair },
}

impl<S: Scalar> OutputLoss<S> {
    /// First-order proxy used by attribution scoring.
    ///
    /// Distances vanish with zero gradient at the unpatched point, so
    /// scoring differentiates a task quantity instead: the sink value, or
    /// the clean-minus-corrupted label logit difference. The label
    /// log-likelihood is avoided because it saturates on confident models.
    pub fn attribution_proxy(metric: OutputDistance, label: usize, other: usize) -> Result<Self> {
        match metric {
            OutputDistance::Sink => Ok(Self::SinkValue),
            OutputDistance::LogitDiff => Ok(Self::LogitDiff { pos: label, neg: other }),
            OutputDistance::Kl => Ok(Self::LogitDiff { pos: label, neg: other }),
            OutputDistance::Accuracy => {
                Err(Error::Metric("accuracy is not differentiable".into()))
            }
        }
    }

    /// Distance to a fixed reference output.
    pub fn distance_to(metric: OutputDistance, reference: Vec<S>, labels: LabelPair) -> Result<Self> {
        if !metric.is_differentiable() {
            return Err(Error::Metric("accuracy is not differentiable".into()));
        }
        Ok(Self::Distance { metric, reference, labels })
    }

    /// Loss value and gradient with respect to the logits.
    pub fn value_and_grad(&self, logits: &[S]) -> Result<(S, Vec<S>)> {
        let n = logits.len();
        let mut grad = vec![S::zero(); n];
        match self {
            Self::SinkValue => {
                if n != 1 {
                    return Err(Error::Metric("sink value needs a scalar sink".into()));
                }
                grad[0] = S::one();
                Ok((logits[0], grad))
            }
            Self::LogitDiff { pos, neg } => {
                let l = as_distribution_logits(logits);
                let v = logit_diff(&l, LabelPair { clean: *pos, corrupted: *neg })?;
                let mut g = vec![S::zero(); l.len()];
                g[*pos] += S::one();
                g[*neg] -= S::one();
                Ok((v, g.into_iter().take(n).collect()))
            }
            Self::Nll { label } => {
                let l = as_distribution_logits(logits);
                if *label >= l.len() {
                    return Err(Error::Metric("label out of range".into()));
                }
                let p = softmax(&l);
                let v = -log_softmax(&l)[*label];
                let mut g: Vec<S> = p;
                g[*label] -= S::one();
                Ok((v, g.into_iter().take(n).collect()))
            }
            Self::Distance { metric, reference, labels } => {
                let v = distance(*metric, reference, logits, *labels)?;
                match metric {
                    OutputDistance::Kl => {
                        // d/dq_logits KL(p||softmax(q)) = softmax(q) - p
                        let p = softmax(&as_distribution_logits(reference));
                        let q = softmax(&as_distribution_logits(logits));
                        for i in 0..n {
                            grad[i] = q[i] - p[i];
                        }
                    }
                    OutputDistance::Sink => {
                        grad[0] = sign(logits[0] - reference[0]);
                    }
                    OutputDistance::LogitDiff => {
                        let s = sign(logit_diff(logits, *labels)? - logit_diff(reference, *labels)?);
                        grad[labels.clean] += s;
                        grad[labels.corrupted] -= s;
                    }
                    OutputDistance::Accuracy => unreachable!("rejected at construction"),
                }
                Ok((v, grad))
            }
        }
    }
}

fn sign<S: Scalar>(x: S) -> S {
    if x > S::zero() {
        S::one()
    } else if x < S::zero() {
        -S::one()
    } else {
        S::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LABELS: LabelPair = LabelPair { clean: 0, corrupted: 1 };

    #[test]
    fn metric_names_round_trip() {
        for m in ["kl", "sink", "logitdiff", "acc"] {
            assert_eq!(m.parse::<OutputDistance>().unwrap().name(), m);
        }
        assert!("l2".parse::<OutputDistance>().is_err());
    }

    #[test]
    fn kl_of_identical_outputs_is_zero() {
        let l = [0.1f64, 2.0, -1.0];
        assert_eq!(kl_divergence(&l, &l), 0.0);
        assert!(kl_divergence(&l, &[0.0, 0.0, 0.0]) > 0.0);
    }

    #[test]
    fn sink_distance_requires_scalar() {
        assert_eq!(distance(OutputDistance::Sink, &[2.5f64], &[1.0], LABELS).unwrap(), 1.5);
        assert!(distance(OutputDistance::Sink, &[1.0f64, 0.0], &[1.0, 0.0], LABELS).is_err());
    }

    #[test]
    fn accuracy_is_rejected_as_loss() {
        assert!(OutputLoss::<f64>::attribution_proxy(OutputDistance::Accuracy, 0, 1).is_err());
        assert!(OutputLoss::<f64>::distance_to(OutputDistance::Accuracy, vec![0.0], LABELS).is_err());
    }

    fn fd_check(loss: &OutputLoss<f64>, at: &[f64]) {
        let (_, g) = loss.value_and_grad(at).unwrap();
        for i in 0..at.len() {
            let h = 1e-6;
            let mut up = at.to_vec();
            let mut dn = at.to_vec();
            up[i] += h;
            dn[i] -= h;
            let fd = (loss.value_and_grad(&up).unwrap().0 - loss.value_and_grad(&dn).unwrap().0)
                / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6, "coord {i}: fd {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let at = [0.3, -0.7, 1.1];
        fd_check(&OutputLoss::Nll { label: 2 }, &at);
        fd_check(&OutputLoss::LogitDiff { pos: 0, neg: 1 }, &at);
        fd_check(
            &OutputLoss::distance_to(OutputDistance::Kl, vec![1.0, 0.0, -1.0], LABELS).unwrap(),
            &at,
        );
        fd_check(
            &OutputLoss::distance_to(OutputDistance::LogitDiff, vec![3.0, 0.0, 0.0], LABELS).unwrap(),
            &at,
        );
        fd_check(&OutputLoss::distance_to(OutputDistance::Kl, vec![0.4], LABELS).unwrap(), &[1.3]);
    }
}
