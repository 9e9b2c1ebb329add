// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic tasks as clean / corrupted input pairs.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// One clean input with its minimally perturbed counterpart.
///
/// `corrupted` is absent when the counterpart is an ablation rather than an
/// input, as for the zero-ablated toys.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPair {
    pub clean: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrupted: Option<Vec<u32>>,
    pub clean_label: usize,
    pub corrupted_label: usize,
}

/// Nonempty list of pairs with distinct labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<TaskPair>", into = "Vec<TaskPair>")]
pub struct TaskDataset {
    pairs: Vec<TaskPair>,
}

impl TaskDataset {
    pub fn new(pairs: Vec<TaskPair>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Task("dataset is empty".into()));
        }
        if let Some(i) = pairs.iter().position(|p| p.clean_label == p.corrupted_label) {
            return Err(Error::Task(format!("pair {i} has identical clean and corrupted labels")));
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[TaskPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// The first `n` pairs.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        Self::new(self.pairs.iter().take(n).cloned().collect())
    }

    /// Same pairs in a different order.
    pub fn permuted(&self, seed: u64) -> Self {
        let mut pairs = self.pairs.clone();
        pairs.shuffle(&mut rng::seeded(seed));
        Self { pairs }
    }

    /// One line of JSON per pair.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for p in &self.pairs {
            out.push_str(&serde_json::to_string(p)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let pairs = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<Vec<TaskPair>, _>>()?;
        Self::new(pairs)
    }
}

impl TryFrom<Vec<TaskPair>> for TaskDataset {
    type Error = Error;

    fn try_from(pairs: Vec<TaskPair>) -> Result<Self> {
        Self::new(pairs)
    }
}

impl From<TaskDataset> for Vec<TaskPair> {
    fn from(d: TaskDataset) -> Self {
        d.pairs
    }
}

/// Task family and its parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TaskSpec {
    /// `... A B ... A` with label `B`.
    Induction {
        vocab_size: usize,
        seq_len: usize,
        n_pairs: usize,
        #[serde(default)]
        corruption: InductionCorruption,
    },
    /// Label is the first token; the corrupted input changes it.
    Copy { vocab_size: usize, seq_len: usize, n_pairs: usize },
    /// Every assignment of `sources` bits against the all-zero input.
    GateTruthTable { sources: usize },
    /// The all-ones input against the all-zero input.
    GateClean { sources: usize },
    /// A single zero input for models whose counterpart is an ablation.
    ZeroInput,
}

/// How an induction pair's corrupted input is made.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InductionCorruption {
    /// Replace `B` by another token; the corrupted label is that token.
    #[default]
    SwapLabel,
    /// Replace the first `A`, so the final token has no earlier match. The
    /// corrupted label is token 0, which never appears in any sequence.
    BreakMatch,
}

impl TaskSpec {
    /// Induction task with the default corruption.
    pub fn induction(vocab_size: usize, seq_len: usize, n_pairs: usize) -> Self {
        Self::Induction { vocab_size, seq_len, n_pairs, corruption: InductionCorruption::SwapLabel }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Induction { .. } => "induction",
            Self::Copy { .. } => "copy",
            Self::GateTruthTable { .. } => "gate-truth-table",
            Self::GateClean { .. } => "gate-clean",
            Self::ZeroInput => "zero-input",
        }
    }
}

fn random_token_except(r: &mut rng::Rng, vocab: usize, avoid: &[u32]) -> u32 {
    loop {
        let t = r.gen_range(0..vocab as u32);
        if !avoid.contains(&t) {
            return t;
        }
    }
}

/// Generate the dataset for `spec`, deterministically in `seed`.
pub fn make_task(spec: &TaskSpec, seed: u64) -> Result<TaskDataset> {
    let mut r = rng::seeded(rng::derive_str(seed, spec.name()));
    let pairs = match *spec {
        TaskSpec::Induction { vocab_size, seq_len, n_pairs, corruption } => {
            let reserved = usize::from(corruption == InductionCorruption::BreakMatch);
            if vocab_size < 3 + reserved {
                return Err(Error::Task(
                    "induction needs at least 3 usable tokens to produce distinct corrupted labels".into(),
                ));
            }
            if seq_len < 3 {
                return Err(Error::Task("induction needs sequences of length 3 or more".into()));
            }
            let low = reserved as u32;
            let draw = |r: &mut rng::Rng, avoid: &[u32]| loop {
                let t = r.gen_range(low..vocab_size as u32);
                if !avoid.contains(&t) {
                    return t;
                }
            };
            (0..n_pairs)
                .map(|_| {
                    let a = draw(&mut r, &[]);
                    let b = draw(&mut r, &[a]);
                    let p = r.gen_range(0..seq_len - 2);
                    let mut clean: Vec<u32> = (0..seq_len).map(|_| draw(&mut r, &[a])).collect();
                    clean[p] = a;
                    clean[p + 1] = b;
                    clean[seq_len - 1] = a;
                    let mut corrupted = clean.clone();
                    let corrupted_label = match corruption {
                        InductionCorruption::SwapLabel => {
                            let b2 = draw(&mut r, &[a, b]);
                            corrupted[p + 1] = b2;
                            b2 as usize
                        }
                        InductionCorruption::BreakMatch => {
                            corrupted[p] = draw(&mut r, &[a]);
                            0
                        }
                    };
                    TaskPair { clean, corrupted: Some(corrupted), clean_label: b as usize, corrupted_label }
                })
                .collect()
        }
        TaskSpec::Copy { vocab_size, seq_len, n_pairs } => {
            if vocab_size < 2 {
                return Err(Error::Task("copy needs at least 2 tokens".into()));
            }
            if seq_len == 0 {
                return Err(Error::Task("copy needs nonempty sequences".into()));
            }
            (0..n_pairs)
                .map(|_| {
                    let clean: Vec<u32> = (0..seq_len).map(|_| r.gen_range(0..vocab_size as u32)).collect();
                    let mut corrupted = clean.clone();
                    corrupted[0] = random_token_except(&mut r, vocab_size, &[clean[0]]);
                    TaskPair {
                        clean_label: clean[0] as usize,
                        corrupted_label: corrupted[0] as usize,
                        clean,
                        corrupted: Some(corrupted),
                    }
                })
                .collect()
        }
        TaskSpec::GateTruthTable { sources } => {
            if sources == 0 || sources > 20 {
                return Err(Error::Task("truth tables need 1 to 20 sources".into()));
            }
            (0..1u32 << sources)
                .map(|bits| TaskPair {
                    clean: (0..sources).map(|i| (bits >> i) & 1).collect(),
                    corrupted: Some(vec![0; sources]),
                    clean_label: 1,
                    corrupted_label: 0,
                })
                .collect()
        }
        TaskSpec::GateClean { sources } => vec![TaskPair {
            clean: vec![1; sources],
            corrupted: Some(vec![0; sources]),
            clean_label: 1,
            corrupted_label: 0,
        }],
        TaskSpec::ZeroInput => {
            vec![TaskPair { clean: vec![0], corrupted: None, clean_label: 1, corrupted_label: 0 }]
        }
    };
    TaskDataset::new(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn induction_pairs_have_distinct_labels() {
        let spec = TaskSpec::induction(20, 12, 256);
        let d = make_task(&spec, 3).unwrap();
        assert_eq!(d.len(), 256);
        for p in d.pairs() {
            assert_ne!(p.clean_label, p.corrupted_label);
            let a = *p.clean.last().unwrap();
            let pos = p.clean.iter().position(|&t| t == a).unwrap();
            assert_eq!(p.clean[pos + 1] as usize, p.clean_label);
            let c = p.corrupted.as_ref().unwrap();
            assert_eq!(c[pos + 1] as usize, p.corrupted_label);
            assert_eq!(p.clean.iter().zip(c).filter(|(x, y)| x != y).count(), 1);
        }
        assert_eq!(make_task(&spec, 3).unwrap(), d);
    }

    #[test]
    fn break_match_removes_the_earlier_occurrence() {
        let spec = TaskSpec::Induction {
            vocab_size: 10,
            seq_len: 8,
            n_pairs: 200,
            corruption: InductionCorruption::BreakMatch,
        };
        for p in make_task(&spec, 1).unwrap().pairs() {
            let c = p.corrupted.as_ref().unwrap();
            assert!(p.clean.iter().chain(c).all(|&t| t != 0));
            let a = *c.last().unwrap();
            assert!(!c[..c.len() - 1].contains(&a));
            assert_eq!(p.corrupted_label, 0);
            assert_eq!(p.clean.iter().zip(c).filter(|(x, y)| x != y).count(), 1);
        }
        let tiny = TaskSpec::Induction { vocab_size: 3, seq_len: 4, n_pairs: 1, corruption: InductionCorruption::BreakMatch };
        assert!(make_task(&tiny, 0).is_err());
    }

    #[test]
    fn truth_table_enumerates_assignments() {
        let d = make_task(&TaskSpec::GateTruthTable { sources: 4 }, 0).unwrap();
        assert_eq!(d.len(), 16);
    }

    #[test]
    fn small_vocabularies_are_rejected() {
        assert!(make_task(&TaskSpec::Copy { vocab_size: 1, seq_len: 4, n_pairs: 2 }, 0).is_err());
        assert!(make_task(&TaskSpec::induction(2, 4, 2), 0).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let d = make_task(&TaskSpec::Copy { vocab_size: 5, seq_len: 4, n_pairs: 3 }, 1).unwrap();
        let text = d.to_jsonl().unwrap();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(TaskDataset::from_jsonl(&text).unwrap(), d);
        assert!(TaskDataset::from_jsonl("").is_err());
    }
}
