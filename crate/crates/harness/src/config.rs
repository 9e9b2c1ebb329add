// SPDX-License-Identifier: MIT OR Apache-2.0

//! Experiment configuration files.

use std::path::{Path, PathBuf};

use gatecircuits::discovery::GreedySizing;
use gatecircuits::gates::DEFAULT_M;
use gatecircuits::model::PlantedNetwork;
use gatecircuits::{
    make_gate_toy, AblationMode, Algorithm, GateKind, GateNetworkSpec, MaskParams, ModelSpec, OutputDistance,
    SamplerConfig, Strategy, TaskSpec, TrainConfig,
};
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

pub const CONFIG_VERSION: u32 = 1;

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "GATECIRCUITS_SEED";

/// Named models that need no explicit spec.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Fig2,
    AndToy,
    OrToy,
    AdderToy,
    /// Small random planted network, built from the run seed.
    PlantedSmall,
    /// Three gain levels of 2-input AND, OR and ADDER gates.
    PlantedGraded,
}

impl Preset {
    pub fn spec(self, seed: u64) -> gatecircuits::Result<ModelSpec> {
        Ok(match self {
            Self::Fig2 => ModelSpec::GateNetwork(GateNetworkSpec::fig2()),
            Self::AndToy => make_gate_toy(GateKind::And).0,
            Self::OrToy => make_gate_toy(GateKind::Or).0,
            Self::AdderToy => make_gate_toy(GateKind::Adder).0,
            Self::PlantedSmall => ModelSpec::GateNetwork(PlantedNetwork::random_small(seed).build(seed)?),
            Self::PlantedGraded => ModelSpec::GateNetwork(PlantedNetwork::graded(3, 2).build(seed)?),
        })
    }
}

/// Which measurements each cell records.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Evaluation {
    Faithfulness,
    Completeness,
    IncompletenessSampled,
    Randomness,
    Gates,
    Misalignment,
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    pub incompleteness_samples: usize,
    pub incompleteness_sizes: (usize, usize),
    pub randomness_runs: usize,
    /// Repeats per receiver for the one-vs-two-edge ablations.
    pub ablation_repeats: usize,
    /// Relative width of the Dn size sweep around each k.
    pub misalignment_spread: f64,
    pub misalignment_m: f64,
    pub sampler: SamplerConfig,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            incompleteness_samples: 30,
            incompleteness_sizes: (2, 5),
            randomness_runs: 30,
            ablation_repeats: 30,
            misalignment_spread: 0.4,
            misalignment_m: DEFAULT_M,
            sampler: SamplerConfig::default(),
        }
    }
}

/// How a trained transformer is fitted before discovery.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Training {
    /// Size of the training draw of the task.
    #[serde(default = "default_train_pairs")]
    pub pairs: usize,
    #[serde(default)]
    pub optimizer: TrainConfig,
}

fn default_train_pairs() -> usize {
    512
}

impl Default for Training {
    fn default() -> Self {
        Self { pairs: default_train_pairs(), optimizer: TrainConfig::default() }
    }
}

/// One experiment grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    pub task: TaskSpec,
    /// Pairs used for discovery and evaluation; trained models are fitted
    /// on a separate draw.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<Training>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablation: Option<AblationMode>,
    pub metric: OutputDistance,
    pub algorithms: Vec<Algorithm>,
    pub strategies: Vec<Strategy>,
    pub k_grid: Vec<usize>,
    #[serde(default)]
    pub evaluations: Vec<Evaluation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<MaskParams>,
    #[serde(default)]
    pub greedy_sizing: GreedySizing,
    #[serde(default)]
    pub params: EvalParams,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(vec![e.to_string()]))
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Config(vec![e.to_string()]))
    }

    /// Read a config, then apply the seed override from the environment.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(vec![format!("{}: {e}", path.display())]))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.apply_env()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) -> Result<(), HarnessError> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| HarnessError::Config(vec![format!("{SEED_ENV}: `{v}` is not an unsigned integer")]))?;
        }
        Ok(())
    }

    /// The model to run, from the preset or the explicit spec.
    pub fn model_spec(&self) -> Result<ModelSpec, HarnessError> {
        match (&self.preset, &self.model) {
            (Some(p), None) => p.spec(self.seed).map_err(|e| HarnessError::Config(vec![format!("preset: {e}")])),
            (None, Some(m)) => Ok(m.clone()),
            _ => Err(HarnessError::Config(vec!["exactly one of `preset` and `model` must be set".into()])),
        }
    }

    pub fn wants(&self, e: Evaluation) -> bool {
        self.evaluations.contains(&e)
    }

    /// Every violated field, or `Ok`.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let mut errs = Vec::new();
        if self.version != CONFIG_VERSION {
            errs.push(format!("version: unsupported version {} (expected {CONFIG_VERSION})", self.version));
        }
        match self.model_spec() {
            Ok(spec) => {
                if let Err(e) = spec.validate() {
                    errs.push(format!("model: {e}"));
                }
                let trained = matches!(spec, ModelSpec::TrainedTransformer(_));
                match &self.training {
                    None if trained => errs.push("training: trained transformers need a [training] table".into()),
                    Some(_) if !trained => errs.push("training: only trained transformers are trained".into()),
                    Some(t) if t.pairs == 0 => errs.push("training.pairs: must be at least 1".into()),
                    _ => {}
                }
            }
            Err(HarnessError::Config(v)) => errs.extend(v),
            Err(e) => errs.push(e.to_string()),
        }
        for (name, empty) in [
            ("algorithms", self.algorithms.is_empty()),
            ("strategies", self.strategies.is_empty()),
            ("k_grid", self.k_grid.is_empty()),
        ] {
            if empty {
                errs.push(format!("{name}: grid must be nonempty"));
            }
        }
        if self.algorithms.iter().any(|a| *a != Algorithm::Greedy) && !self.metric.is_differentiable() {
            errs.push(format!("metric: `{}` is not differentiable", self.metric.name()));
        }
        let p = &self.params;
        if self.wants(Evaluation::IncompletenessSampled) {
            if p.incompleteness_samples == 0 {
                errs.push("params.incompleteness_samples: must be at least 1".into());
            }
            if p.incompleteness_sizes.0 == 0 || p.incompleteness_sizes.0 > p.incompleteness_sizes.1 {
                errs.push("params.incompleteness_sizes: need 1 <= min <= max".into());
            }
        }
        if self.wants(Evaluation::Randomness) && p.randomness_runs < 2 {
            errs.push("params.randomness_runs: need at least 2 runs".into());
        }
        if self.wants(Evaluation::Misalignment) && !(0.0..1.0).contains(&p.misalignment_spread) {
            errs.push("params.misalignment_spread: must lie in [0, 1)".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Config(errs))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const AND_TOY: &str = r#"
version = 1
seed = 0
preset = "and-toy"
metric = "sink"
algorithms = ["greedy", "linear", "mask"]
strategies = ["ns"]
k_grid = [2]
evaluations = ["faithfulness", "completeness"]

[task]
kind = "zero-input"
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_toml(AND_TOY).unwrap();
        cfg.validate().unwrap();
        let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn validation_lists_every_field() {
        let mut cfg = ExperimentConfig::from_toml(AND_TOY).unwrap();
        cfg.version = 7;
        cfg.k_grid.clear();
        cfg.strategies.clear();
        let HarnessError::Config(errs) = cfg.validate().unwrap_err() else { panic!() };
        assert_eq!(errs.len(), 3, "{errs:?}");
        assert!(errs.iter().any(|e| e.starts_with("version")));
        assert!(errs.iter().any(|e| e.starts_with("k_grid")));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("bogus = 1\n{AND_TOY}");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }
}
