use super::partition::HeterogeneityConfig;
use super::task::TaskSpec;
use crate::error::{Error, Result};
use crate::merge::MergeConfig;
use crate::nn::TrainConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeMethod {
    NaiveAverage,
    /// Weight matching of every model against the aligned average of the others.
    WeightMatch,
    FleetMerge,
    /// No merging: agent 0's model.
    SingleDataset,
}

impl MergeMethod {
    pub fn name(self) -> &'static str {
        match self {
            Self::NaiveAverage => "naive_average",
            Self::WeightMatch => "weight_match",
            Self::FleetMerge => "fleet_merge",
            Self::SingleDataset => "single_dataset",
        }
    }
}

impl std::str::FromStr for MergeMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" | "naive_average" => Ok(Self::NaiveAverage),
            "weight_match" | "git_rebasin" => Ok(Self::WeightMatch),
            "fleet" | "fleet_merge" => Ok(Self::FleetMerge),
            "single" | "single_dataset" => Ok(Self::SingleDataset),
            other => Err(Error::Config(format!("unknown merge method `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    /// Train to completion, merge once.
    OneShot,
    /// Merge and broadcast every `merge_every` local epochs.
    Iterative,
}

/// How the agents' starting weights relate to each other.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    Independent,
    Shared,
    /// Shared start, then each agent other than 0 is hidden-unit permuted by a secret
    /// random permutation: after training in one-shot runs, at the start otherwise.
    Planted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub kind: ProtocolKind,
    /// Local epochs between merges; 0 never merges before the end.
    pub merge_every: usize,
    /// Fraction of agents whose models enter each merge.
    pub participation_fraction: f64,
    pub init: InitScheme,
    /// Round cap for the weight-matching merge.
    pub weight_match_rounds: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            kind: ProtocolKind::OneShot,
            merge_every: 1,
            participation_fraction: 1.0,
            init: InitScheme::Independent,
            weight_match_rounds: 10,
        }
    }
}

/// Full experiment description, read from TOML with `[task]`, `[heterogeneity]`,
/// `[train]`, `[merge]` and `[protocol]` sections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: MergeMethod,
    /// Root seed; every agent, round and sampler seed is derived from it.
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub task: TaskSpec,
    pub heterogeneity: HeterogeneityConfig,
    pub train: TrainConfig,
    pub merge: MergeConfig,
    pub protocol: ProtocolConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            method: MergeMethod::FleetMerge,
            seed: 0,
            output: None,
            task: TaskSpec::default(),
            heterogeneity: HeterogeneityConfig::default(),
            train: TrainConfig::default(),
            merge: MergeConfig::default(),
            protocol: ProtocolConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.heterogeneity.validate()?;
        self.merge.validate()?;
        if self.train.batch_size == 0 || !(self.train.lr.is_finite() && self.train.lr >= 0.0) {
            return Err(Error::Config("train.batch_size must be positive and train.lr finite and nonnegative".into()));
        }
        let f = self.protocol.participation_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::Config(format!("protocol.participation_fraction must lie in (0, 1], got {f}")));
        }
        Ok(())
    }

    /// Parses and validates; syntax and unknown-field errors carry the line and column.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml_string().unwrap();
        for section in ["[task]", "[heterogeneity]", "[train]", "[merge]", "[protocol]"] {
            assert!(text.contains(section), "missing {section}");
        }
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = ExperimentConfig::from_toml_str("method = \"naive_average\"\n[heterogeneity]\nalpha = 0.1\n").unwrap();
        assert_eq!(cfg.method, MergeMethod::NaiveAverage);
        assert_eq!(cfg.heterogeneity.alpha, 0.1);
        assert_eq!(cfg.heterogeneity.agents, 5);
    }

    #[test]
    fn unknown_field_reports_location() {
        let err = ExperimentConfig::from_toml_str("[train]\nepochs = 3\nlearning_rate = 0.1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("learning_rate") && msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let err = ExperimentConfig::from_toml_str("[heterogeneity]\nalpha = -1.0\n").unwrap_err();
        assert!(err.to_string().contains("heterogeneity.alpha"));
    }

    #[test]
    fn method_names_parse() {
        assert_eq!("naive".parse::<MergeMethod>().unwrap(), MergeMethod::NaiveAverage);
        assert!("average_harder".parse::<MergeMethod>().is_err());
    }
}
