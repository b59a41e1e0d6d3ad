//! Run configuration loaded from TOML. Every key is optional and defaults
//! to the standard experiment settings; unknown keys are rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::SplitSpec;
use crate::error::{Error, Result};
use crate::io::DataSchema;
use crate::nn::TrainConfig;
use crate::preprocess::PreprocessConfig;
use crate::segmentation::Normalization;
use crate::seeds::derive_seed;
use crate::synth::SynthConfig;

/// Rows on which the healthy indicator statistics are fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsSource {
    Validation,
    TrainAndValidation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    pub n_wait: usize,
    pub stats_source: StatsSource,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            n_wait: 3,
            stats_source: StatsSource::Validation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub realisations: usize,
    /// Whether units without any fault take part in training.
    pub train_on_healthy_units: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            realisations: 5,
            train_on_healthy_units: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    /// Cycles after the alarm at which signatures are taken.
    pub snapshot_k: usize,
    /// Silhouette curve covers k = 0..=k_max.
    pub k_max: usize,
    pub checkpoints: Vec<usize>,
    pub normalization: Normalization,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            snapshot_k: 10,
            k_max: 34,
            checkpoints: vec![10, 20, 30, 40],
            normalization: Normalization::Max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every other seed is derived from it.
    pub seed: u64,
    pub preprocess: PreprocessConfig,
    pub split: SplitSpec,
    pub train: TrainConfig,
    pub detect: DetectConfig,
    pub experiment: ExperimentConfig,
    pub segment: SegmentConfig,
    pub synth: SynthConfig,
    pub schema: DataSchema,
}

const SYNTH_STREAM: u64 = 1;
const SPLIT_STREAM: u64 = 100;
const TRAIN_STREAM: u64 = 200;

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        self.split.validate()?;
        self.train.validate()?;
        self.synth_config().validate()?;
        self.schema.validate()?;
        if self.detect.n_wait == 0 {
            return Err(Error::ConfigInvalid("detect.n_wait must be at least 1".into()));
        }
        if self.experiment.realisations == 0 {
            return Err(Error::ConfigInvalid("experiment.realisations must be at least 1".into()));
        }
        Ok(())
    }

    /// Generator settings with the derived seed and the split's healthy
    /// window.
    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: derive_seed(self.seed, SYNTH_STREAM),
            healthy_cycles: self.split.healthy_cycles_per_unit,
            ..self.synth.clone()
        }
    }

    pub fn split_seed(&self, realisation: usize) -> u64 {
        derive_seed(self.seed, SPLIT_STREAM + realisation as u64)
    }

    pub fn train_seed(&self, realisation: usize) -> u64 {
        derive_seed(self.seed, TRAIN_STREAM + realisation as u64)
    }

    pub fn split_spec(&self, realisation: usize) -> SplitSpec {
        SplitSpec {
            seed: self.split_seed(realisation),
            ..self.split.clone()
        }
    }

    pub fn train_config(&self, realisation: usize) -> TrainConfig {
        TrainConfig {
            seed: self.train_seed(realisation),
            ..self.train.clone()
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ConfigInvalid(e.to_string()))
    }
}

/// Parses configuration text; an empty document yields the defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        let located = match e.span() {
            Some(span) => format!("{msg} (at byte {})", span.start),
            None => msg.clone(),
        };
        if msg.contains("unknown field") || msg.contains("unknown variant") {
            Error::UnknownKey(located)
        } else {
            Error::TypeError(located)
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}
