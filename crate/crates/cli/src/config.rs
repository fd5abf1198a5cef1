//! Run configuration: one TOML file drives every command. Precedence is
//! built-in defaults, then file values, then command-line flags.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use wristemg::evaluation::EvalConfig;
use wristemg::features::FeatureConfig;
use wristemg::models::ModelConfig;
use wristemg::pipeline::PipelineConfig;
use wristemg::preprocess::PreprocessConfig;
use wristemg::reduction::ReductionConfig;
use wristemg::selection::SelectionConfig;
use wristemg::synthgen::SynthSpec;

use crate::CliError;

/// Every stage's parameters plus the generator spec and evaluation knobs.
/// Unknown keys are rejected.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Overrides both the generator seed and the fold seed when set.
    pub seed: Option<u64>,
    pub preprocess: PreprocessConfig,
    pub features: FeatureConfig,
    pub selection: SelectionConfig,
    pub reduction: ReductionConfig,
    pub model: ModelConfig,
    pub synth: SynthSpec,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
        let mut cfg = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| {
                    CliError::Usage(format!("cannot read config {}: {e}", p.display()))
                })?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", p.display())))?
            }
        };
        if let Some(seed) = cfg.seed {
            cfg.synth.seed = seed;
            cfg.eval.seed = seed;
        }
        Ok(cfg)
    }

    /// Applies flag overrides (flags win over file values).
    pub fn with_overrides(mut self, seed: Option<u64>, channels: Option<usize>) -> RunConfig {
        if let Some(seed) = seed {
            self.seed = Some(seed);
            self.synth.seed = seed;
            self.eval.seed = seed;
        }
        if let Some(k) = channels {
            self.model.channels = k;
        }
        self
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            preprocess: self.preprocess.clone(),
            features: self.features.clone(),
            selection: self.selection.clone(),
            reduction: self.reduction.clone(),
            model: self.model.clone(),
        }
    }
}
