//! The single run-configuration document shared by every subcommand.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use lamb_core::contrastive::TrainConfig;
use lamb_core::corpus::{DigestConfig, TextMode};
use lamb_core::encoders::EncoderConfig;
use lamb_core::geo_pretrain::GeoPretrainConfig;
use lamb_core::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;

/// Everything a pipeline run needs, as one JSON document. CLI flags
/// override individual values after loading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Schema version; must be [`CONFIG_VERSION`].
    pub version: u32,
    /// Model-initialization seed; `--seed` overrides this and the
    /// pretraining/training seeds together.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub pretrain: GeoPretrainConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub digest: DigestConfig,
    #[serde(default = "default_text_mode")]
    pub text_mode: TextMode,
    /// Evaluation cutoffs; omitted means the mode's defaults.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_ns: Option<Vec<usize>>,
    /// Distance weight for the geo-dist baseline.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_path: Option<PathBuf>,
    /// Location-module checkpoint that `train` starts from, when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretrained_path: Option<PathBuf>,
}

fn default_text_mode() -> TextMode {
    TextMode::Cluster
}

fn default_lambda() -> f64 {
    0.5
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            seed: 0,
            encoder: EncoderConfig::default(),
            pretrain: GeoPretrainConfig::default(),
            train: TrainConfig::default(),
            digest: DigestConfig::default(),
            text_mode: default_text_mode(),
            eval_ns: None,
            lambda: default_lambda(),
            data_dir: None,
            model_path: None,
            index_path: None,
            pretrained_path: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} unsupported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.encoder.validate()?;
        self.pretrain.validate()?;
        self.train.validate()?;
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::OutOfDomain {
                name: "lambda",
                value: self.lambda,
                lo: 0.0,
                hi: 1.0,
            });
        }
        if let Some(ns) = &self.eval_ns {
            if ns.is_empty() || ns.contains(&0) {
                return Err(Error::Config("eval_ns must be non-empty positive cutoffs".into()));
            }
        }
        Ok(())
    }

    /// One reseed point for the whole run.
    pub fn override_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.pretrain.seed = seed;
        self.train.seed = seed;
    }
}
