//! Pipeline configuration: one JSON document, every field defaulted.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::Sweep;
use crate::bpe::{TrainParams, DEFAULT_MIN_PAIR_FREQUENCY, DEFAULT_VOCAB_SIZE, PRETRAIN_DROPOUT};
use crate::mlm::MaskingPolicy;
use crate::normalize::NormalizationConfig;
use crate::pack::PackerConfig;

/// Environment variable that, when set, overrides every seed in the config.
pub const SEED_ENV: &str = "TOOKA_SEED";

#[derive(Debug, Error)]
pub enum PipelineConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub corpus: PathBuf,
    pub normalized: PathBuf,
    pub vocab: PathBuf,
    pub shards: PathBuf,
    pub instances: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            corpus: "data/corpus.txt".into(),
            normalized: "work/normalized.txt".into(),
            vocab: "work/vocab.json".into(),
            shards: "work/shards".into(),
            instances: "work/instances".into(),
            reports: "work/reports".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerSection {
    pub vocab_size: usize,
    pub min_pair_frequency: u64,
}

impl Default for TokenizerSection {
    fn default() -> Self {
        Self { vocab_size: DEFAULT_VOCAB_SIZE, min_pair_frequency: DEFAULT_MIN_PAIR_FREQUENCY }
    }
}

impl TokenizerSection {
    pub fn params(&self) -> TrainParams {
        TrainParams { target_vocab: self.vocab_size, min_pair_frequency: self.min_pair_frequency }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncodeSection {
    pub dropout_p: f64,
    pub seed: u64,
}

impl Default for EncodeSection {
    fn default() -> Self {
        Self { dropout_p: PRETRAIN_DROPOUT, seed: 0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub normalization: NormalizationConfig,
    pub tokenizer: TokenizerSection,
    pub encode: EncodeSection,
    pub packer: PackerConfig,
    pub masking: MaskingPolicy,
    pub sweep: Sweep,
    /// Worker threads; 0 means one per core.
    pub workers: usize,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it stay relative to the
    /// working directory.
    pub fn load(path: &Path) -> Result<Self, PipelineConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| PipelineConfigError::Io { path: path.to_owned(), source })?;
        Self::from_json(&text)
    }

    /// Pretty JSON with every default written out.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineConfigError> {
        let bad = |e: String| Err(PipelineConfigError::Invalid(e));
        if let Err(e) = self.normalization.validate() {
            return bad(format!("normalization: {e}"));
        }
        if let Err(e) = self.packer.validate() {
            return bad(format!("packer: {e}"));
        }
        if let Err(e) = self.masking.validate() {
            return bad(format!("masking: {e}"));
        }
        if !(0.0..=1.0).contains(&self.encode.dropout_p) {
            return bad(format!("encode.dropout_p {} outside [0, 1]", self.encode.dropout_p));
        }
        if self.tokenizer.min_pair_frequency == 0 {
            return bad("tokenizer.min_pair_frequency must be at least 1".into());
        }
        if self.sweep.learning_rates.is_empty() || self.sweep.epochs == 0 {
            return bad("sweep must have at least one learning rate and one epoch".into());
        }
        Ok(())
    }

    /// Applies `TOOKA_SEED` if it is set.
    pub fn apply_env(&mut self) -> Result<(), PipelineConfigError> {
        match std::env::var(SEED_ENV) {
            Ok(v) => {
                let seed = v
                    .trim()
                    .parse()
                    .map_err(|_| PipelineConfigError::Invalid(format!("{SEED_ENV}={v:?} is not a u64")))?;
                self.set_seed(seed);
                Ok(())
            }
            Err(_) => Ok(()),
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.encode.seed = seed;
        self.masking.seed = seed;
    }
}
