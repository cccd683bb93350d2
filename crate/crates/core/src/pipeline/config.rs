//! Run configuration: model sizes, ablation flags, optimizer settings, and
//! budgets. Serialized as the JSON config file consumed by `train` and
//! stored as a checkpoint sidecar.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::language::LmConfig;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct RunConfig {
    /// Master seed for parameter init, data shuffling, and generation.
    pub seed: u64,
    // language model
    pub lm_layers: usize,
    pub lm_heads: usize,
    pub lm_d_model: usize,
    pub lm_d_ff: usize,
    pub lm_max_len: usize,
    pub lora_rank: usize,
    pub lora_alpha: f64,
    /// Train only LoRA adapters and special-token rows of the LM.
    pub freeze_base: bool,
    // feature widths
    pub d_dec: usize,
    pub d3: usize,
    pub d2: usize,
    pub decoder_layers: usize,
    pub encoder_hidden: usize,
    // scene processing
    pub voxel_size: f64,
    pub num_views: usize,
    /// Fixed seed of the built-in 2D random-projection provider.
    pub view_feature_seed: u64,
    // ablation flags
    pub use_2d_features: bool,
    pub use_object_identifiers: bool,
    // optimizer / schedule
    pub learning_rate: f64,
    pub epochs: usize,
    /// Train-time augmentation: per-object color shift amplitude and random
    /// presentation order of object tokens (0 disables both).
    pub color_jitter: f64,
    /// Extra checkpoints every this many steps (0 = final only).
    pub checkpoint_interval: usize,
    pub max_generated_tokens: usize,
    /// Most identifier tokens reserved in the vocabulary.
    pub max_objects: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            lm_layers: 2,
            lm_heads: 4,
            lm_d_model: 64,
            lm_d_ff: 256,
            lm_max_len: 512,
            lora_rank: 4,
            lora_alpha: 8.0,
            freeze_base: true,
            d_dec: 64,
            d3: 32,
            d2: 32,
            decoder_layers: 3,
            encoder_hidden: 64,
            voxel_size: 0.25,
            num_views: 4,
            view_feature_seed: 1234,
            use_2d_features: true,
            use_object_identifiers: true,
            learning_rate: 1e-3,
            epochs: 12,
            color_jitter: 0.05,
            checkpoint_interval: 0,
            max_generated_tokens: 16,
            max_objects: 9,
        }
    }
}

impl RunConfig {
    pub fn lm_config(&self, vocab_size: usize) -> LmConfig {
        LmConfig {
            layers: self.lm_layers,
            heads: self.lm_heads,
            d_model: self.lm_d_model,
            d_ff: self.lm_d_ff,
            max_len: self.lm_max_len,
            vocab_size,
            lora_rank: self.lora_rank,
            lora_alpha: self.lora_alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lm_d_model % self.lm_heads != 0 {
            return Err(Error::Validation(format!(
                "d_model {} not divisible by heads {}",
                self.lm_d_model, self.lm_heads
            )));
        }
        if self.voxel_size <= 0.0 {
            return Err(Error::Validation("voxel_size must be positive".into()));
        }
        if self.num_views == 0 && self.use_2d_features {
            return Err(Error::Validation("2D features enabled with zero views".into()));
        }
        if self.max_objects == 0 {
            return Err(Error::Validation("max_objects must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Validation("epochs must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.color_jitter) {
            return Err(Error::Validation("color_jitter must be in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Validation(format!("config encode: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_have_flags_on_and_validate() {
        let cfg = RunConfig::default();
        assert!(cfg.use_2d_features);
        assert!(cfg.use_object_identifiers);
        cfg.validate().unwrap();
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 7, "epochs": 3}"#).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.d_dec, RunConfig::default().d_dec);
    }

    #[test]
    fn bad_head_split_rejected() {
        let cfg = RunConfig { lm_heads: 5, ..RunConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        let cfg = RunConfig { seed: 9, use_2d_features: false, ..RunConfig::default() };
        cfg.save(&path).unwrap();
        assert_eq!(RunConfig::load(&path).unwrap(), cfg);
    }
}
