use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::model::ModelConfig;

/// How training decides to stop once the dev loss stops improving.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EarlyStop {
    /// Stop after `patience_epochs` consecutive epochs without a new best.
    #[default]
    Patience,
    /// At the first epoch without a new best, schedule the stop
    /// `patience_epochs` after the best epoch; later improvements do not
    /// extend it.
    FixedTail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    /// Overrides the model's dropout rate during training.
    pub dropout_p: f64,
    pub patience_epochs: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub early_stop: EarlyStop,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.0007,
            batch_size: 128,
            dropout_p: 0.5,
            patience_epochs: 10,
            max_epochs: 200,
            seed: 0,
            early_stop: EarlyStop::Patience,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 || self.patience_epochs == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "batch_size, patience_epochs and max_epochs must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("dropout_p must lie in [0, 1), got {}", self.dropout_p)));
        }
        Ok(())
    }
}

/// Word-vector source: a word2vec text file, or seeded random vectors over
/// the training vocabulary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    pub path: Option<PathBuf>,
    /// Width of random vectors; ignored when `path` is set.
    pub dim: usize,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            path: None,
            dim: 50,
            seed: 0,
        }
    }
}

/// Everything `train` needs, as one TOML or JSON file with `train`,
/// `model`, `features` and `embeddings` tables.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub features: FeatureConfig,
    pub embeddings: EmbeddingConfig,
    /// Replace the POS and chunk tagsets with those seen in training data.
    pub tags_from_corpus: bool,
}

impl RunConfig {
    /// TOML unless the text parses as a JSON object.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text)?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.model.validate()?;
        self.features.validate()?;
        if self.embeddings.path.is_none() && self.embeddings.dim == 0 {
            return Err(Error::Config("embeddings.dim must be positive".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let t = TrainConfig::default();
        assert_eq!((t.lr, t.batch_size, t.dropout_p, t.patience_epochs), (0.0007, 128, 0.5, 10));
        assert_eq!(t.early_stop, EarlyStop::Patience);
    }

    #[test]
    fn toml_and_json_agree() {
        let toml_text = r#"
            tags_from_corpus = true
            [train]
            lr = 0.001
            seed = 3
            early_stop = "fixed_tail"
            [model]
            heads = 2
            head_dim = 8
            fc_sizes = [16, 3]
            [features]
            max_len = 40
            [embeddings]
            dim = 12
        "#;
        let a = RunConfig::parse(toml_text).unwrap();
        assert_eq!(a.train.lr, 0.001);
        assert_eq!(a.train.batch_size, 128);
        assert_eq!(a.train.early_stop, EarlyStop::FixedTail);
        assert_eq!(a.model.heads, 2);
        assert_eq!(a.features.max_len, 40);
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(RunConfig::parse(&json).unwrap(), a);
        assert_eq!(RunConfig::parse(&a.to_toml()).unwrap(), a);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::parse("[train]\nlr = 0.0").is_err());
        assert!(RunConfig::parse("[train]\nbatch_size = 0").is_err());
        assert!(RunConfig::parse("[train]\nunknown = [").is_err());
        assert!(RunConfig::parse("[embeddings]\ndim = 0").is_err());
    }
}
