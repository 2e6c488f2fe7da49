use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::features::{EmbeddingTable, FeatureConfig};
use crate::model::{Model, ModelConfig, ModelShape};

use super::data::Encoder;

pub const PARAMS_FILE: &str = "params.json";
pub const CONFIG_FILE: &str = "config.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.vec";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    model: ModelConfig,
    shape: ModelShape,
    features: FeatureConfig,
}

/// A trained model with the encoder it was trained against.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub encoder: Encoder,
}

impl Checkpoint {
    /// Writes `params.json`, `config.json` and `embeddings.vec` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.model.params().save(&dir.join(PARAMS_FILE))?;
        let sidecar = Sidecar {
            model: self.model.config().clone(),
            shape: self.model.shape().clone(),
            features: self.encoder.features.clone(),
        };
        let path = dir.join(CONFIG_FILE);
        fs::write(&path, serde_json::to_string_pretty(&sidecar)?).map_err(|e| Error::io(&path, e))?;
        self.encoder.table.save_word2vec(&dir.join(EMBEDDINGS_FILE))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(CONFIG_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let sidecar: Sidecar = serde_json::from_str(&text)?;
        let params = ParamStore::load(&dir.join(PARAMS_FILE))?;
        let table = EmbeddingTable::load_word2vec(&dir.join(EMBEDDINGS_FILE))?;
        let encoder = Encoder::new(table, sidecar.features)?;
        if encoder.model_shape() != sidecar.shape {
            return Err(Error::Config(format!(
                "checkpoint shape {:?} does not match its encoder {:?}",
                sidecar.shape,
                encoder.model_shape()
            )));
        }
        let model = Model::from_params(sidecar.model, sidecar.shape, params)?;
        Ok(Checkpoint { model, encoder })
    }
}
