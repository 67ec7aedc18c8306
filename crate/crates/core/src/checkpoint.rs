//! Self-describing model checkpoints.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamState, ParamStore};
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::provenance::{read_json, write_json, Provenance};
use crate::text::Vocab;

pub const CHECKPOINT_FORMAT: &str = "eem-checkpoint/1";

/// Generator position, enough to resume a seeded run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub steps: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<AdamState>,
    pub rng: RngState,
    pub provenance: Provenance,
}

impl Checkpoint {
    pub fn new(model: &Model, vocab: &Vocab, optimizer: Option<AdamState>, rng: RngState, provenance: Provenance) -> Result<Self> {
        if vocab.len() != model.config().vocab_size {
            return Err(Error::Contract(format!(
                "vocabulary has {} entries, model expects {}",
                vocab.len(),
                model.config().vocab_size
            )));
        }
        Ok(Self {
            format: CHECKPOINT_FORMAT.to_string(),
            config: model.config().clone(),
            vocab: vocab.clone(),
            params: model.params().clone(),
            optimizer,
            rng,
            provenance,
        })
    }

    pub fn model(&self) -> Result<Model> {
        Model::from_parts(self.config.clone(), self.params.clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: Self = read_json(path)?;
        if c.format != CHECKPOINT_FORMAT {
            return Err(Error::Data(format!("{}: unknown checkpoint format `{}`", path.display(), c.format)));
        }
        if c.vocab.len() != c.config.vocab_size {
            return Err(Error::Data(format!("{}: vocabulary size disagrees with config", path.display())));
        }
        Ok(c)
    }
}
