//! JSON checkpoints: model definition plus parameters. Floats round-trip
//! exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::losses::LossSpec;
use crate::models::{NamedTensor, ParameterSet, SeqModel};
use crate::{Error, Result};

const FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    pub model: SeqModel,
    pub loss: LossSpec,
    pub seed: u64,
    pub params: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(model: SeqModel, loss: LossSpec, seed: u64, params: &ParameterSet) -> Self {
        Self {
            format: FORMAT,
            model,
            loss,
            seed,
            params: params.to_named(),
        }
    }

    pub fn parameters(&self) -> Result<ParameterSet> {
        let params = ParameterSet::from_named(self.params.clone())?;
        let rows = params.item_embeddings().nrows();
        if rows != self.model.num_items + 2 {
            return Err(Error::Config(format!(
                "checkpoint item table has {rows} rows, model expects {}",
                self.model.num_items + 2
            )));
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_vec(self).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        crate::evaluation::write_file(path, &text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_slice(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        if ck.format != FORMAT {
            return Err(Error::Config(format!(
                "{}: unsupported checkpoint format {}",
                path.display(),
                ck.format
            )));
        }
        Ok(ck)
    }
}
