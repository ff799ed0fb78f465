//! JSON checkpoints: `{"meta": {...}, "<param name>": {rows, cols, data}, ...}`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::util::write_atomic;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: String,
    pub layers: usize,
    pub seed: u64,
    pub schema_hash: String,
    #[serde(default)]
    pub hidden_dim: usize,
    #[serde(default)]
    pub input_dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    /// Parameters in store order.
    pub params: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new(meta: CheckpointMeta, store: &ParamStore) -> Self {
        Checkpoint {
            meta,
            params: store
                .names()
                .iter()
                .cloned()
                .zip(store.tensors().iter().cloned())
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut obj = Map::new();
        obj.insert("meta".into(), serde_json::to_value(&self.meta)?);
        for (name, t) in &self.params {
            if name == "meta" {
                return Err(Error::InvalidArgument("parameter may not be named `meta`".into()));
            }
            obj.insert(name.clone(), serde_json::to_value(t)?);
        }
        Ok(serde_json::to_string(&Value::Object(obj))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let Value::Object(mut obj) = serde_json::from_str::<Value>(text)? else {
            return Err(Error::InvalidArgument("checkpoint must be a JSON object".into()));
        };
        let meta = obj
            .remove("meta")
            .ok_or_else(|| Error::InvalidArgument("checkpoint has no `meta` object".into()))?;
        let meta: CheckpointMeta = serde_json::from_value(meta)?;
        let mut params = Vec::with_capacity(obj.len());
        for (name, v) in obj {
            let t: Tensor = serde_json::from_value(v)?;
            if t.len() != t.rows() * t.cols() {
                return Err(Error::shape("checkpoint", format!("`{name}` data length mismatch")));
            }
            params.push((name, t));
        }
        Ok(Checkpoint { meta, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&text)
    }
}
