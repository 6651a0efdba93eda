//! Network checkpoints.
//!
//! A checkpoint is a single JSON document:
//!
//! ```json
//! {
//!   "format": "isb-lab-ckpt-v1",
//!   "hidden_activation": "tanh",
//!   "output_activation": "identity",
//!   "layers": [
//!     { "shape": [outputs, inputs], "weights": [/* row-major */], "bias": [/* outputs */] }
//!   ]
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so save/load is exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, Dense, Mlp};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "isb-lab-ckpt-v1";

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    shape: [usize; 2],
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointRecord {
    format: String,
    hidden_activation: Activation,
    output_activation: Activation,
    layers: Vec<LayerRecord>,
}

impl Mlp {
    pub fn to_checkpoint_json(&self) -> Result<String> {
        let record = CheckpointRecord {
            format: CHECKPOINT_FORMAT.to_string(),
            hidden_activation: self.hidden_activation,
            output_activation: self.output_activation,
            layers: self
                .layers
                .iter()
                .map(|l| LayerRecord {
                    shape: [l.outputs, l.inputs],
                    weights: l.weights.clone(),
                    bias: l.bias.clone(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&record)?)
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self> {
        let record: CheckpointRecord = serde_json::from_str(text)?;
        if record.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!(
                "unknown header {:?}, expected {CHECKPOINT_FORMAT:?}",
                record.format
            )));
        }
        let mlp = Mlp {
            layers: record
                .layers
                .into_iter()
                .map(|l| Dense {
                    outputs: l.shape[0],
                    inputs: l.shape[1],
                    weights: l.weights,
                    bias: l.bias,
                })
                .collect(),
            hidden_activation: record.hidden_activation,
            output_activation: record.output_activation,
        };
        mlp.validate()?;
        Ok(mlp)
    }
}

pub fn save_checkpoint(mlp: &Mlp, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, mlp.to_checkpoint_json()?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Mlp> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Mlp::from_checkpoint_json(&text)
}
