//! Checkpoint format.
//!
//! A checkpoint directory holds:
//! - `model.json`: config, input size, layer shapes, training step, and the
//!   active intervention set.
//! - `weights.bin`: 16-byte header (magic `DOTW`, version u32, total element
//!   count u64, little-endian) followed by every parameter tensor's f32
//!   values, concatenated in declaration order (encoder, decoder,
//!   discriminator).
//!
//! Files are written to temp names and renamed, so a reader never sees a
//! partially written file.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::synthdata::io::atomic_write;

use super::model::DotVae;
use super::{ModelConfig, ModelError};

const MAGIC: &[u8; 4] = b"DOTW";
const VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LayerShape {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: ModelConfig,
    pub input_dim: usize,
    pub step: u64,
    pub active_set: usize,
    pub layers: Vec<LayerShape>,
}

fn layer_shapes(model: &DotVae) -> Vec<LayerShape> {
    let mut layers = Vec::new();
    for params in [&model.enc_params, &model.dec_params, &model.disc_params] {
        for (name, t) in params.iter() {
            layers.push(LayerShape { name: name.to_string(), shape: t.shape().to_vec() });
        }
    }
    layers
}

pub fn save_checkpoint(
    dir: &Path,
    model: &DotVae,
    step: u64,
    active_set: usize,
) -> Result<(), ModelError> {
    fs::create_dir_all(dir)?;
    let mut flat = model.enc_params.flat_values();
    flat.extend(model.dec_params.flat_values());
    flat.extend(model.disc_params.flat_values());

    let mut bytes = Vec::with_capacity(16 + flat.len() * 4);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(flat.len() as u64).to_le_bytes());
    for &v in &flat {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    atomic_write(&dir.join("weights.bin"), &bytes)?;

    let meta = CheckpointMeta {
        config: model.cfg.clone(),
        input_dim: model.input_dim,
        step,
        active_set,
        layers: layer_shapes(model),
    };
    atomic_write(&dir.join("model.json"), serde_json::to_string_pretty(&meta)?.as_bytes())?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(DotVae, CheckpointMeta), ModelError> {
    let meta: CheckpointMeta = serde_json::from_str(&fs::read_to_string(dir.join("model.json"))?)?;
    let mut model = DotVae::init(meta.config.clone(), meta.input_dim, 0)?;

    let expected_layers = layer_shapes(&model);
    if expected_layers.len() != meta.layers.len() {
        return Err(ModelError::Malformed(format!(
            "layer count mismatch: checkpoint has {}, model has {}",
            meta.layers.len(),
            expected_layers.len()
        )));
    }
    for (found, expect) in meta.layers.iter().zip(&expected_layers) {
        if found.name != expect.name || found.shape != expect.shape {
            return Err(ModelError::Malformed(format!(
                "layer {} has shape {:?}, expected {} {:?}",
                found.name, found.shape, expect.name, expect.shape
            )));
        }
    }

    let raw = fs::read(dir.join("weights.bin"))?;
    if raw.len() < 16 || &raw[0..4] != MAGIC {
        return Err(ModelError::Malformed("bad magic in weights.bin".into()));
    }
    let version = u32::from_le_bytes(raw[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(ModelError::Malformed(format!("unsupported weights.bin version {version}")));
    }
    let count = u64::from_le_bytes(raw[8..16].try_into().unwrap()) as usize;
    let total = model.enc_params.total_elems()
        + model.dec_params.total_elems()
        + model.disc_params.total_elems();
    if count != total || raw.len() != 16 + count * 4 {
        return Err(ModelError::Malformed(format!(
            "weights.bin holds {count} elements ({} bytes), model needs {total}",
            raw.len()
        )));
    }
    let flat: Vec<f32> = raw[16..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();

    let enc_n = model.enc_params.total_elems();
    let dec_n = model.dec_params.total_elems();
    model.enc_params.load_flat_values(&flat[..enc_n])?;
    model.dec_params.load_flat_values(&flat[enc_n..enc_n + dec_n])?;
    model.disc_params.load_flat_values(&flat[enc_n + dec_n..])?;
    Ok((model, meta))
}
