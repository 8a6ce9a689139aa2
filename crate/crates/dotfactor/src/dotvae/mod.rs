//! Split-latent variational autoencoder with a latent adversary.
//!
//! The encoder maps an image to two diagonal-Gaussian posteriors: a
//! structured code `c` of `K` dimensions that interventions act on, and an
//! unstructured code `z` of `d` dimensions that absorbs whatever `c` does
//! not carry. The decoder is conditioned on the pair `(c, z)`. A small
//! discriminator on `c` tells intervened codes from encoded ones.

mod checkpoint;
mod intervene;
mod losses;
mod mlp;
mod model;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::DiffError;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, LayerShape};
pub use intervene::{intervene, InterventionSpec, InterventionVariant};
pub use losses::{
    cycle_loss_graph, disc_loss_graph, elbo_loss_graph, enc_adv_loss_graph, kl_std_normal_graph,
    total_loss, total_loss_graph, ElboNodes,
};
pub use mlp::Mlp;
pub use model::{reparameterize_graph, DotVae, LatentPosterior, PosteriorNodes};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

/// Architecture and loss weights.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ModelConfig {
    /// Width of the structured code `c`.
    pub latent_c: usize,
    /// Width of the unstructured code `z`.
    pub latent_z: usize,
    pub enc_hidden: Vec<usize>,
    pub dec_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    /// Weight of the encoder's adversarial loss.
    pub lambda: f32,
    /// Weight of the latent cycle loss.
    pub gamma: f32,
    pub variant: InterventionVariant,
    /// Compare the unstructured dims too in the cycle loss.
    pub cycle_includes_z: bool,
    /// Use a posterior sample instead of the mean as the re-encoded code.
    pub cycle_use_sample: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            latent_c: 10,
            latent_z: 10,
            enc_hidden: vec![256, 256],
            dec_hidden: vec![256, 256],
            disc_hidden: vec![128, 128],
            lambda: 2.0,
            gamma: 20.0,
            variant: InterventionVariant::BatchSwap,
            cycle_includes_z: false,
            cycle_use_sample: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.latent_c < 1 || self.latent_z < 1 {
            return Err(ModelError::InvalidConfig(format!(
                "latent widths must be >= 1, got c={} z={}",
                self.latent_c, self.latent_z
            )));
        }
        if self.lambda < 0.0 || self.gamma < 0.0 {
            return Err(ModelError::InvalidConfig(format!(
                "loss weights must be >= 0, got lambda={} gamma={}",
                self.lambda, self.gamma
            )));
        }
        Ok(())
    }
}

/// Log-variances are clamped to this range before use.
pub const LOGVAR_CLAMP: (f32, f32) = (-10.0, 10.0);
/// Discriminator probabilities are clamped to `[EPS, 1-EPS]` before logs.
pub const PROB_EPS: f32 = 1e-6;
