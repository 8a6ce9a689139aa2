//! The split-latent model: encoder, decoder, latent discriminator.

use crate::diffcore::{
    derive_seed, register_params, DiffError, NodeId, ParamSet, SplitMixRng, Tape, Tensor,
};

use super::mlp::Mlp;
use super::{ModelConfig, ModelError, LOGVAR_CLAMP, PROB_EPS};

/// Seed streams, kept separate so that constructing the discriminator does
/// not perturb encoder/decoder initialization.
const STREAM_ENC_DEC: u64 = 0x45;
const STREAM_DISC: u64 = 0xD1;

/// Posterior parameters for one batch as plain tensors.
#[derive(Clone, Debug)]
pub struct LatentPosterior {
    pub mu_c: Tensor,
    pub logvar_c: Tensor,
    pub mu_z: Tensor,
    pub logvar_z: Tensor,
}

/// Posterior parameters as tape nodes.
#[derive(Clone, Copy, Debug)]
pub struct PosteriorNodes {
    pub mu_c: NodeId,
    pub logvar_c: NodeId,
    pub mu_z: NodeId,
    pub logvar_z: NodeId,
}

pub struct DotVae {
    pub cfg: ModelConfig,
    pub input_dim: usize,
    pub enc_params: ParamSet,
    pub dec_params: ParamSet,
    pub disc_params: ParamSet,
    trunk: Mlp,
    head_mu_c: Mlp,
    head_logvar_c: Mlp,
    head_mu_z: Mlp,
    head_logvar_z: Mlp,
    dec: Mlp,
    disc: Mlp,
}

impl DotVae {
    pub fn init(cfg: ModelConfig, input_dim: usize, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        if input_dim == 0 {
            return Err(ModelError::InvalidConfig("input_dim must be positive".into()));
        }
        let mut enc_rng = SplitMixRng::new(derive_seed(seed, STREAM_ENC_DEC));
        let mut enc_params = ParamSet::new();
        let mut trunk_sizes = vec![input_dim];
        trunk_sizes.extend_from_slice(&cfg.enc_hidden);
        let trunk = Mlp::init("enc.trunk", trunk_sizes, &mut enc_params, &mut enc_rng);
        let feat = *cfg.enc_hidden.last().unwrap_or(&input_dim);
        let head_mu_c = Mlp::init("enc.mu_c", vec![feat, cfg.latent_c], &mut enc_params, &mut enc_rng);
        let head_logvar_c =
            Mlp::init("enc.logvar_c", vec![feat, cfg.latent_c], &mut enc_params, &mut enc_rng);
        let head_mu_z = Mlp::init("enc.mu_z", vec![feat, cfg.latent_z], &mut enc_params, &mut enc_rng);
        let head_logvar_z =
            Mlp::init("enc.logvar_z", vec![feat, cfg.latent_z], &mut enc_params, &mut enc_rng);

        let mut dec_params = ParamSet::new();
        let mut dec_sizes = vec![cfg.latent_c + cfg.latent_z];
        dec_sizes.extend_from_slice(&cfg.dec_hidden);
        dec_sizes.push(input_dim);
        let dec = Mlp::init("dec", dec_sizes, &mut dec_params, &mut enc_rng);

        let mut disc_rng = SplitMixRng::new(derive_seed(seed, STREAM_DISC));
        let mut disc_params = ParamSet::new();
        let mut disc_sizes = vec![cfg.latent_c];
        disc_sizes.extend_from_slice(&cfg.disc_hidden);
        disc_sizes.push(1);
        let disc = Mlp::init("disc", disc_sizes, &mut disc_params, &mut disc_rng);

        Ok(DotVae {
            cfg,
            input_dim,
            enc_params,
            dec_params,
            disc_params,
            trunk,
            head_mu_c,
            head_logvar_c,
            head_mu_z,
            head_logvar_z,
            dec,
            disc,
        })
    }

    pub fn latent_c(&self) -> usize {
        self.cfg.latent_c
    }

    pub fn latent_z(&self) -> usize {
        self.cfg.latent_z
    }

    // ---- graph builders ----------------------------------------------------

    /// Split encoder: shared trunk, four linear heads, log-variances clamped.
    pub fn encode_graph(
        &self,
        tape: &mut Tape,
        enc_ids: &[NodeId],
        x: NodeId,
    ) -> Result<PosteriorNodes, DiffError> {
        let mut h = x;
        for l in 0..self.trunk.num_layers() {
            let w = enc_ids[self.trunk.param_offset + 2 * l];
            let b = enc_ids[self.trunk.param_offset + 2 * l + 1];
            let lin = tape.matmul(h, w)?;
            let biased = tape.add(lin, b)?;
            h = tape.relu(biased)?;
        }
        let mu_c = self.head_mu_c.forward(tape, enc_ids, h)?;
        let raw_logvar_c = self.head_logvar_c.forward(tape, enc_ids, h)?;
        let logvar_c = tape.clamp(raw_logvar_c, LOGVAR_CLAMP.0, LOGVAR_CLAMP.1)?;
        let mu_z = self.head_mu_z.forward(tape, enc_ids, h)?;
        let raw_logvar_z = self.head_logvar_z.forward(tape, enc_ids, h)?;
        let logvar_z = tape.clamp(raw_logvar_z, LOGVAR_CLAMP.0, LOGVAR_CLAMP.1)?;
        Ok(PosteriorNodes { mu_c, logvar_c, mu_z, logvar_z })
    }

    /// Decoder on the concatenated pair `(c, z)`; returns unbounded logits.
    pub fn decode_graph(
        &self,
        tape: &mut Tape,
        dec_ids: &[NodeId],
        c: NodeId,
        z: NodeId,
    ) -> Result<NodeId, DiffError> {
        let joined = tape.concat(&[c, z], 1)?;
        self.dec.forward(tape, dec_ids, joined)
    }

    /// Discriminator probability that a code is an intervened one, clamped
    /// to `[PROB_EPS, 1 - PROB_EPS]`.
    pub fn disc_prob_graph(
        &self,
        tape: &mut Tape,
        disc_ids: &[NodeId],
        c: NodeId,
    ) -> Result<NodeId, DiffError> {
        let logit = self.disc.forward(tape, disc_ids, c)?;
        let p = tape.sigmoid(logit)?;
        tape.clamp(p, PROB_EPS, 1.0 - PROB_EPS)
    }

    // ---- value-level helpers -------------------------------------------------

    /// Encodes a batch with frozen weights.
    pub fn encode(&self, x: &Tensor) -> Result<LatentPosterior, DiffError> {
        let mut tape = Tape::new();
        let ids = register_params(&mut tape, &self.enc_params, false);
        let xid = tape.constant(x.clone());
        let post = self.encode_graph(&mut tape, &ids, xid)?;
        Ok(LatentPosterior {
            mu_c: tape.value(post.mu_c).clone(),
            logvar_c: tape.value(post.logvar_c).clone(),
            mu_z: tape.value(post.mu_z).clone(),
            logvar_z: tape.value(post.logvar_z).clone(),
        })
    }

    /// Decodes with frozen weights; returns logits.
    pub fn decode_logits(&self, c: &Tensor, z: &Tensor) -> Result<Tensor, DiffError> {
        let mut tape = Tape::new();
        let ids = register_params(&mut tape, &self.dec_params, false);
        let cid = tape.constant(c.clone());
        let zid = tape.constant(z.clone());
        let logits = self.decode_graph(&mut tape, &ids, cid, zid)?;
        Ok(tape.value(logits).clone())
    }

    /// Decodes with frozen weights; returns Bernoulli means.
    pub fn decode_mean(&self, c: &Tensor, z: &Tensor) -> Result<Tensor, DiffError> {
        let mut tape = Tape::new();
        let ids = register_params(&mut tape, &self.dec_params, false);
        let cid = tape.constant(c.clone());
        let zid = tape.constant(z.clone());
        let logits = self.decode_graph(&mut tape, &ids, cid, zid)?;
        let mean = tape.sigmoid(logits)?;
        Ok(tape.value(mean).clone())
    }
}

/// Reparameterization: `sample = mu + exp(logvar / 2) * eps`.
///
/// Gradients flow to `mu` and `logvar`; `eps` enters as a constant.
pub fn reparameterize_graph(
    tape: &mut Tape,
    mu: NodeId,
    logvar: NodeId,
    eps: NodeId,
) -> Result<NodeId, DiffError> {
    let half = tape.scale(logvar, 0.5)?;
    let std = tape.exp(half)?;
    let noise = tape.mul(std, eps)?;
    tape.add(mu, noise)
}
