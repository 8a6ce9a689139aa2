//! Loss terms: reconstruction ELBO, latent cycle, and the adversarial pair.

use crate::diffcore::{DiffError, NodeId, Tape};

use super::model::{reparameterize_graph, DotVae, PosteriorNodes};

/// Scalar nodes produced by [`elbo_loss_graph`]: the minimized objective and
/// its batch-mean components.
#[derive(Clone, Copy, Debug)]
pub struct ElboNodes {
    pub loss: NodeId,
    pub recon: NodeId,
    pub kl_c: NodeId,
    pub kl_z: NodeId,
}

/// Per-sample KL divergence from a diagonal Gaussian to the standard normal:
/// `0.5 * sum_dims(mu^2 + exp(logvar) - logvar - 1)`, shape `[B]`.
pub fn kl_std_normal_graph(
    tape: &mut Tape,
    mu: NodeId,
    logvar: NodeId,
) -> Result<NodeId, DiffError> {
    let mu_sq = tape.square(mu)?;
    let var = tape.exp(logvar)?;
    let sum = tape.add(mu_sq, var)?;
    let minus_logvar = tape.sub(sum, logvar)?;
    let inner = tape.add_scalar(minus_logvar, -1.0)?;
    let per_sample = tape.sum(inner, Some(1))?;
    tape.scale(per_sample, 0.5)
}

/// Minimized negative evidence bound: batch mean of
/// `bernoulli_ce(x, logits) + KL_c + KL_z`.
pub fn elbo_loss_graph(
    tape: &mut Tape,
    x: NodeId,
    posterior: PosteriorNodes,
    recon_logits: NodeId,
) -> Result<ElboNodes, DiffError> {
    let recon_per_sample = tape.bce_with_logits(recon_logits, x)?;
    let kl_c_per_sample = kl_std_normal_graph(tape, posterior.mu_c, posterior.logvar_c)?;
    let kl_z_per_sample = kl_std_normal_graph(tape, posterior.mu_z, posterior.logvar_z)?;
    let partial = tape.add(recon_per_sample, kl_c_per_sample)?;
    let per_sample = tape.add(partial, kl_z_per_sample)?;
    let loss = tape.mean(per_sample, None)?;
    let recon = tape.mean(recon_per_sample, None)?;
    let kl_c = tape.mean(kl_c_per_sample, None)?;
    let kl_z = tape.mean(kl_z_per_sample, None)?;
    Ok(ElboNodes { loss, recon, kl_c, kl_z })
}

/// Latent cycle loss: decode the intervened pair, re-encode the generated
/// batch, and penalize the squared distance between the re-encoded code and
/// the intervened one, averaged over the batch.
///
/// By default only the structured dims are compared and the re-encoded
/// posterior mean stands in for the re-encoded code; `sample_eps` switches to
/// a reparameterized sample.
#[allow(clippy::too_many_arguments)]
pub fn cycle_loss_graph(
    tape: &mut Tape,
    model: &DotVae,
    dec_ids: &[NodeId],
    enc_ids: &[NodeId],
    c_prime: NodeId,
    z: NodeId,
    include_z: bool,
    sample_eps: Option<(NodeId, NodeId)>,
) -> Result<NodeId, DiffError> {
    let logits = model.decode_graph(tape, dec_ids, c_prime, z)?;
    let generated = tape.sigmoid(logits)?;
    let re_encoded = model.encode_graph(tape, enc_ids, generated)?;

    let c_hat = match sample_eps {
        Some((eps_c, _)) => reparameterize_graph(tape, re_encoded.mu_c, re_encoded.logvar_c, eps_c)?,
        None => re_encoded.mu_c,
    };
    let diff_c = tape.sub(c_hat, c_prime)?;
    let sq_c = tape.square(diff_c)?;
    let mut per_sample = tape.sum(sq_c, Some(1))?;

    if include_z {
        let z_hat = match sample_eps {
            Some((_, eps_z)) => {
                reparameterize_graph(tape, re_encoded.mu_z, re_encoded.logvar_z, eps_z)?
            }
            None => re_encoded.mu_z,
        };
        let diff_z = tape.sub(z_hat, z)?;
        let sq_z = tape.square(diff_z)?;
        let z_term = tape.sum(sq_z, Some(1))?;
        per_sample = tape.add(per_sample, z_term)?;
    }
    tape.mean(per_sample, None)
}

/// Discriminator objective `E[log D(c')] + E[log(1 - D(c))]`, which the
/// discriminator maximizes. Both code batches enter as constants, so its
/// gradient stops at the discriminator inputs.
pub fn disc_loss_graph(
    tape: &mut Tape,
    model: &DotVae,
    disc_ids: &[NodeId],
    c_real: NodeId,
    c_prime: NodeId,
) -> Result<NodeId, DiffError> {
    let p_prime = model.disc_prob_graph(tape, disc_ids, c_prime)?;
    let log_p_prime = tape.log(p_prime)?;
    let term_prime = tape.mean(log_p_prime, None)?;
    let term_real = log_one_minus_prob(tape, model, disc_ids, c_real)?;
    tape.add(term_prime, term_real)
}

/// Encoder adversary `E[log(1 - D(c))]`, which the encoder minimizes to make
/// encoded codes indistinguishable from intervened ones. Register the
/// discriminator parameters frozen so its weights receive no gradient.
pub fn enc_adv_loss_graph(
    tape: &mut Tape,
    model: &DotVae,
    disc_ids: &[NodeId],
    c_real: NodeId,
) -> Result<NodeId, DiffError> {
    log_one_minus_prob(tape, model, disc_ids, c_real)
}

fn log_one_minus_prob(
    tape: &mut Tape,
    model: &DotVae,
    disc_ids: &[NodeId],
    c: NodeId,
) -> Result<NodeId, DiffError> {
    let p = model.disc_prob_graph(tape, disc_ids, c)?;
    let neg = tape.neg(p)?;
    let one_minus = tape.add_scalar(neg, 1.0)?;
    let log = tape.log(one_minus)?;
    tape.mean(log, None)
}

/// Combined objective `elbo + lambda * adv + gamma * cycle`.
pub fn total_loss(elbo: f64, enc_adv: f64, cycle: f64, lambda: f64, gamma: f64) -> f64 {
    elbo + lambda * enc_adv + gamma * cycle
}

/// Graph form of [`total_loss`].
pub fn total_loss_graph(
    tape: &mut Tape,
    elbo: NodeId,
    enc_adv: NodeId,
    cycle: NodeId,
    lambda: f32,
    gamma: f32,
) -> Result<NodeId, DiffError> {
    let adv = tape.scale(enc_adv, lambda)?;
    let cyc = tape.scale(cycle, gamma)?;
    let partial = tape.add(elbo, adv)?;
    tape.add(partial, cyc)
}
