//! Two-step training loop with the progressive intervention schedule.
//!
//! Per batch, up to three sub-steps run in order:
//! 1. wake: update encoder and decoder on the reconstruction objective plus
//!    `lambda` times the encoder adversary;
//! 2. sleep (once interventions are active): draw a dimension uniformly from
//!    the active set, intervene on the batch codes, and update decoder and
//!    encoder on `gamma` times the latent cycle loss;
//! 3. discriminator (once interventions are active): re-encode the batch
//!    with current weights and update the discriminator on its objective,
//!    with fresh codes and a fresh intervention.
//!
//! Randomness comes from one stream derived from the run seed and is
//! consumed in a fixed order per batch: wake noise for `c` then `z`; the
//! sleep dimension, then its intervention draws; the discriminator's
//! encoding noise, its dimension, then its intervention draws. The epoch
//! shuffle precedes all batches. Sub-steps that do not run consume nothing,
//! so a run with `lambda = gamma = 0` and warm-up beyond the epoch budget
//! consumes exactly the stream of a plain VAE loop.

mod schedule;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::{
    derive_seed, load_grads, register_params, Adam, AdamConfig, DiffError, SplitMixRng, Tape,
    Tensor,
};
use crate::dotvae::{
    cycle_loss_graph, disc_loss_graph, elbo_loss_graph, enc_adv_loss_graph, intervene,
    reparameterize_graph, save_checkpoint, DotVae, ModelConfig, ModelError,
};
use crate::synthdata::{DataError, FactoredDataset};

pub use schedule::{schedule_update, ScheduleState};

/// Stream tag for training randomness (shuffles, sampling noise,
/// intervention draws). Model initialization uses its own streams, so a
/// reference loop that derives its stream with this tag sees the exact
/// training randomness.
pub const TRAIN_STREAM_TAG: u64 = 0x7A;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {source}")]
    NonFinite { epoch: usize, batch: usize, source: DiffError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid train config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    /// Epochs of likelihood-only training before interventions begin.
    pub warmup_epochs: usize,
    /// Saturation window in epochs.
    pub sat_window: usize,
    /// Relative-improvement threshold below which the objective counts as
    /// saturated.
    pub sat_threshold: f64,
    /// Total nats over `z` under which the unstructured code counts as
    /// carrying no information.
    pub stop_kl: f64,
    pub seed: u64,
    /// Stop once the active set reaches this size (for data whose factor
    /// count is unknown); `None` iterates until the stop rule fires.
    pub desired_factors: Option<usize>,
    /// Restrict the sleep sub-step to decoder parameters.
    pub sleep_decoder_only: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            epochs: 200,
            batch_size: 32,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            warmup_epochs: 5,
            sat_window: 5,
            sat_threshold: 0.005,
            stop_kl: 0.1,
            seed: 0,
            desired_factors: None,
            sleep_decoder_only: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.model.validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(TrainError::Invalid("epochs and batch_size must be positive".into()));
        }
        if self.sat_window == 0 {
            return Err(TrainError::Invalid("sat_window must be positive".into()));
        }
        if !self.sat_threshold.is_finite() || self.sat_threshold <= 0.0 {
            return Err(TrainError::Invalid(format!(
                "sat_threshold must be > 0, got {}",
                self.sat_threshold
            )));
        }
        if self.stop_kl < 0.0 {
            return Err(TrainError::Invalid(format!("stop_kl must be >= 0, got {}", self.stop_kl)));
        }
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
            .validate()?;
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }
}

/// Batch-size-weighted epoch means. Sub-steps that never ran report 0.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss_elbo: f64,
    pub loss_cycle: f64,
    pub loss_adv_enc: f64,
    pub loss_disc: f64,
    pub kl_z: f64,
    pub kl_c: f64,
    pub active_set: usize,
    pub sleep_steps: usize,
    pub disc_steps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    /// `z` carries no information and the active set is complete.
    EntangledCodeEmpty,
    /// The configured number of factors was found.
    DesiredFactorsReached,
    EpochBudgetExhausted,
}

#[derive(Debug)]
pub struct FitReport {
    pub log: Vec<EpochStats>,
    pub stop_reason: StopReason,
    pub final_active: usize,
    pub final_kl_z: f64,
    pub checkpoint_dir: Option<PathBuf>,
}

pub struct Trainer {
    pub model: DotVae,
    pub cfg: TrainConfig,
    pub schedule: ScheduleState,
    opt_enc: Adam,
    opt_dec: Adam,
    opt_disc: Adam,
    rng: SplitMixRng,
    step: u64,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, input_dim: usize) -> Result<Self, TrainError> {
        cfg.validate()?;
        let model = DotVae::init(cfg.model.clone(), input_dim, cfg.seed)?;
        let opt_enc = Adam::new(cfg.adam(), &model.enc_params)?;
        let opt_dec = Adam::new(cfg.adam(), &model.dec_params)?;
        let opt_disc = Adam::new(cfg.adam(), &model.disc_params)?;
        let rng = SplitMixRng::new(derive_seed(cfg.seed, TRAIN_STREAM_TAG));
        Ok(Trainer { model, cfg, schedule: ScheduleState::new(), opt_enc, opt_dec, opt_disc, rng, step: 0 })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    fn normal_tensor(&mut self, shape: Vec<usize>) -> Tensor {
        let mut t = Tensor::zeros(shape);
        self.rng.fill_normal_f32(t.data_mut());
        t
    }

    /// Sub-step 1: encoder + decoder on the reconstruction objective plus
    /// the weighted encoder adversary.
    pub fn wake_step(&mut self, x: &Tensor) -> Result<WakeStats, DiffError> {
        let (batch, _) = x.dims2()?;
        let eps_c = self.normal_tensor(vec![batch, self.model.latent_c()]);
        let eps_z = self.normal_tensor(vec![batch, self.model.latent_z()]);
        let lambda = self.model.cfg.lambda;

        let mut tape = Tape::new();
        let enc_ids = register_params(&mut tape, &self.model.enc_params, true);
        let dec_ids = register_params(&mut tape, &self.model.dec_params, true);
        let xid = tape.constant(x.clone());
        let post = self.model.encode_graph(&mut tape, &enc_ids, xid)?;
        let ec = tape.constant(eps_c);
        let ez = tape.constant(eps_z);
        let c = reparameterize_graph(&mut tape, post.mu_c, post.logvar_c, ec)?;
        let z = reparameterize_graph(&mut tape, post.mu_z, post.logvar_z, ez)?;
        let logits = self.model.decode_graph(&mut tape, &dec_ids, c, z)?;
        let elbo = elbo_loss_graph(&mut tape, xid, post, logits)?;

        let (loss, adv_value) = if lambda > 0.0 {
            let disc_ids = register_params(&mut tape, &self.model.disc_params, false);
            let adv = enc_adv_loss_graph(&mut tape, &self.model, &disc_ids, c)?;
            let weighted = tape.scale(adv, lambda)?;
            let total = tape.add(elbo.loss, weighted)?;
            (total, Some(tape.value(adv).data()[0] as f64))
        } else {
            (elbo.loss, None)
        };

        let out = WakeStats {
            elbo: tape.value(elbo.loss).data()[0] as f64,
            recon: tape.value(elbo.recon).data()[0] as f64,
            kl_c: tape.value(elbo.kl_c).data()[0] as f64,
            kl_z: tape.value(elbo.kl_z).data()[0] as f64,
            adv: adv_value,
            c: tape.value(c).clone(),
            z: tape.value(z).clone(),
        };

        let grads = tape.backward(loss)?;
        load_grads(&mut self.model.enc_params, &enc_ids, &grads)?;
        load_grads(&mut self.model.dec_params, &dec_ids, &grads)?;
        self.opt_enc.step(&mut self.model.enc_params)?;
        self.opt_dec.step(&mut self.model.dec_params)?;
        self.step += 1;
        Ok(out)
    }

    /// Sub-step 2: intervene on a uniformly drawn active dimension and
    /// update decoder (and encoder, unless configured off) on the weighted
    /// cycle loss. The batch codes enter detached.
    pub fn sleep_step(&mut self, c: &Tensor, z: &Tensor) -> Result<SleepStats, DiffError> {
        let active = self.schedule.active.max(1);
        let k = self.rng.next_below(active as u64) as usize;
        let (c_prime, _spec) = intervene(c, k, self.model.cfg.variant, &mut self.rng)?;

        let sample_eps = if self.model.cfg.cycle_use_sample {
            let (batch, _) = c.dims2()?;
            let ec = self.normal_tensor(vec![batch, self.model.latent_c()]);
            let ez = self.normal_tensor(vec![batch, self.model.latent_z()]);
            Some((ec, ez))
        } else {
            None
        };

        let train_encoder = !self.cfg.sleep_decoder_only;
        let mut tape = Tape::new();
        let dec_ids = register_params(&mut tape, &self.model.dec_params, true);
        let enc_ids = register_params(&mut tape, &self.model.enc_params, train_encoder);
        let cp = tape.constant(c_prime);
        let zz = {
            let mut detached = z.clone();
            detached.set_requires_grad(false);
            tape.constant(detached)
        };
        let eps_nodes =
            sample_eps.map(|(ec, ez)| (tape.constant(ec), tape.constant(ez)));
        let cycle = cycle_loss_graph(
            &mut tape,
            &self.model,
            &dec_ids,
            &enc_ids,
            cp,
            zz,
            self.model.cfg.cycle_includes_z,
            eps_nodes,
        )?;
        let cycle_value = tape.value(cycle).data()[0] as f64;
        let loss = tape.scale(cycle, self.model.cfg.gamma)?;
        let grads = tape.backward(loss)?;
        load_grads(&mut self.model.dec_params, &dec_ids, &grads)?;
        self.opt_dec.step(&mut self.model.dec_params)?;
        if train_encoder {
            load_grads(&mut self.model.enc_params, &enc_ids, &grads)?;
            self.opt_enc.step(&mut self.model.enc_params)?;
        }
        self.step += 1;
        Ok(SleepStats { cycle: cycle_value, dim: k })
    }

    /// Sub-step 3: update the discriminator on fresh codes from the current
    /// encoder and a fresh intervention. Codes enter as constants.
    pub fn disc_step(&mut self, x: &Tensor) -> Result<DiscStats, DiffError> {
        let (batch, _) = x.dims2()?;
        // fresh codes under current weights
        let post = self.model.encode(x)?;
        let eps_c = self.normal_tensor(vec![batch, self.model.latent_c()]);
        let c = {
            let mut tape = Tape::new();
            let mu = tape.constant(post.mu_c);
            let lv = tape.constant(post.logvar_c);
            let e = tape.constant(eps_c);
            let s = reparameterize_graph(&mut tape, mu, lv, e)?;
            tape.value(s).clone()
        };
        let active = self.schedule.active.max(1);
        let k = self.rng.next_below(active as u64) as usize;
        let (c_prime, _spec) = intervene(&c, k, self.model.cfg.variant, &mut self.rng)?;

        let mut tape = Tape::new();
        let disc_ids = register_params(&mut tape, &self.model.disc_params, true);
        let cid = tape.constant(c);
        let cpid = tape.constant(c_prime);
        let objective = disc_loss_graph(&mut tape, &self.model, &disc_ids, cid, cpid)?;
        let value = tape.value(objective).data()[0] as f64;
        let minimized = tape.neg(objective)?;
        let grads = tape.backward(minimized)?;
        load_grads(&mut self.model.disc_params, &disc_ids, &grads)?;
        self.opt_disc.step(&mut self.model.disc_params)?;
        self.step += 1;
        Ok(DiscStats { objective: value, dim: k })
    }

    /// One pass over the shuffled dataset.
    pub fn train_epoch(
        &mut self,
        data: &FactoredDataset,
        epoch: usize,
    ) -> Result<EpochStats, TrainError> {
        let n = data.num_items();
        let dim = data.image_dim();
        let mut order: Vec<usize> = (0..n).collect();
        self.rng.shuffle(&mut order);

        let interventions_active = self.schedule.active > 0;
        let mut acc = StatAcc::default();

        for (batch_idx, chunk) in order.chunks(self.cfg.batch_size).enumerate() {
            let images = data.gather_images(chunk);
            let x = Tensor::from_vec(vec![chunk.len(), dim], images)
                .map_err(|source| TrainError::NonFinite { epoch, batch: batch_idx, source })?;

            let wake = self
                .wake_step(&x)
                .map_err(|source| TrainError::NonFinite { epoch, batch: batch_idx, source })?;
            acc.add_wake(&wake, chunk.len());

            if interventions_active && chunk.len() >= 2 {
                let sleep = self
                    .sleep_step(&wake.c, &wake.z)
                    .map_err(|source| TrainError::NonFinite { epoch, batch: batch_idx, source })?;
                acc.add_sleep(&sleep, chunk.len());
                let disc = self
                    .disc_step(&x)
                    .map_err(|source| TrainError::NonFinite { epoch, batch: batch_idx, source })?;
                acc.add_disc(&disc, chunk.len());
            }
        }
        Ok(acc.finish(epoch, self.schedule.active))
    }

    /// Dataset-mean total KL of the unstructured posterior, in nats.
    pub fn mean_kl_z(&self, data: &FactoredDataset) -> Result<f64, TrainError> {
        mean_kl_z(&self.model, data).map_err(TrainError::from)
    }
}

/// Wake sub-step outputs: loss components plus the sampled codes the sleep
/// sub-step reuses (detached).
pub struct WakeStats {
    pub elbo: f64,
    pub recon: f64,
    pub kl_c: f64,
    pub kl_z: f64,
    pub adv: Option<f64>,
    pub c: Tensor,
    pub z: Tensor,
}

pub struct SleepStats {
    pub cycle: f64,
    pub dim: usize,
}

pub struct DiscStats {
    pub objective: f64,
    pub dim: usize,
}

#[derive(Default)]
struct StatAcc {
    n: usize,
    elbo: f64,
    adv: f64,
    adv_n: usize,
    kl_c: f64,
    kl_z: f64,
    cycle: f64,
    cycle_n: usize,
    disc: f64,
    disc_n: usize,
    sleep_steps: usize,
    disc_steps: usize,
}

impl StatAcc {
    fn add_wake(&mut self, w: &WakeStats, batch: usize) {
        self.n += batch;
        self.elbo += w.elbo * batch as f64;
        self.kl_c += w.kl_c * batch as f64;
        self.kl_z += w.kl_z * batch as f64;
        if let Some(a) = w.adv {
            self.adv += a * batch as f64;
            self.adv_n += batch;
        }
    }

    fn add_sleep(&mut self, s: &SleepStats, batch: usize) {
        self.cycle += s.cycle * batch as f64;
        self.cycle_n += batch;
        self.sleep_steps += 1;
    }

    fn add_disc(&mut self, d: &DiscStats, batch: usize) {
        self.disc += d.objective * batch as f64;
        self.disc_n += batch;
        self.disc_steps += 1;
    }

    fn finish(&self, epoch: usize, active: usize) -> EpochStats {
        let div = |num: f64, den: usize| if den > 0 { num / den as f64 } else { 0.0 };
        EpochStats {
            epoch,
            loss_elbo: div(self.elbo, self.n),
            loss_cycle: div(self.cycle, self.cycle_n),
            loss_adv_enc: div(self.adv, self.adv_n),
            loss_disc: div(self.disc, self.disc_n),
            kl_z: div(self.kl_z, self.n),
            kl_c: div(self.kl_c, self.n),
            active_set: active,
            sleep_steps: self.sleep_steps,
            disc_steps: self.disc_steps,
        }
    }
}

/// Dataset-mean total KL of the unstructured posterior, computed in f64
/// from the deterministic posterior parameters.
pub fn mean_kl_z(model: &DotVae, data: &FactoredDataset) -> Result<f64, DiffError> {
    let n = data.num_items();
    let dim = data.image_dim();
    let chunk_size = 256usize;
    let mut total = 0.0f64;
    let mut idx = 0;
    while idx < n {
        let end = (idx + chunk_size).min(n);
        let indices: Vec<usize> = (idx..end).collect();
        let x = Tensor::from_vec(vec![end - idx, dim], data.gather_images(&indices))?;
        let post = model.encode(&x)?;
        let (rows, width) = post.mu_z.dims2()?;
        for r in 0..rows {
            for j in 0..width {
                let mu = post.mu_z.data()[r * width + j] as f64;
                let lv = post.logvar_z.data()[r * width + j] as f64;
                total += 0.5 * (mu * mu + lv.exp() - lv - 1.0);
            }
        }
        idx = end;
    }
    Ok(total / n as f64)
}

/// Stop rule: the epoch budget is exhausted, the configured factor count is
/// reached, or the active set is complete and `z` carries no information.
pub fn stop_check(
    mean_kl_z: f64,
    schedule: &ScheduleState,
    cfg: &TrainConfig,
    epoch: usize,
) -> Option<StopReason> {
    if let Some(desired) = cfg.desired_factors {
        if schedule.active >= desired {
            return Some(StopReason::DesiredFactorsReached);
        }
    }
    if schedule.active >= cfg.model.latent_c && mean_kl_z <= cfg.stop_kl {
        return Some(StopReason::EntangledCodeEmpty);
    }
    if epoch + 1 >= cfg.epochs {
        return Some(StopReason::EpochBudgetExhausted);
    }
    None
}

/// CSV rows for the per-epoch log.
pub fn format_log_csv(log: &[EpochStats]) -> String {
    let mut out = String::from("epoch,loss_elbo,loss_cycle,loss_adv_enc,loss_disc,kl_z,kl_c,active_set\n");
    for row in log {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.epoch,
            row.loss_elbo,
            row.loss_cycle,
            row.loss_adv_enc,
            row.loss_disc,
            row.kl_z,
            row.kl_c,
            row.active_set
        ));
    }
    out
}

/// Full training run: epochs with schedule growth, stop rule, and
/// checkpoints at every growth and at the end.
pub fn fit(
    cfg: &TrainConfig,
    data: &FactoredDataset,
    out_dir: Option<&Path>,
) -> Result<(Trainer, FitReport), TrainError> {
    cfg.validate()?;
    let input_dim = data.image_dim();
    let mut trainer = Trainer::new(cfg.clone(), input_dim)?;
    let checkpoint_dir = out_dir.map(|d| d.join("checkpoint"));
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut log: Vec<EpochStats> = Vec::new();
    let mut stop_reason = StopReason::EpochBudgetExhausted;
    let mut final_kl_z = f64::NAN;

    for epoch in 0..cfg.epochs {
        if epoch >= cfg.warmup_epochs {
            trainer.schedule.begin_interventions(epoch);
        }
        let stats = trainer.train_epoch(data, epoch)?;
        trainer.schedule.history.push(stats.loss_elbo);

        let grew = schedule_update(
            &mut trainer.schedule,
            epoch,
            cfg.sat_window,
            cfg.sat_threshold,
            cfg.model.latent_c,
        );
        let mut row = stats;
        row.active_set = trainer.schedule.active;
        log.push(row);

        if grew {
            if let Some(dir) = &checkpoint_dir {
                save_checkpoint(dir, &trainer.model, trainer.step, trainer.schedule.active)?;
            }
        }

        let kl_z = trainer.mean_kl_z(data)?;
        final_kl_z = kl_z;
        if let Some(reason) = stop_check(kl_z, &trainer.schedule, cfg, epoch) {
            stop_reason = reason;
            break;
        }
    }
    trainer.schedule.stopped = true;

    if let Some(dir) = &checkpoint_dir {
        save_checkpoint(dir, &trainer.model, trainer.step, trainer.schedule.active)?;
    }
    if let Some(dir) = out_dir {
        crate::synthdata::io::atomic_write(&dir.join("log.csv"), format_log_csv(&log).as_bytes())?;
    }

    let report = FitReport {
        final_active: trainer.schedule.active,
        final_kl_z,
        stop_reason,
        checkpoint_dir,
        log,
    };
    Ok((trainer, report))
}
