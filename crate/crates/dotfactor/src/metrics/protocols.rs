//! Vote-based classifier protocols over fixed-factor batches.

use crate::diffcore::SplitMixRng;
use crate::synthdata::FactoredDataset;

use super::linmodel::{standardize, SoftmaxRegression};
use super::{build_code_matrix, CodeEncoder, MetricError, ProtocolConfig};

/// Code dimensions whose posterior mean varies less than this over the whole
/// dataset count as collapsed.
const COLLAPSE_STD: f64 = 0.05;

fn sample_levels(ds: &FactoredDataset, rng: &mut SplitMixRng) -> Vec<usize> {
    ds.grid
        .cardinalities()
        .iter()
        .map(|&card| rng.next_below(card as u64) as usize)
        .collect()
}

/// Pair-difference protocol: per vote, average the absolute code difference
/// over pairs that share one factor's value, then predict the shared factor
/// with a multinomial linear classifier. Returns held-out accuracy.
pub fn betavae_score(
    encoder: &dyn CodeEncoder,
    ds: &FactoredDataset,
    cfg: &ProtocolConfig,
    seed: u64,
) -> Result<f64, MetricError> {
    let n_factors = ds.grid.num_factors();
    if n_factors < 2 {
        return Err(MetricError::Invalid("need at least 2 factors to vote on".into()));
    }
    let dims = encoder.code_dim();
    let mut rng = SplitMixRng::new(seed);
    let mut features = vec![0.0f64; cfg.votes * dims];
    let mut labels = vec![0usize; cfg.votes];

    let image_dim = ds.image_dim();
    let mut batch_indices = Vec::with_capacity(2 * cfg.batch);
    for vote in 0..cfg.votes {
        let k = rng.next_below(n_factors as u64) as usize;
        labels[vote] = k;
        batch_indices.clear();
        for _ in 0..cfg.batch {
            let mut a = sample_levels(ds, &mut rng);
            let mut b = sample_levels(ds, &mut rng);
            let shared = rng.next_below(ds.grid.cardinalities()[k] as u64) as usize;
            a[k] = shared;
            b[k] = shared;
            batch_indices.push(ds.grid.factors_to_index(&a)?);
            batch_indices.push(ds.grid.factors_to_index(&b)?);
        }
        let images = ds.gather_images(&batch_indices);
        debug_assert_eq!(images.len(), 2 * cfg.batch * image_dim);
        let codes = encoder.encode_codes(&images, 2 * cfg.batch);
        let feat = &mut features[vote * dims..(vote + 1) * dims];
        for pair in 0..cfg.batch {
            let a = &codes[(2 * pair) * dims..(2 * pair + 1) * dims];
            let b = &codes[(2 * pair + 1) * dims..(2 * pair + 2) * dims];
            for j in 0..dims {
                feat[j] += (a[j] - b[j]).abs();
            }
        }
        for v in feat.iter_mut() {
            *v /= cfg.batch as f64;
        }
    }

    standardize(&mut features, cfg.votes, dims);
    let train = (cfg.votes as f64 * cfg.train_frac) as usize;
    let model = SoftmaxRegression::fit(
        &features[..train * dims],
        &labels[..train],
        train,
        dims,
        n_factors,
        400,
        1.0,
    );
    Ok(model.accuracy(&features[train * dims..], &labels[train..], cfg.votes - train))
}

/// Variance-minimum protocol: per vote, fix one factor, normalize the codes
/// of a fixed-factor batch by the global per-dimension deviation, and vote
/// for the dimension with the smallest variance. A majority-vote table maps
/// dimensions to factors; returns held-out vote accuracy.
///
/// Dimensions whose codes never vary over the dataset are pruned; an
/// all-collapsed code is an error.
pub fn factorvae_score(
    encoder: &dyn CodeEncoder,
    ds: &FactoredDataset,
    cfg: &ProtocolConfig,
    seed: u64,
) -> Result<f64, MetricError> {
    let n_factors = ds.grid.num_factors();
    let dims = encoder.code_dim();
    let codes = build_code_matrix(encoder, ds);
    let mut stds = vec![0.0f64; dims];
    for j in 0..dims {
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for r in 0..codes.rows {
            let v = codes.codes[r * dims + j];
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / codes.rows as f64;
        stds[j] = (sumsq / codes.rows as f64 - mean * mean).max(0.0).sqrt();
    }
    // dead dims carry no usable signal and only add noise to the
    // variance-argmin vote
    let retained: Vec<usize> = (0..dims).filter(|&j| stds[j] > COLLAPSE_STD).collect();
    if retained.is_empty() {
        return Err(MetricError::AllDimsCollapsed);
    }

    let mut rng = SplitMixRng::new(seed);
    let mut votes = Vec::with_capacity(cfg.votes);
    for _ in 0..cfg.votes {
        let k = rng.next_below(n_factors as u64) as usize;
        let (indices, _) = ds.sample_fixed_factor_batch(k, cfg.batch, &mut rng)?;
        let images = ds.gather_images(&indices);
        let batch_codes = encoder.encode_codes(&images, indices.len());
        let mut best_dim = retained[0];
        let mut best_var = f64::INFINITY;
        for &j in &retained {
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for r in 0..indices.len() {
                let v = batch_codes[r * dims + j] / stds[j];
                sum += v;
                sumsq += v * v;
            }
            let mean = sum / indices.len() as f64;
            let var = sumsq / indices.len() as f64 - mean * mean;
            if var < best_var {
                best_var = var;
                best_dim = j;
            }
        }
        votes.push((best_dim, k));
    }

    let train = (cfg.votes as f64 * cfg.train_frac) as usize;
    let mut table = vec![vec![0usize; n_factors]; dims];
    for &(dim, k) in &votes[..train] {
        table[dim][k] += 1;
    }
    let majority: Vec<usize> = table
        .iter()
        .map(|row| {
            row.iter().enumerate().max_by_key(|&(_, &c)| c).map(|(k, _)| k).unwrap_or(0)
        })
        .collect();
    let eval = &votes[train..];
    if eval.is_empty() {
        return Err(MetricError::Invalid("no held-out votes".into()));
    }
    let correct = eval.iter().filter(|&&(dim, k)| majority[dim] == k).count();
    Ok(correct as f64 / eval.len() as f64)
}
