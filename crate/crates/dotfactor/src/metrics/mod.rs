//! Disentanglement scores computed from a frozen encoder and a factored
//! dataset. All metric arithmetic runs in f64.

mod binning;
mod dci;
mod linmodel;
mod mi;
mod protocols;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::{DiffError, Tensor};
use crate::dotvae::DotVae;
use crate::synthdata::{DataError, FactoredDataset};

pub use binning::{assign_bin, discretize, equal_frequency_edges};
pub use dci::{dci, dci_from_importance, explicitness, DciScores};
pub use mi::{mi_matrix, mig, modularity};
pub use protocols::{betavae_score, factorvae_score};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("all code dimensions collapsed")]
    AllDimsCollapsed,
    #[error("need at least 2 varying code dimensions, found {0}")]
    TooFewDims(usize),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("{0}")]
    Invalid(String),
}

/// Anything that maps image batches to code vectors.
pub trait CodeEncoder: Sync {
    fn code_dim(&self) -> usize;
    /// Encodes `count` images (flattened, row-major) into `count * code_dim`
    /// f64 codes.
    fn encode_codes(&self, images: &[f32], count: usize) -> Vec<f64>;
}

impl CodeEncoder for DotVae {
    fn code_dim(&self) -> usize {
        self.latent_c() + self.latent_z()
    }

    /// Posterior means, structured block first.
    fn encode_codes(&self, images: &[f32], count: usize) -> Vec<f64> {
        let dim = images.len() / count;
        let x = Tensor::from_vec(vec![count, dim], images.to_vec()).expect("image batch shape");
        let post = self.encode(&x).expect("finite encoder output");
        let (kc, kz) = (self.latent_c(), self.latent_z());
        let mut out = vec![0.0f64; count * (kc + kz)];
        for r in 0..count {
            for j in 0..kc {
                out[r * (kc + kz) + j] = post.mu_c.data()[r * kc + j] as f64;
            }
            for j in 0..kz {
                out[r * (kc + kz) + kc + j] = post.mu_z.data()[r * kz + j] as f64;
            }
        }
        out
    }
}

/// Codes for every dataset item, aligned with the factor levels.
#[derive(Clone, Debug)]
pub struct CodeMatrix {
    /// `[rows, dims]` row-major.
    pub codes: Vec<f64>,
    pub dims: usize,
    pub rows: usize,
    /// `[rows, F]` integer levels.
    pub factors: Vec<u16>,
    pub cards: Vec<usize>,
}

/// Encodes the whole dataset in chunks.
pub fn build_code_matrix(encoder: &dyn CodeEncoder, ds: &FactoredDataset) -> CodeMatrix {
    let n = ds.num_items();
    let dims = encoder.code_dim();
    let mut codes = Vec::with_capacity(n * dims);
    let chunk = 256usize;
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let indices: Vec<usize> = (start..end).collect();
        let images = ds.gather_images(&indices);
        codes.extend(encoder.encode_codes(&images, end - start));
        start = end;
    }
    CodeMatrix {
        codes,
        dims,
        rows: n,
        factors: ds.factor_indices.clone(),
        cards: ds.grid.cardinalities(),
    }
}

/// Protocol sizes shared by the vote-based scores.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Samples (or pairs) per vote.
    pub batch: usize,
    pub votes: usize,
    /// Bins for code discretization.
    pub bins: usize,
    pub train_frac: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig { batch: 64, votes: 800, bins: 20, train_frac: 0.8 }
    }
}

/// Mean and spread of one score over the evaluation seeds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

impl Summary {
    fn from_values(values: Vec<f64>) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Summary { mean, std: var.sqrt(), values }
    }
}

/// The six scores plus per-dimension diagnostics for one checkpoint.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricReport {
    pub factorvae: Summary,
    pub dci_d: Summary,
    pub dci_c: Summary,
    pub dci_i: Summary,
    pub mig: Summary,
    pub betavae: Summary,
    pub modularity: Summary,
    pub explicitness: Summary,
    /// `[code dims, factors]` mutual information in nats.
    pub mi_matrix: Vec<Vec<f64>>,
    pub factor_entropies: Vec<f64>,
    pub seeds: Vec<u64>,
    pub protocol: ProtocolConfig,
}

impl MetricReport {
    pub fn all_in_range(&self) -> bool {
        [
            &self.factorvae,
            &self.dci_d,
            &self.dci_c,
            &self.dci_i,
            &self.mig,
            &self.betavae,
            &self.modularity,
            &self.explicitness,
        ]
        .iter()
        .all(|s| s.values.iter().all(|&v| (0.0..=1.0).contains(&v) && v.is_finite()))
    }
}

/// Runs all six scores over the requested seeds.
///
/// The information-theoretic scores are deterministic functions of the
/// codes, so their per-seed values coincide; the vote- and split-based
/// protocols vary with the seed.
pub fn evaluate(
    encoder: &dyn CodeEncoder,
    ds: &FactoredDataset,
    protocol: &ProtocolConfig,
    seeds: &[u64],
) -> Result<MetricReport, MetricError> {
    if seeds.is_empty() {
        return Err(MetricError::Invalid("need at least one seed".into()));
    }
    let codes = build_code_matrix(encoder, ds);
    let (mi, entropies) = mi_matrix(&codes, protocol.bins);
    let mig_value = mig(&mi, &entropies);
    let modularity_value = modularity(&mi);

    let mut factorvae_vals = Vec::with_capacity(seeds.len());
    let mut betavae_vals = Vec::with_capacity(seeds.len());
    let mut dci_d_vals = Vec::with_capacity(seeds.len());
    let mut dci_c_vals = Vec::with_capacity(seeds.len());
    let mut dci_i_vals = Vec::with_capacity(seeds.len());
    let mut expl_vals = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        factorvae_vals.push(factorvae_score(encoder, ds, protocol, seed)?);
        betavae_vals.push(betavae_score(encoder, ds, protocol, seed)?);
        let d = dci(&codes, seed)?;
        dci_d_vals.push(d.disentanglement);
        dci_c_vals.push(d.completeness);
        dci_i_vals.push(d.informativeness);
        expl_vals.push(explicitness(&codes, seed)?);
    }

    Ok(MetricReport {
        factorvae: Summary::from_values(factorvae_vals),
        dci_d: Summary::from_values(dci_d_vals),
        dci_c: Summary::from_values(dci_c_vals),
        dci_i: Summary::from_values(dci_i_vals),
        mig: Summary::from_values(vec![mig_value; seeds.len()]),
        betavae: Summary::from_values(betavae_vals),
        modularity: Summary::from_values(vec![modularity_value; seeds.len()]),
        explicitness: Summary::from_values(expl_vals),
        mi_matrix: mi,
        factor_entropies: entropies,
        seeds: seeds.to_vec(),
        protocol: *protocol,
    })
}
