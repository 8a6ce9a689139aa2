//! Procedural ground-truth-factored image datasets.
//!
//! Every dataset is the full Cartesian product of its factor grid: row `i`
//! holds the deterministic binary/flat-shaded render of the factor levels
//! `index_to_factors(i)`. Rasterization is exact (no anti-aliasing), so
//! renders are bit-reproducible and pixel-count oracles hold exactly.

pub(crate) mod io;
mod render;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::SplitMixRng;

pub use io::{load_dataset, save_dataset};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid factor grid: {0}")]
    InvalidGrid(String),
    #[error("factor level {level} out of range for factor {factor} (cardinality {cardinality})")]
    LevelOutOfRange { factor: usize, level: usize, cardinality: usize },
    #[error("shape would clip the frame at factor combination {0:?}")]
    ShapeClipsFrame(Vec<usize>),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed dataset file: {0}")]
    Malformed(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// One generative factor: a name, its cardinality, and the (strictly
/// increasing, for ordinal factors) grid of underlying values.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Factor {
    pub name: String,
    pub cardinality: usize,
    pub values: Vec<f64>,
}

/// The Cartesian ground-truth factor structure of a synthetic dataset.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FactorGrid {
    pub factors: Vec<Factor>,
    pub resolution: usize,
    pub channels: usize,
}

impl FactorGrid {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.factors.is_empty() {
            return Err(DataError::InvalidGrid("no factors".into()));
        }
        for f in &self.factors {
            if f.cardinality < 2 {
                return Err(DataError::InvalidGrid(format!(
                    "factor {} has cardinality {} < 2",
                    f.name, f.cardinality
                )));
            }
            if f.values.len() != f.cardinality {
                return Err(DataError::InvalidGrid(format!(
                    "factor {} has {} values for cardinality {}",
                    f.name,
                    f.values.len(),
                    f.cardinality
                )));
            }
        }
        if self.channels != 1 {
            return Err(DataError::InvalidGrid(format!(
                "only single-channel datasets are supported, got {} channels",
                self.channels
            )));
        }
        Ok(())
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.cardinality).collect()
    }

    /// Dataset size: the product of all cardinalities.
    pub fn num_items(&self) -> usize {
        self.factors.iter().map(|f| f.cardinality).product()
    }

    /// Row-major flat index of a level combination.
    pub fn factors_to_index(&self, levels: &[usize]) -> Result<usize, DataError> {
        if levels.len() != self.factors.len() {
            return Err(DataError::InvalidGrid(format!(
                "expected {} levels, got {}",
                self.factors.len(),
                levels.len()
            )));
        }
        let mut idx = 0usize;
        for (f, (&level, factor)) in levels.iter().zip(&self.factors).enumerate() {
            if level >= factor.cardinality {
                return Err(DataError::LevelOutOfRange {
                    factor: f,
                    level,
                    cardinality: factor.cardinality,
                });
            }
            idx = idx * factor.cardinality + level;
        }
        Ok(idx)
    }

    /// Inverse of [`factors_to_index`](Self::factors_to_index).
    pub fn index_to_factors(&self, mut index: usize) -> Result<Vec<usize>, DataError> {
        let n = self.num_items();
        if index >= n {
            return Err(DataError::InvalidGrid(format!("index {index} out of range for {n} items")));
        }
        let mut levels = vec![0usize; self.factors.len()];
        for (f, factor) in self.factors.iter().enumerate().rev() {
            levels[f] = index % factor.cardinality;
            index /= factor.cardinality;
        }
        Ok(levels)
    }
}

/// A fully materialized factored dataset: the grid, all `N = prod(cards)`
/// rendered images, and the integer factor levels of every row.
#[derive(Clone, Debug)]
pub struct FactoredDataset {
    pub grid: FactorGrid,
    /// `[N, H*W]` row-major pixel values in `[0, 1]`.
    pub images: Vec<f32>,
    /// `[N, F]` integer levels.
    pub factor_indices: Vec<u16>,
}

impl FactoredDataset {
    pub fn num_items(&self) -> usize {
        self.grid.num_items()
    }

    pub fn image_dim(&self) -> usize {
        self.grid.resolution * self.grid.resolution
    }

    pub fn image(&self, idx: usize) -> &[f32] {
        let d = self.image_dim();
        &self.images[idx * d..(idx + 1) * d]
    }

    pub fn levels(&self, idx: usize) -> &[u16] {
        let f = self.grid.num_factors();
        &self.factor_indices[idx * f..(idx + 1) * f]
    }

    /// Copies the images at `indices` into one `[len, H*W]` buffer.
    pub fn gather_images(&self, indices: &[usize]) -> Vec<f32> {
        let d = self.image_dim();
        let mut out = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            out.extend_from_slice(self.image(i));
        }
        out
    }

    /// Draws `batch` samples that all share a fixed level of factor `k`
    /// (chosen from the stream); every other factor is i.i.d. uniform.
    ///
    /// Returns the sampled dataset indices and the fixed level.
    pub fn sample_fixed_factor_batch(
        &self,
        k: usize,
        batch: usize,
        rng: &mut SplitMixRng,
    ) -> Result<(Vec<usize>, usize), DataError> {
        if k >= self.grid.num_factors() {
            return Err(DataError::LevelOutOfRange {
                factor: k,
                level: 0,
                cardinality: self.grid.num_factors(),
            });
        }
        if batch < 2 {
            return Err(DataError::InvalidGrid("fixed-factor batch needs at least 2 samples".into()));
        }
        let cards = self.grid.cardinalities();
        let fixed_level = rng.next_below(cards[k] as u64) as usize;
        let mut indices = Vec::with_capacity(batch);
        let mut levels = vec![0usize; cards.len()];
        for _ in 0..batch {
            for (f, &card) in cards.iter().enumerate() {
                levels[f] = if f == k { fixed_level } else { rng.next_below(card as u64) as usize };
            }
            indices.push(self.grid.factors_to_index(&levels)?);
        }
        Ok((indices, fixed_level))
    }
}

/// Deterministic sprite dataset: `shape x scale x pos-x x pos-y`
/// (optionally `x orientation`), binary foreground on black.
pub fn generate_dsprites_mini(
    resolution: usize,
    cardinalities: &[usize],
    orientation_levels: usize,
) -> Result<FactoredDataset, DataError> {
    render::generate_dsprites_mini(resolution, cardinalities, orientation_levels)
}

/// Deterministic flat-shaded scene dataset:
/// `floor-hue x wall-hue x object-hue x scale x shape`, grayscale.
pub fn generate_shapes3d_mini(
    resolution: usize,
    cardinalities: &[usize],
) -> Result<FactoredDataset, DataError> {
    render::generate_shapes3d_mini(resolution, cardinalities)
}

#[cfg(test)]
mod tests;
