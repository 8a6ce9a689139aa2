//! Interventions: replacing one structured dimension across a batch.

use serde::{Deserialize, Serialize};

use crate::diffcore::{DiffError, SplitMixRng, Tensor};

/// Where the replacement values come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InterventionVariant {
    /// Values taken from other examples of the same batch.
    #[serde(rename = "swap")]
    BatchSwap,
    /// Values drawn fresh from the unit-normal prior.
    #[serde(rename = "prior")]
    PriorSample,
}

impl std::fmt::Display for InterventionVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InterventionVariant::BatchSwap => write!(f, "swap"),
            InterventionVariant::PriorSample => write!(f, "prior"),
        }
    }
}

/// Record of one intervention: the changed dimension, the replacement
/// values, and how they were produced.
#[derive(Clone, Debug)]
pub struct InterventionSpec {
    /// Zero-based index of the intervened dimension.
    pub dim: usize,
    pub t_prime: Vec<f32>,
    pub variant: InterventionVariant,
    /// The cyclic shift used under batch-swap.
    pub shift: Option<usize>,
}

/// Replaces column `dim` of `c` (shape `[B, K]`) and leaves every other
/// entry untouched.
///
/// Batch-swap rotates the column by a uniformly random shift in `[1, B-1]`,
/// so every example receives the value of a different example. Prior-sample
/// draws the replacement column from `N(0, 1)`.
pub fn intervene(
    c: &Tensor,
    dim: usize,
    variant: InterventionVariant,
    rng: &mut SplitMixRng,
) -> Result<(Tensor, InterventionSpec), DiffError> {
    let (batch, width) = c.dims2()?;
    if c.rank() != 2 {
        return Err(DiffError::Invalid(format!("intervene expects [B, K], got {:?}", c.shape())));
    }
    if dim >= width {
        return Err(DiffError::Invalid(format!("intervened dim {dim} out of range for width {width}")));
    }
    let (t_prime, shift) = match variant {
        InterventionVariant::BatchSwap => {
            if batch < 2 {
                return Err(DiffError::Invalid(format!(
                    "batch-swap needs at least 2 examples, got {batch}"
                )));
            }
            let shift = 1 + rng.next_below(batch as u64 - 1) as usize;
            let col: Vec<f32> = (0..batch).map(|i| c.data()[i * width + dim]).collect();
            let swapped: Vec<f32> = (0..batch).map(|i| col[(i + shift) % batch]).collect();
            (swapped, Some(shift))
        }
        InterventionVariant::PriorSample => {
            let mut vals = vec![0.0f32; batch];
            rng.fill_normal_f32(&mut vals);
            (vals, None)
        }
    };
    let mut out = c.clone();
    out.set_requires_grad(false);
    for (i, &v) in t_prime.iter().enumerate() {
        out.data_mut()[i * width + dim] = v;
    }
    if !out.all_finite() {
        return Err(DiffError::NonFinite { op: "intervene" });
    }
    Ok((out, InterventionSpec { dim, t_prime, variant, shift }))
}
