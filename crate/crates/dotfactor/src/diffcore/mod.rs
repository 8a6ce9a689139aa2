//! Numeric substrate: tensors, reverse-mode autodiff, Adam, RNG.

mod adam;
mod error;
mod gradcheck;
mod rng;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use error::DiffError;
pub use gradcheck::gradient_check;
pub use rng::{derive_seed, SplitMixRng};
pub use tape::{load_grads, register_params, Gradients, NodeId, Tape};
pub use tensor::{ParamSet, Tensor};

#[cfg(test)]
mod tests;
