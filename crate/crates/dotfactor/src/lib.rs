//! Split-latent variational autoencoder trained with per-dimension latent
//! interventions, a latent adversary, and a progressive one-factor-at-a-time
//! schedule, together with procedural ground-truth datasets and the standard
//! disentanglement metric suite.
//!
//! Modules:
//! - [`diffcore`]: dense tensors, reverse-mode autodiff over a linear tape,
//!   Adam, and a seedable counter-based RNG.
//! - [`synthdata`]: procedural factor-grid image datasets and their on-disk
//!   format.
//! - [`dotvae`]: the split-latent model, its losses, and the intervention
//!   operator.
//! - [`trainer`]: the two-step training loop with the progressive
//!   intervention schedule.
//! - [`metrics`]: the six disentanglement scores computed from a frozen
//!   encoder.

// index-heavy numeric loops read better than iterator chains here
#![allow(clippy::needless_range_loop)]

pub mod diffcore;
pub mod dotvae;
pub mod metrics;
pub mod synthdata;
pub mod trainer;
pub mod traversal;

pub use diffcore::{Adam, AdamConfig, DiffError, Gradients, NodeId, ParamSet, SplitMixRng, Tape, Tensor};
pub use dotvae::{DotVae, InterventionSpec, InterventionVariant, LatentPosterior, ModelConfig};
pub use metrics::{CodeEncoder, MetricReport, ProtocolConfig};
pub use synthdata::{FactorGrid, FactoredDataset};
pub use trainer::{fit, FitReport, TrainConfig, Trainer};
