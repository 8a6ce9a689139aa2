//! Dense multilayer perceptron over the tape.

use crate::diffcore::{DiffError, NodeId, ParamSet, SplitMixRng, Tape, Tensor};

/// Layer sizes plus a handle into a [`ParamSet`] laid out as
/// `(w0, b0, w1, b1, ...)` starting at `param_offset`.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub param_offset: usize,
}

impl Mlp {
    /// Appends freshly initialized parameters for a `sizes[0] -> ... ->
    /// sizes.last()` network to `params`. Hidden layers use scaled-normal
    /// init for relu fan-in; the output layer uses a smaller scale.
    pub fn init(
        name: &str,
        sizes: Vec<usize>,
        params: &mut ParamSet,
        rng: &mut SplitMixRng,
    ) -> Self {
        assert!(sizes.len() >= 2, "mlp needs at least input and output sizes");
        let param_offset = params.len();
        for l in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let last = l == sizes.len() - 2;
            let std = if last {
                (1.0 / fan_in as f64).sqrt() as f32
            } else {
                (2.0 / fan_in as f64).sqrt() as f32
            };
            params.push(format!("{name}.w{l}"), Tensor::randn(vec![fan_in, fan_out], std, rng));
            params.push(format!("{name}.b{l}"), Tensor::zeros(vec![fan_out]));
        }
        Mlp { sizes, param_offset }
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        2 * self.num_layers()
    }

    /// Forward pass with relu on every layer except the last.
    ///
    /// `param_ids` must be the node ids of the full `ParamSet` this network
    /// was initialized into, registered in declaration order.
    pub fn forward(
        &self,
        tape: &mut Tape,
        param_ids: &[NodeId],
        input: NodeId,
    ) -> Result<NodeId, DiffError> {
        let mut h = input;
        for l in 0..self.num_layers() {
            let w = param_ids[self.param_offset + 2 * l];
            let b = param_ids[self.param_offset + 2 * l + 1];
            let lin = tape.matmul(h, w)?;
            h = tape.add(lin, b)?;
            if l + 1 < self.num_layers() {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }
}
