//! Central-difference gradient verification.

use super::error::DiffError;
use super::tape::{NodeId, Tape};
use super::tensor::Tensor;

/// Compares the analytic gradient of a scalar-valued tensor function against
/// central differences at `x`.
///
/// Returns the maximum over coordinates of
/// `|analytic - numeric| / max(1, |analytic|)`.
pub fn gradient_check<F>(f: F, x: &Tensor, h: f32) -> Result<f64, DiffError>
where
    F: Fn(&mut Tape, NodeId) -> Result<NodeId, DiffError>,
{
    // analytic gradient
    let mut tape = Tape::new();
    let mut tracked = x.clone();
    tracked.set_requires_grad(true);
    let xid = tape.leaf(&tracked, true);
    let loss = f(&mut tape, xid)?;
    if !tape.value(loss).is_scalar() {
        return Err(DiffError::NonScalarLoss { shape: tape.value(loss).shape().to_vec() });
    }
    // a loss that never touches x has an identically zero gradient
    let analytic = match tape.backward(loss) {
        Ok(grads) => grads.get(xid).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; x.numel()]),
        Err(DiffError::DetachedGraph) => vec![0.0; x.numel()],
        Err(other) => return Err(other),
    };

    let eval = |probe: &Tensor| -> Result<f64, DiffError> {
        let mut tape = Tape::new();
        let id = tape.constant(probe.clone());
        let out = f(&mut tape, id)?;
        Ok(tape.value(out).data()[0] as f64)
    };

    let mut max_err = 0.0f64;
    let mut probe = x.clone();
    probe.set_requires_grad(false);
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = eval(&probe)?;
        probe.data_mut()[i] = orig - h;
        let down = eval(&probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h as f64);
        let a = analytic[i] as f64;
        let err = (a - numeric).abs() / a.abs().max(1.0);
        if err > max_err {
            max_err = err;
        }
    }
    Ok(max_err)
}
