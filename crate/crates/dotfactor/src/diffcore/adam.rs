//! Bias-corrected Adam over a [`ParamSet`].

use serde::{Deserialize, Serialize};

use super::error::DiffError;
use super::tensor::ParamSet;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), DiffError> {
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(DiffError::Invalid(format!("adam lr must be > 0, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(DiffError::Invalid(format!("adam {name} must be in [0,1), got {b}")));
            }
        }
        if !self.eps.is_finite() || self.eps <= 0.0 {
            return Err(DiffError::Invalid(format!("adam eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }
}

/// Per-parameter first/second moment state plus the shared step counter.
pub struct Adam {
    cfg: AdamConfig,
    t: u64,
    moments: Vec<(Vec<f32>, Vec<f32>)>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &ParamSet) -> Result<Self, DiffError> {
        cfg.validate()?;
        let moments = params
            .iter()
            .map(|(_, t)| (vec![0.0f32; t.numel()], vec![0.0f32; t.numel()]))
            .collect();
        Ok(Adam { cfg, t: 0, moments })
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update using the gradients stored on each parameter.
    ///
    /// Gradients are consumed; missing or non-finite gradients are errors.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<(), DiffError> {
        if params.len() != self.moments.len() {
            return Err(DiffError::Invalid(format!(
                "optimizer tracks {} tensors, got {}",
                self.moments.len(),
                params.len()
            )));
        }
        self.t += 1;
        let bc1 = 1.0 - (self.cfg.beta1 as f64).powi(self.t as i32);
        let bc2 = 1.0 - (self.cfg.beta2 as f64).powi(self.t as i32);
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let (lr, eps) = (self.cfg.lr, self.cfg.eps);

        for (idx, (_, tensor)) in params.iter_mut().enumerate() {
            let grad = match tensor.grad() {
                Some(g) => g.to_vec(),
                None => {
                    return Err(DiffError::Invalid(format!(
                        "parameter {idx} has no gradient for adam step"
                    )))
                }
            };
            if grad.len() != tensor.numel() {
                return Err(DiffError::ShapeMismatch {
                    op: "adam_step",
                    lhs: tensor.shape().to_vec(),
                    rhs: vec![grad.len()],
                });
            }
            if grad.iter().any(|v| !v.is_finite()) {
                return Err(DiffError::NonFinite { op: "adam_step" });
            }
            let (m, v) = &mut self.moments[idx];
            let data = tensor.data_mut();
            for i in 0..data.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                let m_hat = m[i] as f64 / bc1;
                let v_hat = v[i] as f64 / bc2;
                data[i] -= (lr as f64 * m_hat / (v_hat.sqrt() + eps as f64)) as f32;
            }
            tensor.clear_grad();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Tensor;

    fn param_set(values: Vec<f32>) -> ParamSet {
        let mut ps = ParamSet::new();
        let n = values.len();
        ps.push("w", Tensor::from_vec(vec![n], values).unwrap());
        ps
    }

    #[test]
    fn zero_grad_leaves_params_unchanged() {
        let mut ps = param_set(vec![0.3, -0.7, 2.0]);
        let before = ps.flat_values();
        let mut opt = Adam::new(AdamConfig::default(), &ps).unwrap();
        ps.tensor_mut(0).set_grad(vec![0.0; 3]).unwrap();
        opt.step(&mut ps).unwrap();
        assert_eq!(ps.flat_values(), before);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn first_step_is_bias_corrected_sign_step() {
        // Closed-form single step from zero moments with constant gradient g:
        // m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps) ~ lr * sign(g).
        let cfg = AdamConfig { lr: 0.01, ..AdamConfig::default() };
        let g = vec![0.5f32, -2.0, 0.001];
        let mut ps = param_set(vec![1.0, 1.0, 1.0]);
        let mut opt = Adam::new(cfg, &ps).unwrap();
        ps.tensor_mut(0).set_grad(g.clone()).unwrap();
        opt.step(&mut ps).unwrap();
        for (i, &p) in ps.tensor(0).data().iter().enumerate() {
            let expected = 1.0 - cfg.lr as f64 * g[i] as f64 / (g[i].abs() as f64 + cfg.eps as f64);
            assert!(
                (p as f64 - expected).abs() < 1e-6,
                "param {i}: {p} vs {expected}"
            );
        }
    }

    #[test]
    fn deterministic_across_runs() {
        let run = || {
            let mut ps = param_set(vec![0.1, 0.2, 0.3, 0.4]);
            let mut opt = Adam::new(AdamConfig::default(), &ps).unwrap();
            for step in 0..10 {
                let g: Vec<f32> = (0..4).map(|i| ((i + step) as f32 * 0.37).sin()).collect();
                ps.tensor_mut(0).set_grad(g).unwrap();
                opt.step(&mut ps).unwrap();
            }
            ps.flat_values().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_missing_and_non_finite_grads() {
        let mut ps = param_set(vec![1.0]);
        let mut opt = Adam::new(AdamConfig::default(), &ps).unwrap();
        assert!(opt.step(&mut ps).is_err());
        ps.tensor_mut(0).set_grad(vec![f32::NAN]).unwrap();
        assert!(opt.step(&mut ps).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(AdamConfig { lr: 0.0, ..AdamConfig::default() }.validate().is_err());
        assert!(AdamConfig { beta1: 1.0, ..AdamConfig::default() }.validate().is_err());
        assert!(AdamConfig { eps: 0.0, ..AdamConfig::default() }.validate().is_err());
        assert!(AdamConfig::default().validate().is_ok());
    }
}
