//! Adam optimizer with per-parameter moment state.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::nn::Parameter;

/// Adam with bias-corrected first and second moments.
///
/// Moment buffers are keyed by parameter name, so the same optimizer can be
/// reused across parameters that are borrowed mutably one at a time.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Number of completed steps; incremented once per [`Adam::step`].
    pub t: u64,
    moments: HashMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Default for Adam {
    fn default() -> Self {
        Adam::new()
    }
}

impl Adam {
    pub fn new() -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            moments: HashMap::new(),
        }
    }

    /// Apply one update over all `params` at learning rate `lr`.
    ///
    /// All gradients are validated to be finite before any parameter is
    /// touched, so a NaN anywhere leaves every parameter unchanged. Gradients
    /// are zeroed after a successful step.
    pub fn step(&mut self, params: &mut [&mut Parameter], lr: f64) -> Result<()> {
        for p in params.iter() {
            if !p.grads_finite() {
                return Err(Error::NonFiniteGrad {
                    name: p.name.clone(),
                });
            }
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for p in params.iter_mut() {
            let (m, v) = self
                .moments
                .entry(p.name.clone())
                .or_insert_with(|| (vec![0.0; p.len()], vec![0.0; p.len()]));
            debug_assert_eq!(m.len(), p.len(), "parameter {} changed size", p.name);
            for i in 0..p.len() {
                let g = p.grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p.values[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
            p.zero_grad();
        }
        Ok(())
    }
}
