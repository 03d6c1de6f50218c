//! Inverted dropout.

use rand::Rng;

use crate::error::{Error, Result};

/// Dropout with inverted scaling: kept units are divided by `1 - rate` at
/// train time so inference needs no rescaling.
#[derive(Debug, Clone)]
pub struct Dropout {
    pub rate: f64,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::OutOfDomain {
                name: "dropout rate",
                value: rate,
                lo: 0.0,
                hi: 1.0,
            });
        }
        Ok(Dropout { rate })
    }

    /// Apply the mask in place, returning it for the backward pass.
    ///
    /// The mask holds the multiplier per unit: `0` for dropped units,
    /// `1/(1-rate)` for kept ones.
    pub fn forward_train(&self, values: &mut [f64], rng: &mut (impl Rng + ?Sized)) -> Vec<f64> {
        let keep = 1.0 - self.rate;
        let scale = 1.0 / keep;
        let mut mask = vec![0.0; values.len()];
        for (v, m) in values.iter_mut().zip(&mut mask) {
            if rng.random::<f64>() < keep {
                *m = scale;
                *v *= scale;
            } else {
                *v = 0.0;
            }
        }
        mask
    }

    /// Backward is the same elementwise product as forward.
    pub fn backward(mask: &[f64], grad: &mut [f64]) {
        for (g, m) in grad.iter_mut().zip(mask) {
            *g *= m;
        }
    }
}
