//! Minimal trainable numerical core.
//!
//! Explicit forward/backward layers over f64 vectors: no autodiff graph,
//! every backward pass is written out by hand and checked against central
//! finite differences. Training state is owned by a single thread;
//! inference over frozen parameters is pure.

mod adam;
mod checkpoint;
mod dense;
mod dropout;
mod embedding;
mod gradcheck;
mod param;
mod rng;

pub use adam::Adam;
pub use checkpoint::{
    checkpoint_bytes, fingerprint, read_checkpoint, read_checkpoint_bytes, write_checkpoint,
    CheckpointHeader, TensorMeta, CHECKPOINT_MAGIC,
};
pub use dense::{Activation, DenseCache, DenseLayer};
pub use dropout::Dropout;
pub use embedding::{EmbedCache, EmbeddingTable};
pub use gradcheck::{grad_check, DEFAULT_FD_EPSILON};
pub use param::Parameter;
pub use rng::{derive_seed, seeded_rng};

use crate::error::{Error, Result};

/// Linearly decayed learning rate: `base_lr * (1 - step / total_steps)`.
pub fn lr_at(step: usize, total_steps: usize, base_lr: f64) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::Config("total_steps must be >= 1".into()));
    }
    if step > total_steps {
        return Err(Error::Config(format!(
            "step {step} past end of schedule ({total_steps} steps)"
        )));
    }
    Ok(base_lr * (1.0 - step as f64 / total_steps as f64))
}
