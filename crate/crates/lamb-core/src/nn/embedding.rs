//! Token embedding table with mean pooling.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::Parameter;

/// Token ids recorded by [`EmbeddingTable::embed_mean`] for the backward pass.
#[derive(Debug, Clone)]
pub struct EmbedCache {
    pub ids: Vec<usize>,
}

/// `vocab x dim` lookup table; sequences embed as the mean of their rows.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub table: Parameter,
    pub dim: usize,
}

impl EmbeddingTable {
    /// Rows drawn from N(0, 0.02), matching the rest of the init scheme.
    pub fn new(name: &str, vocab: usize, dim: usize, rng: &mut impl Rng) -> Self {
        EmbeddingTable {
            table: Parameter::normal(name, vocab, dim, 0.02, rng),
            dim,
        }
    }

    pub fn vocab(&self) -> usize {
        self.table.rows
    }

    /// Mean of the rows indexed by `ids`; the empty sequence maps to zero.
    pub fn embed_mean(&self, ids: &[usize]) -> Result<(Vec<f64>, EmbedCache)> {
        let mut out = vec![0.0; self.dim];
        for &id in ids {
            if id >= self.vocab() {
                return Err(Error::IndexOutOfRange {
                    index: id,
                    limit: self.vocab(),
                });
            }
            let row = &self.table.values[id * self.dim..(id + 1) * self.dim];
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        if !ids.is_empty() {
            let inv = 1.0 / ids.len() as f64;
            out.iter_mut().for_each(|o| *o *= inv);
        }
        Ok((out, EmbedCache { ids: ids.to_vec() }))
    }

    /// Distribute `grad_output / len` into each used row's gradient.
    pub fn backward(&mut self, cache: &EmbedCache, grad_output: &[f64]) -> Result<()> {
        if grad_output.len() != self.dim {
            return Err(Error::ShapeMismatch {
                context: "embedding backward",
                expected: self.dim,
                got: grad_output.len(),
            });
        }
        if cache.ids.is_empty() {
            return Ok(());
        }
        let inv = 1.0 / cache.ids.len() as f64;
        for &id in &cache.ids {
            let row = &mut self.table.grad[id * self.dim..(id + 1) * self.dim];
            for (g, d) in row.iter_mut().zip(grad_output) {
                *g += d * inv;
            }
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.table.zero_grad();
    }
}
