//! Similarity functions: rescaled cosine for pretraining, inner product for
//! retrieval.

use crate::error::{Error, Result};

/// Cosine similarity affinely rescaled from [-1, 1] into [0, 1].
pub fn cosine_sim01(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            context: "cosine_sim01",
            expected: a.len(),
            got: b.len(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let cos = dot / (na.sqrt() * nb.sqrt());
    // Clamp rounding spill so downstream [0,1] domain checks never trip.
    Ok(((cos + 1.0) / 2.0).clamp(0.0, 1.0))
}

/// Gradients of [`cosine_sim01`] with respect to both inputs.
///
/// With `c = cos(a,b)`, `∂c/∂a = b/(|a||b|) − c·a/|a|²` and the 0.5 factor
/// comes from the affine rescale.
pub fn cosine_sim01_backward(a: &[f64], b: &[f64], grad: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            context: "cosine_sim01 backward",
            expected: a.len(),
            got: b.len(),
        });
    }
    let (mut dot, mut na2, mut nb2) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na2 += x * x;
        nb2 += y * y;
    }
    if na2 == 0.0 || nb2 == 0.0 {
        return Err(Error::ZeroVector);
    }
    let (na, nb) = (na2.sqrt(), nb2.sqrt());
    let cos = dot / (na * nb);
    let half = 0.5 * grad;
    let grad_a = a
        .iter()
        .zip(b)
        .map(|(x, y)| half * (y / (na * nb) - cos * x / na2))
        .collect();
    let grad_b = a
        .iter()
        .zip(b)
        .map(|(x, y)| half * (x / (na * nb) - cos * y / nb2))
        .collect();
    Ok((grad_a, grad_b))
}

/// Dot product — the sole ranking score of the main model.
pub fn inner_product(r_q: &[f64], r_p: &[f64]) -> Result<f64> {
    if r_q.len() != r_p.len() {
        return Err(Error::ShapeMismatch {
            context: "inner_product",
            expected: r_q.len(),
            got: r_p.len(),
        });
    }
    Ok(r_q.iter().zip(r_p).map(|(a, b)| a * b).sum())
}
