//! Finite-difference verification of analytic gradients.

use crate::error::Result;
use crate::nn::Parameter;

/// Default perturbation for central differences.
pub const DEFAULT_FD_EPSILON: f64 = 1e-4;

/// Compare analytic gradients against central finite differences.
///
/// `backward_fn` must zero all gradients, then run one forward/backward pass
/// so each parameter's `grad` holds the analytic gradient. `loss_fn` must
/// recompute the same scalar loss from the current parameter values without
/// touching gradients. Both must be deterministic: any randomness (sampling,
/// dropout masks) has to be frozen for the duration of the check.
///
/// `coords` selects which coordinates to probe as `(parameter index in
/// `params_of` order, flat element index)`; `None` probes every coordinate.
/// Returns the maximum relative error `|a - f| / max(1e-8, |a| + |f|)`.
pub fn grad_check<M>(
    model: &mut M,
    params_of: &mut dyn for<'a> FnMut(&'a mut M) -> Vec<&'a mut Parameter>,
    loss_fn: &mut dyn FnMut(&mut M) -> Result<f64>,
    backward_fn: &mut dyn FnMut(&mut M) -> Result<()>,
    coords: Option<&[(usize, usize)]>,
    epsilon: f64,
) -> Result<f64> {
    backward_fn(model)?;

    let all_coords: Vec<(usize, usize)> = match coords {
        Some(cs) => cs.to_vec(),
        None => {
            let params = params_of(model);
            params
                .iter()
                .enumerate()
                .flat_map(|(pi, p)| (0..p.len()).map(move |ei| (pi, ei)))
                .collect()
        }
    };
    let analytic: Vec<f64> = {
        let params = params_of(model);
        all_coords.iter().map(|&(pi, ei)| params[pi].grad[ei]).collect()
    };

    let mut max_rel = 0.0_f64;
    for (&(pi, ei), &a) in all_coords.iter().zip(&analytic) {
        let orig = {
            let mut params = params_of(model);
            let orig = params[pi].values[ei];
            params[pi].values[ei] = orig + epsilon;
            orig
        };
        let loss_plus = loss_fn(model)?;
        {
            let mut params = params_of(model);
            params[pi].values[ei] = orig - epsilon;
        }
        let loss_minus = loss_fn(model)?;
        {
            // Restore the exact original bits, not orig - eps + eps.
            let mut params = params_of(model);
            params[pi].values[ei] = orig;
        }
        let fd = (loss_plus - loss_minus) / (2.0 * epsilon);
        let rel = (a - fd).abs() / (a.abs() + fd.abs()).max(1e-8);
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}
