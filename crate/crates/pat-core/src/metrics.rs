//! Reconstruction error metrics.

use crate::error::{invalid, numerical, Result};
use crate::grid::Image;
use crate::scalar::Scalar;

/// Relative l2 reconstruction error `||recon - truth||_2 / ||truth||_2`.
///
/// A zero-norm ground truth makes the metric undefined and is reported as an
/// error rather than NaN.
pub fn rel_l2_error<S: Scalar>(recon: &Image<S>, truth: &Image<S>) -> Result<S> {
    if recon.grid() != truth.grid() {
        return Err(invalid("rel_l2_error: images live on different grids"));
    }
    let denom = truth.l2_norm();
    if denom <= S::zero() {
        return Err(numerical("rel_l2_error: ground truth has zero norm"));
    }
    let num = recon
        .values()
        .iter()
        .zip(truth.values())
        .map(|(a, b)| {
            let d = *a - *b;
            d * d
        })
        .sum::<S>()
        .sqrt();
    Ok(num / denom)
}
