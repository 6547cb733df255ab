//! Mean-absolute-error loss.

use pat_core::scalar::{c, Scalar};

use crate::error::{shape, Result};
use crate::tensor::Tensor4;

/// Mean of `|pred - target|` with its gradient w.r.t. `pred`:
/// `sign(pred - target) / count`, 0 at exact ties.
pub fn l1_loss<S: Scalar>(pred: &Tensor4<S>, target: &Tensor4<S>) -> Result<(S, Tensor4<S>)> {
    if !pred.same_shape(target) {
        return Err(shape(format!(
            "l1 loss shapes differ: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let inv = c::<S>(1.0 / pred.len() as f64);
    let mut grad = Tensor4::zeros(pred.n, pred.c, pred.h, pred.w);
    let mut total = S::zero();
    for (g, (&p, &t)) in grad.data.iter_mut().zip(pred.data.iter().zip(&target.data)) {
        let d = p - t;
        if d > S::zero() {
            total += d;
            *g = inv;
        } else if d < S::zero() {
            total -= d;
            *g = -inv;
        }
    }
    Ok((total * inv, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_inputs_zero_loss_zero_grad() {
        let t = Tensor4::<f64>::from_data(1, 1, 2, 2, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let (l, g) = l1_loss(&t, &t).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_offset_gives_offset() {
        let a = Tensor4::<f64>::from_data(1, 1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = a.map(|v| v + 0.25);
        let (l, g) = l1_loss(&b, &a).unwrap();
        assert!((l - 0.25).abs() < 1e-15);
        assert!(g.data.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = Tensor4::<f32>::zeros(1, 1, 2, 2);
        let b = Tensor4::<f32>::zeros(1, 1, 2, 3);
        assert!(l1_loss(&a, &b).is_err());
    }
}
