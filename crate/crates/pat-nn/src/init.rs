//! Glorot uniform initialization.

use pat_core::rng::Rng;
use pat_core::scalar::{c, Scalar};
use rand::Rng as _;

use crate::error::{invalid, Result};

/// Bound `H = sqrt(6) / sqrt(fan_in + fan_out)`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// I.i.d. uniform samples on `[-H, H]`, drawn in order from `rng`.
pub fn glorot_init<S: Scalar>(
    fan_in: usize,
    fan_out: usize,
    len: usize,
    rng: &mut Rng,
) -> Result<Vec<S>> {
    if fan_in == 0 || fan_out == 0 {
        return Err(invalid("fan_in and fan_out must be >= 1"));
    }
    let h = glorot_bound(fan_in, fan_out);
    Ok((0..len).map(|_| c::<S>(rng.gen_range(-h..h))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_fans_of_three_give_unit_bound() {
        assert!((glorot_bound(3, 3) - 1.0).abs() < 1e-15);
        let mut rng = pat_core::rng::seeded(1);
        let v: Vec<f64> = glorot_init(3, 3, 1000, &mut rng).unwrap();
        assert!(v.iter().all(|x| x.abs() <= 1.0));
    }

    #[test]
    fn samples_bounded_and_centered() {
        let (fan_in, fan_out, n) = (18, 36, 1_000_000);
        let h = glorot_bound(fan_in, fan_out);
        let mut rng = pat_core::rng::seeded(7);
        let v: Vec<f64> = glorot_init(fan_in, fan_out, n, &mut rng).unwrap();
        assert!(v.iter().all(|x| x.abs() <= h));
        let mean = v.iter().sum::<f64>() / n as f64;
        // sd of the mean is h / sqrt(3 n); allow 3 sigma
        assert!(mean.abs() <= 3.0 * h / (3.0 * n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn deterministic_given_seed() {
        let a: Vec<f32> = glorot_init(9, 9, 64, &mut pat_core::rng::seeded(3)).unwrap();
        let b: Vec<f32> = glorot_init(9, 9, 64, &mut pat_core::rng::seeded(3)).unwrap();
        assert_eq!(a, b);
    }
}
