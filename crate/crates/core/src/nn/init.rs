//! Seeded weight initialisation.

use rand::Rng;

use crate::tensor::{Scalar, Tensor};

/// Kaiming-uniform over fan-in: `U(-b, b)` with `b = sqrt(6 / fan_in)`.
pub fn kaiming_uniform<T: Scalar, R: Rng + ?Sized>(
    shape: &[usize],
    fan_in: usize,
    rng: &mut R,
) -> Tensor<T> {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    Tensor::uniform(shape, bound, rng)
}
