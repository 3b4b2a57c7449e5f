use rand::Rng;

use crate::tensor::Tensor;

/// Glorot/Xavier uniform initialisation for a `fan_in x fan_out` weight.
pub fn xavier_uniform<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f32).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::matrix(fan_in, fan_out, data).expect("positive fan sizes")
}

/// Uniform values in `[-scale, scale)`, used for embedding tables.
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, scale: f32) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor::matrix(rows, cols, data).expect("positive sizes")
}
