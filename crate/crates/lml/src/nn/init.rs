//! Weight initialization: uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for
//! recurrent/dense weights, normal(0, 0.02) for conv kernels.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

pub fn uniform_fan_in(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.gen_range(-bound..bound)).collect(),
    )
    .expect("init shape")
}

pub fn normal(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| std * standard_normal(rng)).collect(),
    )
    .expect("init shape")
}

pub fn conv_init(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    normal(rng, shape, 0.02)
}

/// Box-Muller draw from N(0, 1).
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn standard_normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
    Tensor::from_vec((0..n).map(|_| standard_normal(rng)).collect())
}
