#![allow(dead_code)]

use dpperm::rng::StreamRng;
use dpperm::{KernelSpec, RandomStream};
use ndarray::Array2;
use rand::Rng;

pub fn uniform_matrix(rows: usize, cols: usize, scale: f64, rng: &mut StreamRng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| scale * rng.random::<f64>())
}

pub fn random_kernel(d: usize, rng: &mut StreamRng) -> KernelSpec {
    let sigma = 10f64.powf(rng.random_range(-1.0..1.0));
    match rng.random_range(0..3) {
        0 => KernelSpec::gaussian(sigma, d).unwrap(),
        1 => KernelSpec::laplacian(sigma, d).unwrap(),
        _ => KernelSpec::gaussian_product((0..d).map(|_| rng.random_range(0.2..2.0)).collect()).unwrap(),
    }
}

pub fn stream(seed: u64, index: u64) -> RandomStream {
    RandomStream::root(seed).child(dpperm::Purpose::Sample, index)
}

/// Whether `hits / reps` lies within `sigmas` binomial standard errors of `p`.
pub fn within_binomial_band(hits: usize, reps: usize, p: f64, sigmas: f64) -> bool {
    let rate = hits as f64 / reps as f64;
    (rate - p).abs() <= sigmas * (p * (1.0 - p) / reps as f64).sqrt()
}
