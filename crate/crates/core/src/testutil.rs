//! Shared helpers for unit tests.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lowrank::LowRankMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_mat(r: &mut ChaCha8Rng, m: usize, n: usize) -> Mat<f64> {
    Mat::from_fn(m, n, |_, _| r.gen_range(-1.0..1.0))
}

pub fn random_vec(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
}

pub fn orthonormal(r: &mut ChaCha8Rng, m: usize, k: usize) -> Mat<f64> {
    random_mat(r, m, k).qr().compute_thin_Q()
}

/// Random matrix with the given (nonincreasing, positive) singular values.
pub fn random_lowrank(r: &mut ChaCha8Rng, m: usize, n: usize, s: &[f64]) -> LowRankMatrix {
    let u = orthonormal(r, m, s.len());
    let v = orthonormal(r, n, s.len());
    LowRankMatrix::from_svd_parts(u, s.to_vec(), v).unwrap()
}
