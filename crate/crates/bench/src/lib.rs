//! Synthetic workloads shared by the benchmarks.

use cer_core::model::VerdictLabel;
use cer_core::retrieval::EmbeddingVector;
use cer_core::veracity::TERNARY;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` Gaussian unit vectors with ids `v00000..`.
pub fn unit_vectors(n: usize, dim: usize, seed: u64) -> Vec<(String, EmbeddingVector)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| (format!("v{i:05}"), gaussian_unit(&mut rng, dim))).collect()
}

pub fn gaussian_unit(rng: &mut ChaCha8Rng, dim: usize) -> EmbeddingVector {
    loop {
        let v: Vec<f32> = (0..dim)
            .map(|_| {
                let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                let u2: f64 = rng.random();
                ((-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()) as f32
            })
            .collect();
        if let Ok(e) = EmbeddingVector::normalized(v) {
            return e;
        }
    }
}

/// Random gold and predicted labels over the ternary space.
pub fn label_pairs(n: usize, seed: u64) -> (Vec<VerdictLabel>, Vec<VerdictLabel>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (TERNARY[rng.random_range(0..3)], TERNARY[rng.random_range(0..3)])).unzip()
}
