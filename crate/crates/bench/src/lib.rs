//! Inputs shared by the benchmarks.

use navfeat::grid::Grid;
use navfeat::{Feature, SparseFeatures};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smooth texture with fine noise.
pub fn textured(w: usize, h: usize, seed: u64) -> Grid<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Grid::from_fn(w, h, |x, y| {
        let wave = 60.0 * ((x as f64 * 0.11).sin() + (y as f64 * 0.07).cos());
        (128.0 + wave + rng.random_range(-30.0..30.0)).clamp(0.0, 255.0) as u8
    })
}

/// `n` features with random unit descriptors of length `dim`.
pub fn random_features(n: usize, dim: usize, seed: u64) -> SparseFeatures {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = (0..n)
        .map(|_| {
            let mut d: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            navfeat::features::l2_normalize(&mut d);
            Feature {
                x: rng.random_range(0.0..512.0),
                y: rng.random_range(0.0..512.0),
                scale: 1.0,
                score: rng.random(),
                descriptor: d,
            }
        })
        .collect();
    SparseFeatures::new(features)
}
