//! Shared fixtures for the criterion benches.

use tds_core::{apply_noise, canonical_fixture, Grid, NoiseKind, NoiseSpec};

/// The canonical 31x21 surface with unit-variance Gaussian noise.
pub fn noisy_surface(seed: u64) -> Grid {
    apply_noise(&canonical_fixture(), &NoiseSpec::new(NoiseKind::awgn(1.0), seed)).expect("valid noise")
}

/// A smooth square test image in `[0, 1]` with additive noise.
pub fn noisy_image(side: usize, seed: u64) -> Grid {
    let clean = Grid::from_fn(side, side, |i, j| {
        let (u, v) = (i as f64 / side as f64, j as f64 / side as f64);
        0.5 + 0.3 * (6.0 * u).sin() * (4.0 * v).cos()
    })
    .expect("finite image");
    apply_noise(&clean, &NoiseSpec::new(NoiseKind::awgn(0.1), seed)).expect("valid noise")
}

/// Deterministic positive weights in `[lo, hi]`.
pub fn weights(len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len)
        .map(|k| lo + (hi - lo) * (0.5 + 0.5 * (1.7 * k as f64).sin()))
        .collect()
}
