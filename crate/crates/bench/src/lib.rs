//! Shared fixtures for the benchmarks.

use armcast::{Matrix, Rng};

pub fn random_vec(rng: &mut Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.uniform(-1.0, 1.0)).collect()
}

/// Features and targets shaped like one cross-validation fold.
pub fn elm_fixture(seed: u64, n: usize, d: usize) -> (Matrix, Matrix) {
    let mut rng = Rng::new(seed);
    let features = rng.uniform_matrix(n, d, -1.0, 1.0);
    let targets = rng.uniform_matrix(n, armcast::COORDS, 0.0, 32.0);
    (features, targets)
}
