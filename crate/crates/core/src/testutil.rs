use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::DenseMatrix;
use crate::memory::{CurvatureMemory, DEFAULT_EPS_CURV};

/// Memory filled with pairs `y = A s` for a random SPD `A`, so every pair is
/// accepted. Pushes `pairs` pairs, so `pairs > m` exercises eviction.
pub(crate) fn random_memory(seed: u64, n: usize, m: usize, pairs: usize) -> CurvatureMemory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DenseMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let a = g
        .transpose()
        .matmul(&g)
        .add(&DenseMatrix::identity(n).scale(0.5));
    let mut mem = CurvatureMemory::new(n, m);
    let mut pushed = 0;
    while pushed < pairs {
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = a.matvec(&s);
        if mem.try_accept_pair(&s, &y, DEFAULT_EPS_CURV).unwrap() {
            pushed += 1;
        }
    }
    mem
}

pub(crate) fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}
