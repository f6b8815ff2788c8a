//! Seeded random streams. Every stochastic routine draws from `ChaCha8Rng` seeded with the run
//! seed and switched to a stream selected by a worker or purpose index, so results never depend
//! on scheduling.

use crate::modring::ModMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn stream(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, q: u64) -> ModMatrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(0..q)).collect();
    ModMatrix::from_residues(rows, cols, q, data)
}

pub fn random_gl<R: Rng>(rng: &mut R, n: usize, q: u64) -> ModMatrix {
    loop {
        let m = random_matrix(rng, n, n, q);
        if m.is_unit_det() {
            return m;
        }
    }
}
