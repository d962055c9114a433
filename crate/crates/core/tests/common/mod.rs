use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mcsm::channel::complex_normal;
use mcsm::spread::{generate_sequences, SequenceFamily};

/// Columns in one default frame.
pub const FRAME_SYMBOLS: usize = 153;

/// Random row-sparse problem `Y = S B (+ noise)` with `n_active` QPSK rows
/// of length `l`. Returns `(Y, S, support)`.
pub fn planted(
    seed: u64,
    n_sc: usize,
    k: usize,
    n_active: usize,
    l: usize,
    noise: f64,
) -> (Array2<Complex64>, Array2<Complex64>, Vec<usize>) {
    let s = generate_sequences(k, n_sc, seed, SequenceFamily::RandomQpskChips).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let support: Vec<usize> = rand::seq::index::sample(&mut rng, k, n_active).into_vec();
    let mut b = Array2::<Complex64>::zeros((k, l));
    let level = [1.0, -1.0];
    for &node in &support {
        for j in 0..l {
            b[[node, j]] =
                Complex64::new(level[rng.random_range(0..2)], level[rng.random_range(0..2)])
                    / 2f64.sqrt();
        }
    }
    let mut y = s.matrix().dot(&b);
    if noise > 0.0 {
        y.mapv_inplace(|z| z + complex_normal(&mut rng, noise));
    }
    (y, s.matrix().clone(), support)
}
