//! Seeded random fields. Every draw comes from a ChaCha stream derived from
//! `(seed, stream)`, so runs are reproducible regardless of thread order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{Field, Grid};

pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Uniform `[-1, 1]` values.
pub fn uniform_vec(r: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| r.random_range(-1.0..=1.0)).collect()
}

/// Field with uniform `[-1, 1]` values on `support` and zero elsewhere.
pub fn random_field(grid: Grid, support: &[usize], r: &mut impl Rng) -> Field {
    let mut v = vec![0.0; grid.len()];
    for &i in support {
        v[i] = r.random_range(-1.0..=1.0);
    }
    Field::new(grid, v).expect("uniform draws are finite")
}
