//! Data-parallel execution helpers.
//!
//! Trials, Monte Carlo batches, and reference-set sweeps are independent
//! units of work: each derives its own RNG stream, and results are either
//! collected in index order or reduced by integer addition. Both properties
//! make the parallel and sequential builds produce identical output, so the
//! `parallel` feature only changes wall-clock time.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Applies `f` to `0..count` and collects results in index order.
#[cfg(feature = "parallel")]
pub fn map_indices<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..count).into_par_iter().map(f).collect()
}

/// Applies `f` to `0..count` and collects results in index order.
#[cfg(not(feature = "parallel"))]
pub fn map_indices<T, F>(count: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..count).map(f).collect()
}

/// Sums `f(batch_index)` over `0..batches`. Integer addition commutes, so
/// the reduction order cannot affect the result.
#[cfg(feature = "parallel")]
pub fn sum_batches<F>(batches: usize, f: F) -> u64
where
    F: Fn(usize) -> u64 + Sync + Send,
{
    (0..batches).into_par_iter().map(f).sum()
}

/// Sums `f(batch_index)` over `0..batches`.
#[cfg(not(feature = "parallel"))]
pub fn sum_batches<F>(batches: usize, f: F) -> u64
where
    F: Fn(usize) -> u64,
{
    (0..batches).map(f).sum()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed from a base seed and a tag path, so each
/// (trial, stage, …) combination gets its own stream.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(base ^ 0x6A09_E667_F3BC_C908);
    for &tag in tags {
        state = splitmix64(state ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    }
    state
}

/// Seeded sample of `amount` distinct indices from `0..len`, in draw order.
pub fn sample_indices(len: usize, amount: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::index::sample(&mut rng, len, amount).into_vec()
}

/// Splits `total` items into batches of at most `batch_size`, returning
/// `(start, len)` per batch.
pub fn batch_ranges(total: usize, batch_size: usize) -> Vec<(usize, usize)> {
    assert!(batch_size > 0);
    let mut out = Vec::with_capacity(total.div_ceil(batch_size));
    let mut start = 0;
    while start < total {
        let len = batch_size.min(total - start);
        out.push((start, len));
        start += len;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let v = map_indices(100, |i| i * i);
        assert_eq!(v[7], 49);
        assert_eq!(v.len(), 100);
    }

    #[test]
    fn batches_cover_exactly() {
        let ranges = batch_ranges(10_000, 4096);
        assert_eq!(ranges, vec![(0, 4096), (4096, 4096), (8192, 1808)]);
        assert_eq!(batch_ranges(0, 16), vec![]);
    }
}
