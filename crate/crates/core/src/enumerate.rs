//! Deterministic parallel reductions over index ranges.

use rayon::prelude::*;

const CHUNKS: u64 = 256;

/// Sums `f(i)` for `i` in `0..n`. The range is cut into a fixed number of
/// contiguous chunks; each chunk is summed in index order and the partial
/// sums are folded in chunk order, so the result is bit-identical for any
/// thread count.
pub fn par_sum<F>(n: u64, f: F) -> f64
where
    F: Fn(u64) -> f64 + Sync,
{
    par_fold(n, 0.0, |acc, i| acc + f(i), |a, b| a + b)
}

/// Generic form of [`par_sum`] with an explicit accumulator.
pub fn par_fold<A, F, M>(n: u64, zero: A, step: F, merge: M) -> A
where
    A: Clone + Send + Sync,
    F: Fn(A, u64) -> A + Sync,
    M: Fn(A, A) -> A,
{
    if n == 0 {
        return zero;
    }
    let chunks = CHUNKS.min(n);
    let width = n.div_ceil(chunks);
    let partials: Vec<A> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * width;
            let hi = ((c + 1) * width).min(n);
            (lo..hi).fold(zero.clone(), &step)
        })
        .collect();
    partials.into_iter().fold(zero, merge)
}
