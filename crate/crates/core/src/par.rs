//! Data-parallel kernels with a sequential fallback.
//!
//! With the `parallel` feature (default) these run on rayon; without it they
//! are plain loops. Every reduction splits its input at fixed chunk
//! boundaries and combines chunk results in index order, so results are
//! bit-identical for any thread count and for both builds.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length for deterministic floating-point reductions.
pub const REDUCE_CHUNK: usize = 4096;

/// Runs `f` on a pool of `workers` threads (0 = library default).
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if workers == 0 {
            return f();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        f()
    }
}

/// `(0..n).map(f)` collected in index order.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Applies `f` to consecutive index ranges of length `chunk` and returns the
/// per-chunk results in order.
pub fn map_chunks<T, F>(n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let count = n.div_ceil(chunk);
    map_range(count, |c| f(c * chunk..((c + 1) * chunk).min(n)))
}

/// `out[i] = f(i)` for every index.
pub fn fill_indexed<T, F>(out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        out.par_chunks_mut(REDUCE_CHUNK)
            .enumerate()
            .for_each(|(c, slice)| {
                let base = c * REDUCE_CHUNK;
                for (k, slot) in slice.iter_mut().enumerate() {
                    *slot = f(base + k);
                }
            });
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = f(i);
        }
    }
}

/// Deterministic sum of `f(i)` over `0..n`.
pub fn sum_by<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    map_chunks(n, REDUCE_CHUNK, |r| r.map(&f).sum::<f64>())
        .into_iter()
        .sum()
}

pub fn sum(v: &[f64]) -> f64 {
    sum_by(v.len(), |i| v[i])
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    sum_by(a.len(), |i| a[i] * b[i])
}

pub fn max_by<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    map_chunks(n, REDUCE_CHUNK, |r| r.map(&f).fold(f64::NEG_INFINITY, f64::max))
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
}
