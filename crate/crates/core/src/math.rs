//! Scalar helpers shared by the simulation kernels.

use alloc::vec;
use alloc::vec::Vec;

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub(crate) fn sin_cos(x: f64) -> (f64, f64) {
    libm::sincos(x)
}

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn pow10(x: f64) -> f64 {
    libm::pow(10.0, x)
}

/// Below this many isochromats a block is summed left to right.
const PAIRWISE_LEAF: usize = 8;

/// Blocks at least this large are split across threads.
#[cfg(feature = "parallel")]
const PARALLEL_SPLIT: usize = 64;

/// Sums per-item channel buffers over `lo..hi` with a fixed binary tree.
///
/// `leaf(r, buf)` must *add* the contribution of item `r` into `buf`
/// (length `len`). The tree shape depends only on `lo..hi`, so the result
/// is identical whether halves run sequentially or on different threads.
pub(crate) fn pairwise_sum<F>(lo: usize, hi: usize, len: usize, leaf: &F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let count = hi - lo;
    if count <= PAIRWISE_LEAF {
        let mut buf = vec![0.0; len];
        for r in lo..hi {
            leaf(r, &mut buf);
        }
        return buf;
    }
    let mid = lo + count / 2;
    let (mut left, right) = join_if(
        count >= parallel_split(),
        || pairwise_sum(lo, mid, len, leaf),
        || pairwise_sum(mid, hi, len, leaf),
    );
    for (a, b) in left.iter_mut().zip(&right) {
        *a += b;
    }
    left
}

#[cfg(feature = "parallel")]
fn parallel_split() -> usize {
    PARALLEL_SPLIT
}

#[cfg(not(feature = "parallel"))]
fn parallel_split() -> usize {
    usize::MAX
}

#[cfg(feature = "parallel")]
pub(crate) fn join_if<A, B, RA, RB>(parallel: bool, a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    if parallel {
        rayon::join(a, b)
    } else {
        (a(), b())
    }
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn join_if<A, B, RA, RB>(_parallel: bool, a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA,
    B: FnOnce() -> RB,
{
    (a(), b())
}

/// Maps `f` over `0..count` and collects in index order.
#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T, F>(count: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..count).map(f).collect()
}
