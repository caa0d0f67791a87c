//! Execution policy for the data-parallel kernels.
//!
//! Every parallel loop in the crate goes through [`map_chunks`], which splits
//! an index range into fixed-size chunks and concatenates the per-chunk
//! results in chunk order. Because chunk boundaries never depend on the
//! thread pool, floating-point reductions come out bit-identical under both
//! policies.

use std::ops::Range;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Rayon thread pool; silently sequential when the `parallel` feature is off.
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Evaluate `f` over `range` split into chunks of at most `chunk` indices.
pub fn map_chunks<T, F>(exec: Execution, range: Range<usize>, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let start = range.start;
    let len = range.end.saturating_sub(range.start);
    let n_chunks = len.div_ceil(chunk);
    let bounds = move |c: usize| {
        let lo = start + c * chunk;
        lo..(lo + chunk).min(start + len)
    };

    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n_chunks).into_par_iter().map(|c| f(bounds(c))).collect();
    }

    let _ = exec;
    (0..n_chunks).map(|c| f(bounds(c))).collect()
}

/// Chunked sum; deterministic regardless of policy.
pub fn sum_chunks<F>(exec: Execution, range: Range<usize>, chunk: usize, f: F) -> f64
where
    F: Fn(Range<usize>) -> f64 + Sync + Send,
{
    map_chunks(exec, range, chunk, f).into_iter().sum()
}
