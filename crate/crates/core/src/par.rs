//! Row-parallel helpers for stencil kernels.
//!
//! Every output row is written by exactly one task from read-only inputs, so
//! results do not depend on the thread count. Reductions are never
//! parallelised.

use rayon::prelude::*;

/// Grids smaller than this many values per plane run sequentially.
const PAR_THRESHOLD: usize = 1 << 14;

pub fn rows_mut<F>(out: &mut [f64], row_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if out.len() >= PAR_THRESHOLD && rayon::current_num_threads() > 1 {
        out.par_chunks_mut(row_len).enumerate().for_each(|(j, row)| f(j, row));
    } else {
        out.chunks_mut(row_len).enumerate().for_each(|(j, row)| f(j, row));
    }
}

/// Runs `f` on a dedicated pool with `threads` workers (1 gives the
/// deterministic reference mode).
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}
