//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the parallel variant runs on rayon's global pool.
//! Without it every call runs sequentially.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Applies `f` to every element, preserving order.
pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => items.par_iter().map(f).collect(),
        _ => items.iter().map(f).collect(),
    }
}

/// Applies `f` to every index in `range`, preserving order.
pub fn map_range<R, F>(exec: Execution, range: Range<usize>, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => range.into_par_iter().map(f).collect(),
        _ => range.map(f).collect(),
    }
}

/// Splits `0..total` into consecutive chunks and applies `f` to each.
pub fn chunked<R, F>(exec: Execution, total: u64, chunk: u64, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(Range<u64>) -> R + Sync + Send,
{
    let chunk = chunk.max(1);
    let n_chunks = total.div_ceil(chunk) as usize;
    map_range(exec, 0..n_chunks, |c| {
        let start = c as u64 * chunk;
        f(start..(start + chunk).min(total))
    })
}
