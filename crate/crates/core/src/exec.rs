//! Indexed task execution.
//!
//! Parallel stages (synthetic records, k sweeps, forest trees) are expressed
//! as `n` independent tasks whose results are collected in index order. The
//! std crate plugs a thread pool in here; the output never depends on which
//! executor ran it.

use alloc::vec::Vec;

pub trait Executor: Sync {
    /// Runs `f(0), .., f(n - 1)` and returns the results in index order.
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs every task on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}
