//! Ordered parallel maps over ensemble members.
//!
//! Work is spread over the current rayon pool; results come back in index
//! order, so every downstream reduction sees the same sequence regardless
//! of the number of workers.

use rayon::prelude::*;

use crate::error::Result;
use crate::rng::path_seed;

/// Runs `f(i, path_seed(master_seed, i))` for `i in 0..n` and collects the
/// results in index order. The first error (by index) wins and names its
/// path.
pub fn map_paths<T, F>(n: usize, master_seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, u64) -> Result<T> + Sync + Send,
{
    (0..n)
        .into_par_iter()
        .map(|i| f(i, path_seed(master_seed, i as u64)).map_err(|e| e.context(format!("path {i}"))))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}
