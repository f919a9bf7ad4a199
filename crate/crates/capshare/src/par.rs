//! Data-parallel batch helper with a sequential fallback.
//!
//! Trial batches, attack floods, and bulk store operations fan out through
//! [`run_batch`]. With the default `parallel` feature this uses a rayon
//! parallel iterator; without it, a plain loop. Protocol operations stay
//! internally sequential either way, so per-call operation tallies are exact:
//! each closure runs entirely on one worker thread.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Applies `f` to every index in `0..n`, collecting results in index order.
pub fn run_batch<T, F>(n: usize, f: F) -> Vec<T>
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

/// Always-sequential variant, for timing loops and baseline comparison.
pub fn run_batch_sequential<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}
