//! Seed-parallel Monte-Carlo dispatch.
//!
//! Runs are pure functions of their seed, so batches parallelize with no
//! shared state. With the `parallel` feature (default) [`map_seeds`] fans out
//! over a rayon pool; without it the same call runs sequentially.
//! [`map_seeds_serial`] is always sequential, for baseline comparisons.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Applies `work` to every seed, in parallel when the `parallel` feature is
/// enabled. Output order matches input order either way.
pub fn map_seeds<T, F>(seeds: &[u64], work: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    #[cfg(feature = "parallel")]
    {
        seeds.par_iter().map(|&s| work(s)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        seeds.iter().map(|&s| work(s)).collect()
    }
}

/// Always-sequential variant.
pub fn map_seeds_serial<T, F>(seeds: &[u64], work: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    seeds.iter().map(|&s| work(s)).collect()
}

/// Builds a rayon pool with `threads` workers and runs `body` inside it.
/// Falls back to calling `body` directly without the `parallel` feature.
#[cfg(feature = "parallel")]
pub fn with_thread_count<R: Send>(threads: Option<usize>, body: impl FnOnce() -> R + Send) -> R {
    match threads {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(body),
        _ => body(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_thread_count<R>(_threads: Option<usize>, body: impl FnOnce() -> R) -> R {
    body()
}
