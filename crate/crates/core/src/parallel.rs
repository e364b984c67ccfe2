//! Internal parallelism, capped by the `HUD_THREADS` environment variable.
//!
//! `HUD_THREADS=0` runs everything on the calling thread. Any other value
//! sizes a dedicated pool; unset means one worker per available core. Every
//! parallel map in this crate writes each result to its own slot, so outputs
//! are bitwise identical whatever the thread count.

#[cfg(feature = "parallel")]
use std::sync::OnceLock;

pub const THREADS_ENV: &str = "HUD_THREADS";

/// Number of worker threads requested by the environment (0 = sequential).
pub fn requested_threads() -> usize {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse().unwrap_or(0),
        Err(_) => std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1),
    }
}

#[cfg(feature = "parallel")]
fn pool() -> Option<&'static rayon::ThreadPool> {
    static POOL: OnceLock<Option<rayon::ThreadPool>> = OnceLock::new();
    POOL.get_or_init(|| match requested_threads() {
        0 | 1 => None,
        n => rayon::ThreadPoolBuilder::new().num_threads(n).build().ok(),
    })
    .as_ref()
}

/// `(0..n).map(f).collect()`, possibly spread over the worker pool.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if let Some(pool) = pool() {
        use rayon::prelude::*;
        return pool.install(|| (0..n).into_par_iter().map(&f).collect());
    }
    (0..n).map(f).collect()
}
