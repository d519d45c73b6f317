//! Data-parallel driver with a sequential fallback.
//!
//! With the default `parallel` feature the batch helpers fan work out over a
//! rayon pool (capped by ORBITALE_THREADS); without it they degrade to plain
//! sequential loops with identical, deterministic output order.

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "ORBITALE_THREADS";

#[cfg(feature = "parallel")]
mod imp {
    use rayon::prelude::*;

    /// Map `f` over `items`, preserving order.
    pub fn par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
    where
        T: Send,
        U: Send,
        F: Fn(T) -> U + Sync + Send,
    {
        items.into_par_iter().map(f).collect()
    }

    /// Install a global pool honoring ORBITALE_THREADS (no-op if already set).
    pub fn configure_threads() {
        if let Ok(v) = std::env::var(super::THREADS_ENV) {
            if let Ok(n) = v.parse::<usize>() {
                if n >= 1 {
                    let _ = rayon::ThreadPoolBuilder::new()
                        .num_threads(n)
                        .build_global();
                }
            }
        }
    }

    /// Run `f` on a dedicated pool of `n` threads (used by the benches).
    pub fn with_pool<R: Send>(n: usize, f: impl FnOnce() -> R + Send) -> R {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("pool");
        pool.install(f)
    }
}

#[cfg(not(feature = "parallel"))]
mod imp {
    /// Sequential fallback with the same signature and output order.
    pub fn par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
    where
        T: Send,
        U: Send,
        F: Fn(T) -> U + Sync + Send,
    {
        items.into_iter().map(f).collect()
    }

    /// No pool to configure in the sequential build.
    pub fn configure_threads() {}

    /// Sequential stand-in for pool-scoped execution.
    pub fn with_pool<R: Send>(_n: usize, f: impl FnOnce() -> R + Send) -> R {
        f()
    }
}

pub use imp::{configure_threads, par_map, with_pool};
