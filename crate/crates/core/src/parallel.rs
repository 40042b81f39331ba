//! Worker pool shared by scenario integration, batched rollout and seed sweeps.
//!
//! The pool size comes from `GRIDSEQ_THREADS` when set, otherwise from the
//! available hardware parallelism. Results never depend on the pool size.

use std::sync::OnceLock;

pub const THREADS_ENV: &str = "GRIDSEQ_THREADS";

pub fn worker_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(worker_count())
            .thread_name(|i| format!("gridseq-worker-{i}"))
            .build()
            .expect("failed to build worker pool")
    })
}

/// Runs `f` inside the bounded pool so nested rayon iterators use it.
pub fn install<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    pool().install(f)
}
