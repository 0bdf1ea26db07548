//! Order-preserving fan-out over independent work items.
//!
//! `MEDIANFORGE_THREADS` caps the worker count; `0` or `1` runs serially.
//! Results are always returned in index order, so reductions over them are
//! identical whatever the thread count.

use std::cell::Cell;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

pub const THREADS_ENV: &str = "MEDIANFORGE_THREADS";

thread_local! {
    static OVERRIDE: Cell<Option<usize>> = const { Cell::new(None) };
}

fn pools() -> &'static Mutex<HashMap<usize, Arc<ThreadPool>>> {
    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<ThreadPool>>>> = OnceLock::new();
    POOLS.get_or_init(|| Mutex::new(HashMap::new()))
}

fn pool(threads: usize) -> Arc<ThreadPool> {
    let mut map = pools().lock().expect("thread pool registry poisoned");
    map.entry(threads)
        .or_insert_with(|| {
            Arc::new(
                ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .expect("failed to build thread pool"),
            )
        })
        .clone()
}

/// Requested thread count: a scoped override, else the environment.
/// `None` means "rayon's default".
pub fn configured_threads() -> Option<usize> {
    OVERRIDE.with(Cell::get).or_else(|| {
        std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
    })
}

/// Runs `f` with the thread count pinned for this thread's fan-outs.
pub fn with_threads<R>(threads: usize, f: impl FnOnce() -> R) -> R {
    let prev = OVERRIDE.with(|o| o.replace(Some(threads)));
    let out = f();
    OVERRIDE.with(|o| o.set(prev));
    out
}

pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match configured_threads() {
        Some(0) | Some(1) => (0..n).map(f).collect(),
        Some(t) => pool(t).install(|| (0..n).into_par_iter().map(&f).collect()),
        None => (0..n).into_par_iter().map(f).collect(),
    }
}
