//! Replica-parallel execution with results in index order.

use rayon::prelude::*;

use crate::error::Result;

/// Environment variable holding the worker count. Absent means all available
/// cores; `1` means a plain sequential loop.
pub const WORKERS_ENV: &str = "KRAMERS_WORKERS";

thread_local! {
    static OVERRIDE: std::cell::Cell<Option<usize>> = const { std::cell::Cell::new(None) };
}

/// Run `f` with the worker count pinned to `workers` on this thread.
pub fn with_workers<T>(workers: usize, f: impl FnOnce() -> T) -> T {
    let prev = OVERRIDE.with(|o| o.replace(Some(workers.max(1))));
    let out = f();
    OVERRIDE.with(|o| o.set(prev));
    out
}

pub fn worker_count() -> usize {
    if let Some(w) = OVERRIDE.with(|o| o.get()) {
        return w;
    }
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w >= 1)
        .unwrap_or_else(rayon::current_num_threads)
}

/// Evaluate `f(0..n)` on `workers` threads. Output order and the reported
/// error (the lowest failing index) do not depend on the worker count.
pub fn map_indexed_with<T, F>(n: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let results: Vec<Result<T>> = if workers <= 1 {
        (0..n).map(&f).collect()
    } else {
        match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
            Err(_) => (0..n).map(&f).collect(),
        }
    };
    results.into_iter().collect()
}

/// [`map_indexed_with`] using [`worker_count`].
pub fn map_indexed<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    map_indexed_with(n, worker_count(), f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn order_and_errors_are_stable() {
        for w in [1, 3, 8] {
            let v = map_indexed_with(50, w, |i| Ok(i * i)).unwrap();
            assert_eq!(v, (0..50).map(|i| i * i).collect::<Vec<_>>());
            let e = map_indexed_with(50, w, |i| {
                if i % 7 == 3 {
                    Err(Error::numeric(i as u64, "x"))
                } else {
                    Ok(i)
                }
            })
            .unwrap_err();
            assert!(matches!(e, Error::Numeric { step: 3, .. }));
        }
        assert_eq!(with_workers(3, worker_count), 3);
    }
}
