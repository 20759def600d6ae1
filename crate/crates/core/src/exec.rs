//! Execution strategy for the independent per-interval solves.
//!
//! The expensive inner loops of the solvers (fine propagation of each time
//! interval, propagation of new basis blocks, per-interval forward/adjoint
//! sweeps) are embarrassingly parallel maps. With the `parallel` feature
//! enabled they run on the ambient rayon pool; without it they degrade to a
//! plain sequential map with no extra dependencies.
//!
//! Outputs are collected in input order and every task is a pure function of
//! its input, so results are bitwise identical regardless of thread count.
//! All order-sensitive reductions (Gram-Schmidt loops, correction sweeps)
//! stay strictly sequential in the callers.

/// Maps `f` over `items`, in parallel when the `parallel` feature is active.
#[cfg(feature = "parallel")]
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

/// Maps `f` over `items` sequentially (the `parallel` feature is disabled).
#[cfg(not(feature = "parallel"))]
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Always-sequential map, kept for benchmarks that compare both strategies.
pub fn seq_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Runs `f` on a dedicated pool of `workers` threads (0 = library default).
///
/// With the `parallel` feature disabled, or `workers == 1`, this is a plain
/// call. The worker count only changes scheduling, never results.
#[cfg(feature = "parallel")]
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    if workers == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        // Pool construction can only fail on resource exhaustion; the
        // sequential fallback still produces identical results.
        Err(_) => f(),
    }
}

/// Runs `f` directly; without the `parallel` feature there is no pool.
#[cfg(not(feature = "parallel"))]
pub fn with_workers<R>(workers: usize, f: impl FnOnce() -> R) -> R {
    let _ = workers;
    f()
}
