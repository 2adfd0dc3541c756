//! Data-parallel execution switch.
//!
//! Every fan-out in the crate (per-parameter shifted circuits, per-sample
//! gradients, per-client local updates, sweep cells) goes through
//! [`map_indexed`]. With the `parallel` feature the work is spread over the
//! rayon pool; without it, or inside [`sequential`], it runs in a plain loop.
//! Results are always returned in index order, so both paths produce
//! bit-identical output.

use std::cell::Cell;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Execution strategy, mostly useful for benchmarks and tests that compare paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Sequential,
    Parallel,
}

/// Runs `f` with every nested [`map_indexed`] call on this thread forced sequential.
pub fn sequential<R>(f: impl FnOnce() -> R) -> R {
    let prev = FORCE_SEQUENTIAL.with(|c| c.replace(true));
    let out = f();
    FORCE_SEQUENTIAL.with(|c| c.set(prev));
    out
}

/// Runs `f` under the given strategy.
pub fn with_strategy<R>(strategy: Strategy, f: impl FnOnce() -> R) -> R {
    match strategy {
        Strategy::Sequential => sequential(f),
        Strategy::Parallel => f(),
    }
}

/// Strategy that [`map_indexed`] would use if called right now on this thread.
pub fn current() -> Strategy {
    if cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.with(Cell::get) {
        Strategy::Parallel
    } else {
        Strategy::Sequential
    }
}

/// Evaluates `f(0..n)` and collects the results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match current() {
        Strategy::Sequential => (0..n).map(f).collect(),
        Strategy::Parallel => par_map(n, f),
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Sizes the global worker pool. A no-op without the `parallel` feature.
pub fn set_workers(n: usize) -> Result<(), String> {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_strategies_agree() {
        let f = |i: usize| (i as f64).sqrt().sin();
        let par = map_indexed(1000, f);
        let seq = sequential(|| map_indexed(1000, f));
        assert_eq!(par, seq);
    }

    #[test]
    fn sequential_scope_restores_previous_mode() {
        let before = current();
        sequential(|| assert_eq!(current(), Strategy::Sequential));
        assert_eq!(current(), before);
    }
}
