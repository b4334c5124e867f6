//! Parallel/sequential execution switch.
//!
//! The data-parallel maps in this crate (per-point decoding, snapping,
//! distance matrices) run on rayon when the `parallel` feature is enabled.
//! A process-wide atomic can force the sequential path at runtime, which is
//! how the bench suite compares both modes inside one binary. All maps
//! preserve input order, and nothing that feeds an output is reduced in a
//! nondeterministic order, so results are identical in both modes.

use std::sync::atomic::{AtomicBool, Ordering};

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Force (or release) the sequential execution path at runtime.
pub fn set_sequential(force: bool) {
    FORCE_SEQUENTIAL.store(force, Ordering::SeqCst);
}

/// True when maps will run sequentially (feature disabled or forced).
pub fn sequential() -> bool {
    if cfg!(not(feature = "parallel")) {
        return true;
    }
    FORCE_SEQUENTIAL.load(Ordering::SeqCst)
}

/// Configure the global worker pool size; 0 keeps the library default.
/// A size of 1 forces the sequential path instead of a one-thread pool.
/// Calling this more than once is allowed; later calls keep the first pool.
pub fn configure_threads(threads: usize) {
    if threads == 1 {
        set_sequential(true);
        return;
    }
    #[cfg(feature = "parallel")]
    if threads > 1 {
        // The global pool can only be installed once; a later call with a
        // different size is a no-op rather than an error.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}

/// Order-preserving map over a slice, parallel when enabled.
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if !sequential() {
            use rayon::prelude::*;
            return items.par_iter().map(&f).collect();
        }
    }
    items.iter().map(&f).collect()
}

/// Order-preserving indexed map over `0..n`, parallel when enabled.
pub fn par_map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if !sequential() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(&f).collect();
        }
    }
    (0..n).map(f).collect()
}
