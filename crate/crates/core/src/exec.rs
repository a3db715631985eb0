//! Switches between the rayon-backed and sequential code paths.
//!
//! The parallel backend is a compile-time feature; on top of that a runtime
//! toggle lets one binary (the bench suite) compare both paths. Every parallel
//! construct used in the crate assigns each output element to exactly one
//! worker, so results are bit-identical to the sequential path.

use std::sync::atomic::{AtomicBool, Ordering};

static PARALLEL: AtomicBool = AtomicBool::new(true);

#[cfg(feature = "parallel")]
static POOL_INIT: std::sync::Once = std::sync::Once::new();

/// Builds the worker pool once per process, honoring `MIXBATH_THREADS` for the
/// kernel thread count. Safe to call repeatedly; later calls are no-ops, and a
/// pool that was already built elsewhere is left alone.
pub fn init_threads() {
    #[cfg(feature = "parallel")]
    POOL_INIT.call_once(|| {
        if let Ok(v) = std::env::var("MIXBATH_THREADS") {
            if let Ok(n) = v.trim().parse::<usize>() {
                if n >= 1 {
                    let _ = rayon::ThreadPoolBuilder::new()
                        .num_threads(n)
                        .build_global();
                }
            }
        }
    });
}

/// Runtime toggle for the parallel paths. No effect when the `parallel`
/// feature is compiled out.
pub fn set_parallel(on: bool) {
    PARALLEL.store(on, Ordering::Relaxed);
}

pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel") && PARALLEL.load(Ordering::Relaxed)
}

/// Maps independent inputs to outputs, in parallel when enabled. Output order
/// always matches input order.
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() && items.len() > 1 {
        use rayon::prelude::*;
        return items.par_iter().map(&f).collect();
    }
    items.iter().map(|x| f(x)).collect()
}
