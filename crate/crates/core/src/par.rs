//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the maps below run on the rayon
//! global pool; without it, or after `set_threads(1)`, they run on the
//! calling thread. Results are always collected in input order, and callers
//! that accumulate floating-point sums do so over fixed-size chunks reduced
//! in index order, so numerical output does not depend on the thread count.

use std::sync::atomic::{AtomicBool, Ordering};

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Configures the worker thread count. `1` disables parallel dispatch
/// entirely. Returns an error message if the rayon pool was already built
/// with a different size (later calls cannot resize it).
pub fn set_threads(threads: usize) -> std::result::Result<(), String> {
    if threads == 1 {
        FORCE_SEQUENTIAL.store(true, Ordering::SeqCst);
        return Ok(());
    }
    FORCE_SEQUENTIAL.store(false, Ordering::SeqCst);
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| e.to_string())
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        Ok(())
    }
}

/// True when maps run on the calling thread only.
pub fn is_sequential() -> bool {
    !cfg!(feature = "parallel") || FORCE_SEQUENTIAL.load(Ordering::SeqCst)
}

/// Maps `f` over `items`, preserving input order in the output.
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if !is_sequential() {
            use rayon::prelude::*;
            return items.par_iter().map(&f).collect();
        }
    }
    items.iter().map(&f).collect()
}

/// Maps `f` over `0..count`, preserving index order in the output.
pub fn map_range<U, F>(count: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if !is_sequential() {
            use rayon::prelude::*;
            return (0..count).into_par_iter().map(&f).collect();
        }
    }
    (0..count).map(&f).collect()
}

/// Always-sequential variants, kept for benchmark comparisons.
pub fn map_slice_seq<T, U, F: Fn(&T) -> U>(items: &[T], f: F) -> Vec<U> {
    items.iter().map(f).collect()
}

pub fn map_range_seq<U, F: Fn(usize) -> U>(count: usize, f: F) -> Vec<U> {
    (0..count).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_slice_preserves_order() {
        let items: Vec<usize> = (0..100).collect();
        let out = map_slice(&items, |&x| x * 2);
        let expected: Vec<usize> = (0..100).map(|x| x * 2).collect();
        assert_eq!(out, expected);
    }

    #[test]
    fn map_range_matches_sequential() {
        let par = map_range(64, |i| (i as f64).sin());
        let seq = map_range_seq(64, |i| (i as f64).sin());
        assert_eq!(par, seq);
    }
}
