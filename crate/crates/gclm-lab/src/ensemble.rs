//! Ensemble execution: data-parallel over independent trajectories.
//!
//! Work items are addressed by a trajectory index; results come back in
//! index order regardless of scheduling, so parallel and sequential
//! execution produce identical artifacts. With the `parallel` feature
//! (default) the parallel driver runs on rayon; without it, both drivers
//! are sequential.

use crate::error::{Error, Result};

/// Maps `f` over `0..n`, in parallel when available.
pub fn ensemble_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        ensemble_map_seq(n, f)
    }
}

/// Sequential reference driver (always available; benchmarked against the
/// parallel one).
pub fn ensemble_map_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Configures the global worker pool. `None` keeps the default (all
/// available parallelism). Returns the effective worker count. Calling it
/// more than once with a different explicit count is an error the second
/// time on rayon's side; that error is surfaced as a config error.
pub fn configure_threads(threads: Option<usize>) -> Result<usize> {
    #[cfg(feature = "parallel")]
    {
        if let Some(t) = threads {
            if t == 0 {
                return Err(Error::config("thread count must be at least 1"));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build_global()
                .map_err(|e| Error::config(format!("failed to configure thread pool: {e}")))?;
            Ok(t)
        } else {
            Ok(rayon::current_num_threads())
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        if let Some(t) = threads {
            if t == 0 {
                return Err(Error::config("thread count must be at least 1"));
            }
            if t > 1 {
                return Err(Error::config(
                    "built without the `parallel` feature; only --threads 1 is available",
                ));
            }
        }
        Ok(1)
    }
}

/// Collects a vector of fallible ensemble results, preserving order, or
/// returns the first error by index (deterministic).
pub fn collect_results<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        out.push(r?);
    }
    Ok(out)
}
