//! Element loops that run on the rayon pool when the `parallel` feature is
//! enabled and sequentially otherwise. Results never depend on the choice.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Calls `f(k, chunk)` for every consecutive `chunk` of `data`.
pub fn for_each_chunk<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    data.par_chunks_mut(chunk)
        .enumerate()
        .for_each(|(k, c)| f(k, c));
    #[cfg(not(feature = "parallel"))]
    data.chunks_mut(chunk)
        .enumerate()
        .for_each(|(k, c)| f(k, c));
}

/// Fallible variant of [`for_each_chunk`]; returns the error of the lowest
/// failing chunk index so reports are deterministic.
pub fn try_for_each_chunk<T, E, F>(data: &mut [T], chunk: usize, f: F) -> Result<(), E>
where
    T: Send,
    E: Send,
    F: Fn(usize, &mut [T]) -> Result<(), E> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    let errs: Vec<(usize, E)> = data
        .par_chunks_mut(chunk)
        .enumerate()
        .filter_map(|(k, c)| f(k, c).err().map(|e| (k, e)))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let errs: Vec<(usize, E)> = data
        .chunks_mut(chunk)
        .enumerate()
        .filter_map(|(k, c)| f(k, c).err().map(|e| (k, e)))
        .collect();
    match errs.into_iter().min_by_key(|e| e.0) {
        Some((_, e)) => Err(e),
        None => Ok(()),
    }
}

/// Maps `0..n` to a vector, preserving order.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    return (0..n).into_par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    return (0..n).map(f).collect();
}

/// Runs `f` with `threads` workers when parallel execution is available.
/// `threads == 0` uses the global pool.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if threads > 0 {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                return pool.install(f);
            }
        }
        f()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

/// True when built with the `parallel` feature.
pub const PARALLEL: bool = cfg!(feature = "parallel");
