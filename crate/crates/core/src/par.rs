//! Thin parallel layer.
//!
//! With the `parallel` feature these helpers dispatch to rayon; without it they
//! run the same closures sequentially. Every helper preserves index order in
//! its output so callers get identical results in both builds.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use std::sync::atomic::{AtomicU64, Ordering};

/// Running minimum of non-negative floats, shared between workers.
///
/// Non-negative IEEE doubles order like their bit patterns, so a plain
/// integer `fetch_min` does the job.
#[derive(Debug)]
pub struct SharedMin(AtomicU64);

impl SharedMin {
    pub fn new() -> Self {
        Self(AtomicU64::new(f64::INFINITY.to_bits()))
    }

    pub fn get(&self) -> f64 {
        f64::from_bits(self.0.load(Ordering::Relaxed))
    }

    pub fn update(&self, v: f64) {
        debug_assert!(v >= 0.0);
        self.0.fetch_min(v.to_bits(), Ordering::Relaxed);
    }
}

impl Default for SharedMin {
    fn default() -> Self {
        Self::new()
    }
}

/// `(0..n).map(f).collect()`, possibly in parallel.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Maps `f` over the items of a slice, keeping order.
pub fn map_slice<'a, S, T, F>(items: &'a [S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&'a S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Runs `f(chunk_index, chunk)` over consecutive mutable chunks of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}

/// Maps `f` over consecutive chunks of `data`, keeping chunk order.
pub fn map_chunks<S, T, F>(data: &[S], chunk: usize, f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&[S]) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        data.par_chunks(chunk).map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks(chunk).map(f).collect()
    }
}

/// Sorts finite floats ascending. NaN is rejected upstream.
pub fn sort_f64(data: &mut [f64]) {
    #[cfg(feature = "parallel")]
    {
        data.par_sort_unstable_by(f64::total_cmp);
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.sort_unstable_by(f64::total_cmp);
    }
}

/// Number of worker threads the helpers above will use.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
