//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the maps below run on the rayon
//! global pool; without it they are plain iterator maps. Results are always
//! returned in input order so reductions stay deterministic.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// `f` applied to every item, results in input order.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
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

/// `f(i)` for `i in 0..n`, results in index order.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
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

/// Fallible variant of [`map_range`]; the first error in index order wins.
pub fn try_map_range<R, E, F>(n: usize, f: F) -> Result<Vec<R>, E>
where
    R: Send,
    E: Send,
    F: Fn(usize) -> Result<R, E> + Sync + Send,
{
    map_range(n, f).into_iter().collect()
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
