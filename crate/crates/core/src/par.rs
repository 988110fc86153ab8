//! Index-parallel map used by the solvers. With the `parallel` feature off,
//! or when a caller asks for sequential execution, everything runs on the
//! calling thread. Results are collected in index order either way, so the
//! output does not depend on the execution mode.

/// Work items below this count always run sequentially.
pub const MIN_PARALLEL_ITEMS: usize = 64;

/// Whether parallel execution is compiled in.
pub const AVAILABLE: bool = cfg!(feature = "parallel");

#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T, F>(n: usize, parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    if parallel && n >= MIN_PARALLEL_ITEMS {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T, F>(n: usize, _parallel: bool, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Like [`map_indexed`] but without the minimum-size cutoff, for coarse work
/// items such as whole tree solves.
#[cfg(feature = "parallel")]
pub(crate) fn map_coarse<T, F>(n: usize, parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    if parallel && n > 1 {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_coarse<T, F>(n: usize, _parallel: bool, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}
