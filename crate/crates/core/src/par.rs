//! Data-parallel helpers.
//!
//! With the `parallel` feature (on by default) [`Execution::Parallel`] maps
//! over a rayon pool; without it every request runs sequentially. Results
//! never depend on the execution mode.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How an embarrassingly parallel loop is run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if parallel_available() {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Whether the crate was built with rayon support.
pub const fn parallel_available() -> bool {
    cfg!(feature = "parallel")
}

/// Evaluates `f(0), …, f(n-1)` and collects the results in index order.
pub fn map_indices<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => (0..n).into_par_iter().map(f).collect(),
        _ => (0..n).map(f).collect(),
    }
}

/// Folds `f(i)` for `i in 0..n` into a histogram of `bins` counters.
/// Each `f(i)` returns a bin index; indices past the end go to the last bin.
pub fn histogram<F>(exec: Execution, n: usize, bins: usize, f: F) -> Vec<u64>
where
    F: Fn(usize) -> usize + Sync + Send,
{
    assert!(bins > 0);
    let bump = |mut acc: Vec<u64>, i: usize| {
        acc[f(i).min(bins - 1)] += 1;
        acc
    };
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => (0..n)
            .into_par_iter()
            .fold(|| vec![0u64; bins], bump)
            .reduce(
                || vec![0u64; bins],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            ),
        _ => (0..n).fold(vec![0u64; bins], bump),
    }
}
