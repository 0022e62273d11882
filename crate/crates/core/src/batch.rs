//! Monte Carlo batches over path indices, data-parallel with rayon when the
//! `parallel` feature is enabled and sequential otherwise.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    /// Uses the rayon pool; identical to `Sequential` without the feature.
    #[default]
    Parallel,
    Sequential,
}

/// Whether `Execution::Parallel` actually runs on a thread pool.
pub fn parallel_available() -> bool {
    cfg!(feature = "parallel")
}

/// `(0..n).map(f)`, results in index order regardless of execution mode.
pub fn map_indexed<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
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

/// `items.iter().map(f)` in order.
pub fn map_slice<S, T, F>(items: &[S], exec: Execution, f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    map_indexed(items.len(), exec, |i| f(&items[i]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let f = |i: usize| (i as f64).sqrt().sin();
        let a = map_indexed(1000, Execution::Parallel, f);
        let b = map_indexed(1000, Execution::Sequential, f);
        assert_eq!(a, b);
        assert_eq!(map_slice(&[1, 2, 3], Execution::Parallel, |x| x * 2), vec![2, 4, 6]);
    }
}
