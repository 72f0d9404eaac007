//! Switch between the sequential and the rayon-backed code paths.
//!
//! Without the `parallel` feature, [`Execution::Parallel`] silently runs the
//! sequential path, so callers never need their own `cfg` gates.

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    /// Single-threaded and bit-reproducible.
    #[default]
    Sequential,
    /// Data-parallel over the rayon global pool.
    Parallel,
}

impl Execution {
    /// `threads == 1` maps to the sequential path, anything else to parallel.
    pub fn from_threads(threads: usize) -> Self {
        if threads == 1 {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Order-preserving map over a slice.
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Order-preserving map over `0..n`.
    pub fn map_range<U, F>(self, n: usize, f: F) -> Vec<U>
    where
        U: Send,
        F: Fn(usize) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Number of worker threads this mode will use.
    pub fn workers(self) -> usize {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return rayon::current_num_threads();
        }
        1
    }
}
