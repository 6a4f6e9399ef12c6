//! Execution policy: rayon when the `parallel` feature is on, plain iterators otherwise.
//!
//! Every data-parallel loop in the crate goes through [`Exec`], and every
//! such loop collects results in input order, so outputs never depend on the
//! policy or on the number of worker threads.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Uses the current rayon pool. Falls back to sequential execution when
    /// the crate is built without the `parallel` feature.
    #[default]
    Parallel,
}

impl Exec {
    /// Policy for a worker cap: `1` is sequential, anything else parallel.
    pub fn from_workers(workers: usize) -> Self {
        if workers == 1 {
            Exec::Sequential
        } else {
            Exec::Parallel
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Like [`Exec::map`] but stops at an error. When several items fail in
    /// parallel, the error of the lowest index is returned.
    pub fn try_map<T, R, E, F>(self, items: &[T], f: F) -> Result<Vec<R>, E>
    where
        T: Sync,
        R: Send,
        E: Send,
        F: Fn(&T) -> Result<R, E> + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            let results: Vec<Result<R, E>> = items.par_iter().map(f).collect();
            return results.into_iter().collect();
        }
        items.iter().map(f).collect()
    }

    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }
}

/// Runs `f` with a worker cap. `0` means "use the default pool", `1` runs
/// sequentially, and `n > 1` runs inside a dedicated pool of `n` threads.
pub fn with_workers<R, F>(workers: usize, f: F) -> R
where
    R: Send,
    F: FnOnce(Exec) -> R + Send,
{
    #[cfg(feature = "parallel")]
    if workers > 1 {
        match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => return pool.install(|| f(Exec::Parallel)),
            Err(e) => log::warn!("could not build a {workers}-thread pool: {e}; using the global pool"),
        }
    }
    f(Exec::from_workers(workers))
}
