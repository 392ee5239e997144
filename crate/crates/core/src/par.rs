//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) work items fan out over a rayon pool;
//! without it, or with [`Exec::Sequential`], they run in index order on the
//! calling thread. Results are always returned in index order, so callers that
//! derive per-item RNG streams from the index get identical output either way.

/// How independent work items are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Parallel over `workers` threads; `None` uses the global pool.
    Parallel { workers: Option<usize> },
    #[default]
    Auto,
}

impl Exec {
    pub fn from_workers(workers: Option<usize>) -> Self {
        match workers {
            Some(1) => Exec::Sequential,
            Some(n) => Exec::Parallel { workers: Some(n) },
            None => Exec::Auto,
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && !matches!(self, Exec::Sequential)
    }

    /// Evaluates `f(0..n)` and collects the results in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            match self {
                Exec::Sequential => (0..n).map(f).collect(),
                Exec::Auto | Exec::Parallel { workers: None } => {
                    (0..n).into_par_iter().map(f).collect()
                }
                Exec::Parallel {
                    workers: Some(threads),
                } => match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                    Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
                    Err(err) => {
                        log::warn!("thread pool unavailable ({err}); running sequentially");
                        (0..n).map(f).collect()
                    }
                },
            }
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..n).map(f).collect()
        }
    }

    /// Like [`Exec::map`] but stops at the first error (by index order).
    pub fn try_map<T, E, F>(self, n: usize, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(usize) -> Result<T, E> + Sync + Send,
    {
        self.map(n, f).into_iter().collect()
    }
}
