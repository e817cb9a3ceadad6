use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

use crt_cea_core::Executor;

/// Runs indexed tasks on a rayon pool. Results come back in index order, so
/// output is identical to [`crt_cea_core::Serial`].
pub struct PoolExecutor {
    pool: ThreadPool,
}

impl PoolExecutor {
    /// `workers = 0` uses the available parallelism.
    pub fn new(workers: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        Ok(PoolExecutor { pool: ThreadPoolBuilder::new().num_threads(workers).build()? })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for PoolExecutor {
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(&f).collect())
    }
}

/// Executor chosen at run time: `--serial` or a worker pool.
pub enum Exec {
    Serial,
    Pool(PoolExecutor),
}

impl Exec {
    pub fn new(serial: bool, workers: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        if serial {
            Ok(Exec::Serial)
        } else {
            PoolExecutor::new(workers).map(Exec::Pool)
        }
    }

    pub fn workers(&self) -> usize {
        match self {
            Exec::Serial => 1,
            Exec::Pool(p) => p.workers(),
        }
    }
}

impl Executor for Exec {
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Exec::Serial => crt_cea_core::Serial.map_indexed(n, f),
            Exec::Pool(p) => p.map_indexed(n, f),
        }
    }
}
