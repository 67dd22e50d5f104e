use erw_core::runner::ReplicateRunner;
use rayon::prelude::*;

use crate::error::{config_err, LabResult};

/// Rayon pool that returns replicate results in index order.
pub struct Pool {
    pool: rayon::ThreadPool,
}

impl Pool {
    /// `None` uses one thread per available core.
    pub fn new(threads: Option<usize>) -> LabResult<Self> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            if n == 0 {
                return Err(config_err("threads must be positive"));
            }
            b = b.num_threads(n);
        }
        let pool = b.build().map_err(|e| config_err(format!("thread pool: {e}")))?;
        Ok(Pool { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl ReplicateRunner for Pool {
    fn map<T, F>(&self, count: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        self.pool.install(|| (0..count).into_par_iter().map(f).collect())
    }
}
