//! Thread-pool executor for the per-interval relaxation work.

use mgritopt_core::exec::Executor;
use rayon::prelude::*;

/// Runs chunks on a dedicated rayon pool of fixed size.
pub struct ThreadPoolExecutor {
    pool: rayon::ThreadPool,
}

impl ThreadPoolExecutor {
    pub fn new(threads: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .thread_name(|i| format!("mgrit-{i}"))
            .build()?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for ThreadPoolExecutor {
    fn for_each_chunk_mut(
        &self,
        data: &mut [f64],
        chunk_len: usize,
        f: &(dyn Fn(usize, &mut [f64]) + Sync),
    ) {
        self.pool.install(|| {
            data.par_chunks_mut(chunk_len)
                .enumerate()
                .for_each(|(i, chunk)| f(i, chunk));
        });
    }
}
