//! Execution strategy for the independent per-interval work in a relaxation
//! sweep.

/// Runs a closure over disjoint fixed-size chunks of a buffer.
///
/// Implementations may run chunks concurrently; each call to `f` receives the
/// chunk index and exclusive access to that chunk, so results never depend on
/// scheduling.
pub trait Executor: Sync {
    fn for_each_chunk_mut(
        &self,
        data: &mut [f64],
        chunk_len: usize,
        f: &(dyn Fn(usize, &mut [f64]) + Sync),
    );
}

/// Processes chunks in order on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn for_each_chunk_mut(
        &self,
        data: &mut [f64],
        chunk_len: usize,
        f: &(dyn Fn(usize, &mut [f64]) + Sync),
    ) {
        for (i, chunk) in data.chunks_mut(chunk_len).enumerate() {
            f(i, chunk);
        }
    }
}

impl<E: Executor + ?Sized> Executor for &E {
    fn for_each_chunk_mut(
        &self,
        data: &mut [f64],
        chunk_len: usize,
        f: &(dyn Fn(usize, &mut [f64]) + Sync),
    ) {
        (**self).for_each_chunk_mut(data, chunk_len, f)
    }
}
