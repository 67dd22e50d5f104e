use alloc::vec::Vec;

/// Maps replicate indices to results. Implementations may run in parallel
/// but must return results in index order, so that output depends only on
/// the seeds derived from each index.
pub trait ReplicateRunner: Sync {
    fn map<T, F>(&self, count: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send;
}

/// Runs replicates one after another on the calling thread.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl ReplicateRunner for Sequential {
    fn map<T, F>(&self, count: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        (0..count).map(f).collect()
    }
}
