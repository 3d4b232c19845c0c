//! Block-structured execution.
//!
//! Path-level work is split into fixed blocks of [`BLOCK_PATHS`] paths whose
//! partial results are merged strictly in block order. Any executor that
//! honours this contract (sequential here, thread pools in the companion
//! crate) produces bitwise-identical results.

use core::ops::Range;

pub const BLOCK_PATHS: u64 = 1024;

/// Work over a contiguous range of path indices.
pub trait BlockTask: Sync {
    type Output: Send;

    fn run_block(&self, paths: Range<u64>) -> Self::Output;

    /// Folds `next` (the following block) into `acc`.
    fn merge(&self, acc: &mut Self::Output, next: Self::Output);
}

pub trait Executor: Sync {
    /// Runs `task` over `paths`, returning `None` for an empty range.
    fn run<T: BlockTask>(&self, task: &T, paths: Range<u64>) -> Option<T::Output>;
}

/// Runs blocks one after another on the calling thread.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn run<T: BlockTask>(&self, task: &T, paths: Range<u64>) -> Option<T::Output> {
        let mut acc: Option<T::Output> = None;
        for block in blocks(paths) {
            let out = task.run_block(block);
            match acc.as_mut() {
                Some(a) => task.merge(a, out),
                None => acc = Some(out),
            }
        }
        acc
    }
}

/// Splits `paths` into the canonical block decomposition.
pub fn blocks(paths: Range<u64>) -> impl Iterator<Item = Range<u64>> + Clone {
    let start = paths.start;
    let end = paths.end.max(start);
    let count = (end - start).div_ceil(BLOCK_PATHS);
    (0..count).map(move |b| {
        let lo = start + b * BLOCK_PATHS;
        lo..(lo + BLOCK_PATHS).min(end)
    })
}
