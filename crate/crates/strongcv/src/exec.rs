use rayon::prelude::*;
use std::ops::Range;
use strongcv_core::exec::blocks;
use strongcv_core::{BlockTask, Executor};

/// Runs blocks on a rayon pool. Block outputs are merged in block order, so
/// results are bitwise identical to [`strongcv_core::Sequential`].
pub struct ThreadPool {
    pool: rayon::ThreadPool,
    chunk: usize,
}

impl ThreadPool {
    /// `threads = None` uses one worker per available core.
    pub fn new(threads: Option<usize>) -> Result<Self, rayon::ThreadPoolBuildError> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            builder = builder.num_threads(n.max(1));
        }
        let pool = builder.build()?;
        let chunk = 4 * pool.current_num_threads();
        Ok(Self { pool, chunk })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for ThreadPool {
    fn run<T: BlockTask>(&self, task: &T, paths: Range<u64>) -> Option<T::Output> {
        let all: Vec<Range<u64>> = blocks(paths).collect();
        let mut acc: Option<T::Output> = None;
        // bounded chunks keep at most `chunk` partial results alive
        for chunk in all.chunks(self.chunk) {
            let outputs: Vec<T::Output> =
                self.pool.install(|| chunk.par_iter().map(|b| task.run_block(b.clone())).collect());
            for out in outputs {
                match acc.as_mut() {
                    Some(a) => task.merge(a, out),
                    None => acc = Some(out),
                }
            }
        }
        acc
    }
}
