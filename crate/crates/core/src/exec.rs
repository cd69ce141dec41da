//! Execution strategy for the data-parallel loops.

/// How row-parallel loops are executed.
///
/// `Parallel` falls back to sequential execution when the crate is built without the
/// `parallel` feature, so callers never need to gate on the feature themselves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Below this many scalar multiply-adds a loop always runs sequentially.
#[cfg_attr(not(feature = "parallel"), allow(dead_code))]
pub(crate) const PARALLEL_MIN_WORK: usize = 1 << 15;

impl Execution {
    #[cfg_attr(not(feature = "parallel"), allow(dead_code))]
    pub(crate) fn worth_it(self, work: usize) -> bool {
        self == Execution::Parallel && cfg!(feature = "parallel") && work >= PARALLEL_MIN_WORK
    }
}

/// Applies `f(row_index, row)` to every `width`-sized chunk of `data`.
pub(crate) fn for_each_row_mut<F>(exec: Execution, work: usize, data: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Send + Sync,
{
    if width == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    if exec.worth_it(work) {
        use rayon::prelude::*;
        data.par_chunks_mut(width)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
        return;
    }
    let _ = (exec, work);
    data.chunks_mut(width).enumerate().for_each(|(i, row)| f(i, row));
}

/// Order-preserving map over a slice.
pub fn map_collect<T, U, F>(exec: Execution, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if exec == Execution::Parallel && items.len() > 1 {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}
