//! Data-parallel helpers with a sequential fallback.
//!
//! Every hot loop in the crate (scene batches, grid tuples, RANSAC chunks,
//! Monte Carlo trials) goes through [`map`]. With the `parallel` feature the
//! work is spread over the rayon pool; without it, or with
//! [`Parallelism::Sequential`], the same closure runs in a plain iterator.
//! Results always come back in input order so outputs do not depend on the
//! schedule.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parallelism {
    Sequential,
    #[default]
    Parallel,
}

impl Parallelism {
    /// Whether work will actually be spread across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Parallel
    }
}

/// Order-preserving map over a slice.
pub fn map<T, R, F>(items: &[T], parallelism: Parallelism, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallelism.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = parallelism;
    items.iter().map(f).collect()
}

/// Order-preserving map over `0..n`.
pub fn map_range<R, F>(n: usize, parallelism: Parallelism, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallelism.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = parallelism;
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_preserve_order() {
        let xs: Vec<u64> = (0..257).collect();
        let seq = map(&xs, Parallelism::Sequential, |x| x * x);
        let par = map(&xs, Parallelism::Parallel, |x| x * x);
        assert_eq!(seq, par);
        assert_eq!(map_range(5, Parallelism::Parallel, |i| i), vec![0, 1, 2, 3, 4]);
    }
}
