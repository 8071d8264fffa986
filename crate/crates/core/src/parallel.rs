//! Data-parallel helpers. With the `parallel` feature disabled every helper
//! runs sequentially and [`Parallelism::Parallel`] behaves like
//! [`Parallelism::Sequential`].

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parallelism {
    Sequential,
    #[default]
    Parallel,
}

impl Parallelism {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Parallel
    }
}

/// Maps `f` over `0..n`, preserving index order in the output.
pub fn map_indices<T, F>(n: usize, parallelism: Parallelism, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallelism.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = parallelism;
    (0..n).map(f).collect()
}

/// Short-circuiting `any` over `0..n`.
pub fn any_in_range<F>(n: u64, f: F) -> bool
where
    F: Fn(u64) -> bool + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().any(f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).any(f)
    }
}

pub fn fold_range<T, F, M>(n: u64, identity: T, f: F, merge: M) -> T
where
    T: Copy + Send + Sync,
    F: Fn(u64) -> T + Sync + Send,
    M: Fn(T, T) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).reduce(|| identity, &merge)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).fold(identity, merge)
    }
}
