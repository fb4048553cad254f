//! Data-parallel map over task indices.
//!
//! With the `parallel` feature (default) tasks run on the current rayon pool;
//! without it, or with [`Execution::Sequential`], they run in index order on
//! the calling thread. Results are always returned in index order so that
//! downstream reductions are independent of scheduling.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

pub fn map_indexed<T, F>(exec: Execution, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..count).into_par_iter().map(f).collect()
        }
        _ => (0..count).map(f).collect(),
    }
}

/// Whether [`Execution::Parallel`] actually fans out in this build.
pub fn parallel_available() -> bool {
    cfg!(feature = "parallel")
}
