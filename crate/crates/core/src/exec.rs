//! Order-preserving data-parallel maps with a sequential fallback.
//!
//! Results are always gathered in index order, so every reduction downstream
//! is independent of thread count and scheduling.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parallelism {
    Sequential,
    /// Rayon's current thread pool. Without the `parallel` feature this runs
    /// sequentially.
    #[default]
    Rayon,
}

impl Parallelism {
    /// `(0..n).map(f)` collected in order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Parallelism::Sequential => (0..n).map(f).collect(),
            Parallelism::Rayon => parallel_map(n, f),
        }
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_preserve_order() {
        let a = Parallelism::Sequential.map(1000, |i| i * i);
        let b = Parallelism::Rayon.map(1000, |i| i * i);
        assert_eq!(a, b);
        assert!(Parallelism::Rayon.map(0, |i| i).is_empty());
    }
}
