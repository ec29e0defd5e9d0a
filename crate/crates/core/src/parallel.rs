//! Order-preserving map over independent runs.
//!
//! With the `parallel` feature the map fans out on a rayon pool; without it
//! every mode runs sequentially. Results are always returned in input order,
//! so downstream output does not depend on the worker count.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// `workers: None` uses rayon's default thread count.
    #[default]
    Parallel,
    Workers(usize),
}

impl Execution {
    pub fn from_workers(workers: Option<usize>) -> Self {
        match workers {
            None => Self::Parallel,
            Some(0 | 1) => Self::Sequential,
            Some(w) => Self::Workers(w),
        }
    }
}

/// `items.iter().map(f)`, possibly in parallel.
pub fn map_ordered<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        match exec {
            Execution::Sequential => {}
            Execution::Parallel => return items.par_iter().map(&f).collect(),
            Execution::Workers(w) => match rayon::ThreadPoolBuilder::new().num_threads(w).build() {
                Ok(pool) => return pool.install(|| items.par_iter().map(&f).collect()),
                Err(_) => return items.par_iter().map(&f).collect(),
            },
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = exec;
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_in_every_mode() {
        let items: Vec<u64> = (0..500).collect();
        let expect: Vec<u64> = items.iter().map(|v| v * v).collect();
        for exec in [
            Execution::Sequential,
            Execution::Parallel,
            Execution::Workers(4),
        ] {
            assert_eq!(map_ordered(exec, &items, |v| v * v), expect);
        }
    }

    #[test]
    fn worker_counts() {
        assert_eq!(Execution::from_workers(Some(1)), Execution::Sequential);
        assert_eq!(Execution::from_workers(Some(4)), Execution::Workers(4));
        assert_eq!(Execution::from_workers(None), Execution::Parallel);
    }
}
