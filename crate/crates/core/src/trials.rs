//! Deterministic trial execution.
//!
//! Trials are evaluated as a pure function of their index and collected in index order,
//! so every reduction downstream sees the same sequence whatever the worker count.

use std::sync::Arc;

use rayon::prelude::*;
use rayon::ThreadPool;

use crate::error::{LabError, Result};

#[derive(Clone)]
pub struct Executor {
    pool: Option<Arc<ThreadPool>>,
    jobs: usize,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor").field("jobs", &self.jobs).finish()
    }
}

impl Default for Executor {
    fn default() -> Self {
        Executor::serial()
    }
}

impl Executor {
    pub fn serial() -> Self {
        Executor { pool: None, jobs: 1 }
    }

    /// A pool of `jobs` workers; `jobs <= 1` runs inline.
    pub fn new(jobs: usize) -> Result<Self> {
        if jobs <= 1 {
            return Ok(Executor::serial());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| LabError::InvalidParameter(format!("cannot start {jobs} workers: {e}")))?;
        Ok(Executor { pool: Some(Arc::new(pool)), jobs })
    }

    pub fn jobs(&self) -> usize {
        self.jobs
    }

    /// Evaluates `f(0), …, f(count-1)` and returns the results in index order.
    pub fn map<T, F>(&self, count: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        match &self.pool {
            None => (0..count).map(f).collect(),
            Some(pool) => pool.install(|| (0..count).into_par_iter().map(f).collect()),
        }
    }
}

/// Splits per-trial results into the valid values (in trial order) and the failure count.
pub fn split_failures<T>(results: Vec<Result<T>>) -> (Vec<T>, u64) {
    let mut ok = Vec::with_capacity(results.len());
    let mut failed = 0;
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(_) => failed += 1,
        }
    }
    (ok, failed)
}
