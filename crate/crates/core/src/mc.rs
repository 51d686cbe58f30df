//! Parallel fan-out over path indices with order-preserving collection.
//!
//! Every path draws from its own counter-based stream, and results come back
//! in path order, so all reductions are independent of the thread count.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::integrator::TimeGrid;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McPlan {
    pub grid: TimeGrid,
    /// Grid indices, strictly increasing.
    pub checkpoints: Vec<usize>,
    pub paths: usize,
    pub master_seed: u64,
    /// Worker threads; 0 means rayon's default.
    #[serde(skip)]
    pub threads: usize,
}

impl McPlan {
    /// Plan whose checkpoints are the grid points nearest to `times`.
    pub fn new(grid: TimeGrid, times: &[f64], paths: usize, master_seed: u64, threads: usize) -> Result<Self> {
        if paths == 0 {
            return Err(LabError::invalid("need at least one Monte Carlo path"));
        }
        let checkpoints = times.iter().map(|t| grid.index_of(*t)).collect::<Result<Vec<_>>>()?;
        if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(LabError::invalid("checkpoints must be strictly increasing"));
        }
        Ok(McPlan {
            grid,
            checkpoints,
            paths,
            master_seed,
            threads,
        })
    }

    pub fn checkpoint_times(&self) -> Vec<f64> {
        self.checkpoints.iter().map(|k| self.grid.time(*k)).collect()
    }

    /// Evaluate `f` on every path index; results in index order.
    pub fn run<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64) -> Result<T> + Sync + Send,
    {
        run_indexed(self.paths, self.threads, f)
    }
}

pub fn run_indexed<T, F>(count: usize, threads: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| LabError::invalid(format!("thread pool: {e}")))?;
    pool.install(|| (0..count as u64).into_par_iter().map(&f).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, DOMAIN_NOISE};
    use crate::stats::pairwise_sum;
    use rand::Rng;

    #[test]
    fn thread_count_does_not_change_results() {
        let f = |p: u64| -> Result<f64> {
            let mut r = stream(5, DOMAIN_NOISE, p);
            Ok((0..100).map(|_| r.random::<f64>()).sum())
        };
        let a = run_indexed(257, 1, f).unwrap();
        let b = run_indexed(257, 4, f).unwrap();
        assert_eq!(a, b);
        assert_eq!(pairwise_sum(&a).to_bits(), pairwise_sum(&b).to_bits());
    }

    #[test]
    fn errors_propagate() {
        let r = run_indexed(10, 2, |p| if p == 7 { Err(LabError::BlowUp { step: 3 }) } else { Ok(p) });
        assert_eq!(r, Err(LabError::BlowUp { step: 3 }));
    }

    #[test]
    fn plan_checkpoints() {
        let grid = TimeGrid::new(2.0, 200).unwrap();
        let plan = McPlan::new(grid, &[0.5, 1.0, 2.0], 10, 1, 1).unwrap();
        assert_eq!(plan.checkpoints, vec![50, 100, 200]);
        assert_eq!(plan.checkpoint_times(), vec![0.5, 1.0, 2.0]);
        assert!(McPlan::new(grid, &[1.0, 0.5], 10, 1, 1).is_err());
        assert!(McPlan::new(grid, &[0.505], 10, 1, 1).is_err());
        assert!(McPlan::new(grid, &[1.0], 0, 1, 1).is_err());
    }
}
