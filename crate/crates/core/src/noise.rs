//! Brownian increments, either materialized per path ([`NoiseBlock`]) or
//! drawn on the fly ([`NoiseStream`]). Both read the same counter-based
//! stream, so a block and a stream with equal lineage agree bit for bit.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::integrator::TimeGrid;
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SeedLineage {
    pub master_seed: u64,
    pub domain: u64,
    pub path_index: u64,
}

impl SeedLineage {
    pub fn new(master_seed: u64, domain: u64, path_index: u64) -> Self {
        SeedLineage {
            master_seed,
            domain,
            path_index,
        }
    }
}

pub struct NoiseStream {
    rng: ChaCha8Rng,
    sqrt_h: f64,
    width: usize,
}

impl NoiseStream {
    /// Draws `N(0, h)` increments for the first `width` coordinates; the rest
    /// of every row is zero.
    pub fn new(lineage: SeedLineage, h: f64, width: usize) -> Self {
        NoiseStream {
            rng: stream(lineage.master_seed, lineage.domain, lineage.path_index),
            sqrt_h: h.sqrt(),
            width,
        }
    }

    pub fn next_into(&mut self, out: &mut [f64]) {
        let w = self.width.min(out.len());
        for o in &mut out[..w] {
            let z: f64 = self.rng.sample(StandardNormal);
            *o = z * self.sqrt_h;
        }
        out[w..].iter_mut().for_each(|o| *o = 0.0);
    }
}

/// A full `steps × dim` matrix of increments for one path.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBlock {
    increments: Vec<f64>,
    steps: usize,
    dim: usize,
    pub lineage: SeedLineage,
}

impl NoiseBlock {
    pub fn generate(lineage: SeedLineage, grid: &TimeGrid, dim: usize, width: usize) -> Self {
        let mut s = NoiseStream::new(lineage, grid.h(), width);
        let mut increments = vec![0.0; grid.steps() * dim];
        for row in increments.chunks_mut(dim) {
            s.next_into(row);
        }
        NoiseBlock {
            increments,
            steps: grid.steps(),
            dim,
            lineage,
        }
    }

    /// Zero noise, for deterministic runs.
    pub fn zeros(grid: &TimeGrid, dim: usize) -> Self {
        NoiseBlock {
            increments: vec![0.0; grid.steps() * dim],
            steps: grid.steps(),
            dim,
            lineage: SeedLineage::new(0, 0, 0),
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Increment over step `k` (from `t_k` to `t_{k+1}`).
    pub fn row(&self, k: usize) -> &[f64] {
        &self.increments[k * self.dim..(k + 1) * self.dim]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.increments[k * self.dim..(k + 1) * self.dim]
    }
}
