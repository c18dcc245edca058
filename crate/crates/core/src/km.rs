//! Drift and squared-diffusion regression targets from ensemble increments.
//!
//! The first conditional moment of the increments over dt estimates the
//! drift, the second estimates the squared diffusion:
//!
//! ```text
//! y_drift[(n,j)] = mean_s (u_s(t_{n+1}, x_j) - u_s(t_n, x_j)) / dt
//! y_diff [(n,j)] = mean_s (u_s(t_{n+1}, x_j) - u_s(t_n, x_j))^2 / dt
//! ```
//!
//! Rows use the same (time-major, then space) vectorization as the
//! dictionary, see [`crate::features::row_index`].

use nalgebra::DVector;
use ndarray::ArrayView2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sim::EnsembleField;

/// Drift and squared-diffusion targets, length N = N_x * (N_t - 1) each.
#[derive(Debug, Clone)]
pub struct TargetVectors {
    pub drift: DVector<f64>,
    pub diffusion: DVector<f64>,
}

impl TargetVectors {
    pub fn n_rows(&self) -> usize {
        self.drift.len()
    }
}

/// Streaming builder fed one trajectory at a time, mirroring
/// [`crate::features::DictionaryAccumulator`].
pub struct TargetAccumulator {
    n_time_rows: usize,
    n_nodes: usize,
    dt: f64,
    drift: Vec<f64>,
    diffusion: Vec<f64>,
    count: usize,
}

impl TargetAccumulator {
    pub fn new(n_time_rows: usize, n_nodes: usize, dt: f64) -> Result<Self> {
        if n_time_rows == 0 || n_nodes == 0 {
            return Err(Error::InvalidInput("empty target layout".into()));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        Ok(TargetAccumulator {
            n_time_rows,
            n_nodes,
            dt,
            drift: vec![0.0; n_time_rows * n_nodes],
            diffusion: vec![0.0; n_time_rows * n_nodes],
            count: 0,
        })
    }

    pub fn add_ensemble(&mut self, trajectory: ArrayView2<'_, f64>) -> Result<()> {
        if trajectory.ncols() != self.n_nodes || trajectory.nrows() < self.n_time_rows + 1 {
            return Err(Error::InvalidInput(format!(
                "trajectory shape ({}, {}) incompatible with {} increment rows on {} nodes",
                trajectory.nrows(),
                trajectory.ncols(),
                self.n_time_rows,
                self.n_nodes
            )));
        }
        let nx = self.n_nodes;
        let drift = &mut self.drift;
        let diffusion = &mut self.diffusion;
        drift
            .par_chunks_mut(nx)
            .zip(diffusion.par_chunks_mut(nx))
            .take(self.n_time_rows)
            .enumerate()
            .for_each(|(n, (dr, df))| {
                let now = trajectory.row(n);
                let next = trajectory.row(n + 1);
                for j in 0..nx {
                    let du = next[j] - now[j];
                    dr[j] += du;
                    df[j] += du * du;
                }
            });
        self.count += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<TargetVectors> {
        if self.count == 0 {
            return Err(Error::InvalidInput("no ensembles accumulated".into()));
        }
        let scale = 1.0 / (self.count as f64 * self.dt);
        let drift = DVector::from_iterator(self.drift.len(), self.drift.iter().map(|v| v * scale));
        let diffusion =
            DVector::from_iterator(self.diffusion.len(), self.diffusion.iter().map(|v| v * scale));
        if drift.iter().chain(diffusion.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "regression target" });
        }
        Ok(TargetVectors { drift, diffusion })
    }
}

fn targets(data: &EnsembleField) -> Result<TargetVectors> {
    let mut acc = TargetAccumulator::new(
        data.time.n_increments(),
        data.grid.n_nodes(),
        data.time.step(),
    )?;
    for s in 0..data.n_ensembles() {
        acc.add_ensemble(data.ensemble(s))?;
    }
    acc.finish()
}

/// First Kramers-Moyal coefficient: ensemble-mean increment over dt.
pub fn drift_target(data: &EnsembleField) -> Result<DVector<f64>> {
    Ok(targets(data)?.drift)
}

/// Second Kramers-Moyal coefficient: ensemble-mean squared increment over dt.
pub fn diffusion_target(data: &EnsembleField) -> Result<DVector<f64>> {
    Ok(targets(data)?.diffusion)
}

/// Both targets in one pass over the data.
pub fn build_targets(data: &EnsembleField) -> Result<TargetVectors> {
    targets(data)
}
