//! Finite-difference-in-space, semi-implicit Euler-Maruyama-in-time
//! integration of the benchmark SPDEs.
//!
//! Each time step solves
//!
//! ```text
//! (I - dt * eps * A) u_{n+1} = u_n + dt * F(u_n) + sigma * dW_n
//! ```
//!
//! with the Laplacian treated implicitly and the polynomial source and noise
//! explicitly. The system matrix is constant, so it is factorized once per
//! run (Thomas factorization; Sherman-Morrison correction for the periodic
//! corner entries) and reused for every step of every ensemble.

use ndarray::{Array2, Array3, ArrayView2, ArrayViewMut2, Axis};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Boundary, Grid1d, TimeSpec};
use crate::model::SpdeModel;

/// Default magnitude bound beyond which a trajectory counts as blown up.
pub const DEFAULT_BLOWUP_BOUND: f64 = 1e6;

/// Ensembles simulated per parallel batch; bounds transient memory.
const SIM_BATCH: usize = 32;

/// Dense second-difference operator, row pattern (1, -2, 1) / dx^2, with
/// wrap-around corner entries for periodic grids.
pub fn build_laplacian(grid: &Grid1d) -> DMatrix<f64> {
    let n = grid.n_nodes();
    let s = 1.0 / (grid.spacing() * grid.spacing());
    let mut a = DMatrix::zeros(n, n);
    for j in 0..n {
        a[(j, j)] = -2.0 * s;
        if j > 0 {
            a[(j, j - 1)] += s;
        }
        if j + 1 < n {
            a[(j, j + 1)] += s;
        }
        if grid.boundary() == Boundary::Periodic {
            if j == 0 {
                a[(0, n - 1)] += s;
            }
            if j == n - 1 {
                a[(n - 1, 0)] += s;
            }
        }
    }
    a
}

/// Pre-factorized solver for (I - dt * eps * A^D) x = b.
///
/// Dirichlet grids use a plain Thomas factorization; periodic grids add a
/// rank-one Sherman-Morrison correction for the corner entries.
#[derive(Debug, Clone)]
pub struct ImplicitSolver {
    n: usize,
    /// Sub/super-diagonal value of the system matrix (-dt*eps/dx^2).
    off: f64,
    /// Modified diagonal from the forward elimination.
    diag: Vec<f64>,
    /// Solution of the modified system against the Sherman-Morrison column
    /// (periodic only).
    correction: Option<CyclicCorrection>,
    identity: bool,
}

#[derive(Debug, Clone)]
struct CyclicCorrection {
    z: Vec<f64>,
    gamma: f64,
    corner: f64,
}

impl ImplicitSolver {
    pub fn new(grid: &Grid1d, diffusivity: f64, dt: f64) -> Result<Self> {
        if !(diffusivity >= 0.0) || !(dt > 0.0) {
            return Err(Error::InvalidInput(
                "implicit solver needs diffusivity >= 0 and dt > 0".into(),
            ));
        }
        let n = grid.n_nodes();
        let alpha = dt * diffusivity / (grid.spacing() * grid.spacing());
        if alpha == 0.0 {
            return Ok(ImplicitSolver {
                n,
                off: 0.0,
                diag: vec![1.0; n],
                correction: None,
                identity: true,
            });
        }
        let b0 = 1.0 + 2.0 * alpha;
        let off = -alpha;
        match grid.boundary() {
            Boundary::DirichletZero => {
                let diag = thomas_factor(n, b0, off, 0.0, 0.0)?;
                Ok(ImplicitSolver {
                    n,
                    off,
                    diag,
                    correction: None,
                    identity: false,
                })
            }
            Boundary::Periodic => {
                // Sherman-Morrison: M = B + u v^T with u = (gamma, 0, .., corner),
                // v = (1, 0, .., corner/gamma); B is tridiagonal with adjusted
                // first and last diagonal entries.
                let corner = -alpha;
                let gamma = -b0;
                let first = b0 - gamma;
                let last = b0 - corner * corner / gamma;
                let diag = thomas_factor(n, b0, off, first - b0, last - b0)?;
                let mut z = vec![0.0; n];
                z[0] = gamma;
                z[n - 1] = corner;
                thomas_solve(&diag, off, &mut z);
                let denom = 1.0 + z[0] + corner * z[n - 1] / gamma;
                if denom.abs() < 1e-300 {
                    return Err(Error::LinearSolveFailure { row: 0, pivot: denom });
                }
                Ok(ImplicitSolver {
                    n,
                    off,
                    diag,
                    correction: Some(CyclicCorrection { z, gamma, corner }),
                    identity: false,
                })
            }
        }
    }

    /// Solve in place; `rhs` becomes the solution.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        debug_assert_eq!(rhs.len(), self.n);
        if self.identity {
            return;
        }
        thomas_solve(&self.diag, self.off, rhs);
        if let Some(c) = &self.correction {
            let factor = (rhs[0] + c.corner * rhs[self.n - 1] / c.gamma)
                / (1.0 + c.z[0] + c.corner * c.z[self.n - 1] / c.gamma);
            for (x, z) in rhs.iter_mut().zip(&c.z) {
                *x -= factor * z;
            }
        }
    }
}

/// Forward-eliminated diagonal of a constant tridiagonal matrix, with the
/// first/last diagonal entries shifted by `d_first`/`d_last`.
fn thomas_factor(n: usize, diag: f64, off: f64, d_first: f64, d_last: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n];
    for i in 0..n {
        let base = diag
            + if i == 0 { d_first } else { 0.0 }
            + if i == n - 1 { d_last } else { 0.0 };
        let piv = if i == 0 {
            base
        } else {
            base - off * off / out[i - 1]
        };
        if piv.abs() < 1e-300 {
            return Err(Error::LinearSolveFailure { row: i, pivot: piv });
        }
        out[i] = piv;
    }
    Ok(out)
}

fn thomas_solve(diag: &[f64], off: f64, rhs: &mut [f64]) {
    let n = diag.len();
    for i in 1..n {
        rhs[i] -= off / diag[i - 1] * rhs[i - 1];
    }
    rhs[n - 1] /= diag[n - 1];
    for i in (0..n - 1).rev() {
        rhs[i] = (rhs[i] - off * rhs[i + 1]) / diag[i];
    }
}

/// Wiener increments for a batch of ensembles, variance dt per node and step.
#[derive(Debug, Clone)]
pub struct WienerIncrements {
    /// Shape (n_ensembles, n_steps, n_nodes).
    pub increments: Array3<f64>,
    pub step: f64,
}

/// Per-ensemble RNG stream. Derived from (seed, index) with a splitmix64
/// chain so results do not depend on scheduling or evaluation order.
pub(crate) fn ensemble_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut state = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draw independent N(0, dt) increments for every (ensemble, step, node).
///
/// Deterministic given the seed; ensemble `i` consumes the same stream the
/// simulator uses, drawn in (step, node) order.
pub fn sample_wiener(
    n_ensembles: usize,
    n_steps: usize,
    grid: &Grid1d,
    dt: f64,
    seed: u64,
) -> Result<WienerIncrements> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let nx = grid.n_nodes();
    let sd = dt.sqrt();
    let mut increments = Array3::zeros((n_ensembles, n_steps, nx));
    increments
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(s, mut block)| {
            let mut rng = ensemble_rng(seed, s as u64);
            for v in block.iter_mut() {
                let g: f64 = StandardNormal.sample(&mut rng);
                *v = sd * g;
            }
        });
    Ok(WienerIncrements { increments, step: dt })
}

/// One semi-implicit Euler-Maruyama step. Builds the factorization on the
/// fly; simulation loops use [`simulate_ensemble`], which factors once.
pub fn step_semi_implicit(
    state: &[f64],
    model: &SpdeModel,
    grid: &Grid1d,
    dt: f64,
    dw_row: &[f64],
) -> Result<Vec<f64>> {
    if state.len() != grid.n_nodes() || dw_row.len() != grid.n_nodes() {
        return Err(Error::InvalidInput(
            "state and noise rows must match the grid size".into(),
        ));
    }
    if state.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "state" });
    }
    let solver = ImplicitSolver::new(grid, model.diffusivity(), dt)?;
    let mut next = vec![0.0; state.len()];
    advance(state, &mut next, model, &solver, dt, noise_scale(model, grid), dw_row);
    Ok(next)
}

fn noise_scale(model: &SpdeModel, grid: &Grid1d) -> f64 {
    if model.noise_scaled_by_sqrt_dx() {
        model.noise_amplitude() / grid.spacing().sqrt()
    } else {
        model.noise_amplitude()
    }
}

#[inline]
fn advance(
    state: &[f64],
    next: &mut [f64],
    model: &SpdeModel,
    solver: &ImplicitSolver,
    dt: f64,
    sigma: f64,
    dw_row: &[f64],
) {
    for ((out, &u), &dw) in next.iter_mut().zip(state).zip(dw_row) {
        *out = u + dt * model.source(u) + sigma * dw;
    }
    solver.solve_in_place(next);
}

/// Initial condition shared by all ensembles.
pub enum InitialCondition {
    Constant(f64),
    /// One value per grid node.
    Profile(Vec<f64>),
    /// Evaluated at the node positions.
    Function(Box<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl InitialCondition {
    pub fn from_fn<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        InitialCondition::Function(Box::new(f))
    }

    pub fn evaluate(&self, grid: &Grid1d) -> Result<Vec<f64>> {
        let v = match self {
            InitialCondition::Constant(c) => vec![*c; grid.n_nodes()],
            InitialCondition::Profile(p) => {
                if p.len() != grid.n_nodes() {
                    return Err(Error::InvalidInput(format!(
                        "initial profile has {} values for a {}-node grid",
                        p.len(),
                        grid.n_nodes()
                    )));
                }
                p.clone()
            }
            InitialCondition::Function(f) => grid.node_positions().iter().map(|&x| f(x)).collect(),
        };
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { context: "initial condition" });
        }
        Ok(v)
    }
}

/// Ensemble trajectory data, shape (N_s, N_t, N_x).
#[derive(Debug, Clone)]
pub struct EnsembleField {
    pub data: Array3<f64>,
    pub grid: Grid1d,
    pub time: TimeSpec,
    pub seed: u64,
}

impl EnsembleField {
    pub fn n_ensembles(&self) -> usize {
        self.data.shape()[0]
    }

    /// View of one ensemble trajectory, shape (N_t, N_x).
    pub fn ensemble(&self, s: usize) -> ArrayView2<'_, f64> {
        self.data.index_axis(Axis(0), s)
    }
}

/// Simulate `n_ensembles` independent trajectories from a shared initial
/// condition. Ensemble `s` uses the noise stream derived from (seed, s), so
/// the result is identical regardless of thread count.
pub fn simulate_ensemble(
    model: &SpdeModel,
    grid: &Grid1d,
    time: &TimeSpec,
    n_ensembles: usize,
    initial_condition: &InitialCondition,
    seed: u64,
) -> Result<EnsembleField> {
    simulate_ensemble_bounded(
        model,
        grid,
        time,
        n_ensembles,
        initial_condition,
        seed,
        DEFAULT_BLOWUP_BOUND,
    )
}

pub fn simulate_ensemble_bounded(
    model: &SpdeModel,
    grid: &Grid1d,
    time: &TimeSpec,
    n_ensembles: usize,
    initial_condition: &InitialCondition,
    seed: u64,
    blow_up_bound: f64,
) -> Result<EnsembleField> {
    if n_ensembles == 0 {
        return Err(Error::InvalidInput("need at least one ensemble".into()));
    }
    let nx = grid.n_nodes();
    let nt = time.n_steps();
    let u0 = initial_condition.evaluate(grid)?;
    let solver = ImplicitSolver::new(grid, model.diffusivity(), time.step())?;
    let mut data = Array3::zeros((n_ensembles, nt, nx));
    data.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .try_for_each(|(s, block)| {
            simulate_one(model, grid, time, &u0, &solver, seed, s, blow_up_bound, block)
        })?;
    Ok(EnsembleField {
        data,
        grid: grid.clone(),
        time: *time,
        seed,
    })
}

/// Streaming variant: trajectories are handed to `sink` in ensemble order as
/// (index, view of shape (N_t, N_x)); nothing is retained. Batches of
/// ensembles run in parallel, delivery stays ordered.
#[allow(clippy::too_many_arguments)]
pub fn simulate_streaming<F>(
    model: &SpdeModel,
    grid: &Grid1d,
    time: &TimeSpec,
    n_ensembles: usize,
    initial_condition: &InitialCondition,
    seed: u64,
    blow_up_bound: f64,
    mut sink: F,
) -> Result<()>
where
    F: FnMut(usize, ArrayView2<'_, f64>) -> Result<()>,
{
    if n_ensembles == 0 {
        return Err(Error::InvalidInput("need at least one ensemble".into()));
    }
    let nx = grid.n_nodes();
    let nt = time.n_steps();
    let u0 = initial_condition.evaluate(grid)?;
    let solver = ImplicitSolver::new(grid, model.diffusivity(), time.step())?;
    let mut start = 0;
    while start < n_ensembles {
        let batch = SIM_BATCH.min(n_ensembles - start);
        let mut block = Array2::zeros((batch * nt, nx));
        block
            .axis_chunks_iter_mut(Axis(0), nt)
            .into_par_iter()
            .enumerate()
            .try_for_each(|(i, traj)| {
                simulate_one(
                    model,
                    grid,
                    time,
                    &u0,
                    &solver,
                    seed,
                    start + i,
                    blow_up_bound,
                    traj,
                )
            })?;
        for i in 0..batch {
            let traj = block.slice(ndarray::s![i * nt..(i + 1) * nt, ..]);
            sink(start + i, traj)?;
        }
        start += batch;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn simulate_one(
    model: &SpdeModel,
    grid: &Grid1d,
    time: &TimeSpec,
    u0: &[f64],
    solver: &ImplicitSolver,
    seed: u64,
    index: usize,
    bound: f64,
    mut out: ArrayViewMut2<'_, f64>,
) -> Result<()> {
    let nx = grid.n_nodes();
    let dt = time.step();
    let sigma = noise_scale(model, grid);
    let sd = dt.sqrt();
    let mut rng = ensemble_rng(seed, index as u64);
    let mut state = u0.to_vec();
    let mut dw = vec![0.0; nx];
    let mut next = vec![0.0; nx];
    out.row_mut(0)
        .as_slice_mut()
        .expect("row-major data")
        .copy_from_slice(&state);
    for n in 1..time.n_steps() {
        for v in dw.iter_mut() {
            let g: f64 = StandardNormal.sample(&mut rng);
            *v = sd * g;
        }
        advance(&state, &mut next, model, solver, dt, sigma, &dw);
        for &v in &next {
            if !v.is_finite() || v.abs() > bound {
                return Err(Error::BlowUp {
                    ensemble: index,
                    step: n,
                    magnitude: v.abs(),
                    bound,
                });
            }
        }
        std::mem::swap(&mut state, &mut next);
        out.row_mut(n)
            .as_slice_mut()
            .expect("row-major data")
            .copy_from_slice(&state);
    }
    Ok(())
}
