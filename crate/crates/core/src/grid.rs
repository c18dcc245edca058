//! Spatial grid and time discretization.

use crate::error::{Error, Result};

/// Boundary condition of the 1-D domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// u(t, L) = u(t, 0); nodes at x_j = j*dx, j = 0..N_x-1.
    Periodic,
    /// u = 0 at both ends; the grid holds the interior nodes x_j = (j+1)*dx.
    DirichletZero,
}

impl Boundary {
    pub fn as_str(&self) -> &'static str {
        match self {
            Boundary::Periodic => "periodic",
            Boundary::DirichletZero => "dirichlet-zero",
        }
    }
}

impl std::str::FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "periodic" => Ok(Boundary::Periodic),
            "dirichlet-zero" => Ok(Boundary::DirichletZero),
            other => Err(Error::InvalidInput(format!("unknown boundary '{other}'"))),
        }
    }
}

/// Uniform 1-D spatial grid over a domain of the given length.
///
/// The node spacing depends on the boundary condition: periodic grids place
/// `n_nodes` nodes over the full circle (dx * N_x = L), Dirichlet grids hold
/// the interior nodes only (dx * (N_x + 1) = L).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1d {
    length: f64,
    n_nodes: usize,
    spacing: f64,
    boundary: Boundary,
}

impl Grid1d {
    pub fn new(length: f64, n_nodes: usize, boundary: Boundary) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidInput(format!(
                "grid length must be positive and finite, got {length}"
            )));
        }
        if n_nodes < 3 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 3 nodes, got {n_nodes}"
            )));
        }
        let spacing = match boundary {
            Boundary::Periodic => length / n_nodes as f64,
            Boundary::DirichletZero => length / (n_nodes + 1) as f64,
        };
        Ok(Grid1d {
            length,
            n_nodes,
            spacing,
            boundary,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Physical coordinates of the grid nodes.
    pub fn node_positions(&self) -> Vec<f64> {
        let offset = match self.boundary {
            Boundary::Periodic => 0.0,
            Boundary::DirichletZero => self.spacing,
        };
        (0..self.n_nodes)
            .map(|j| offset + j as f64 * self.spacing)
            .collect()
    }
}

/// Time horizon and step of the stored trajectories.
///
/// `n_steps` counts the stored snapshots (initial condition included), so a
/// horizon of T with step dt holds round(T/dt) + 1 states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSpec {
    horizon: f64,
    step: f64,
    n_steps: usize,
}

impl TimeSpec {
    pub fn new(horizon: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::InvalidInput(format!(
                "time step must be positive and finite, got {step}"
            )));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidInput(format!(
                "time horizon must be positive and finite, got {horizon}"
            )));
        }
        let n_steps = (horizon / step).round() as usize + 1;
        if n_steps < 2 {
            return Err(Error::InvalidInput(format!(
                "time discretization needs at least 2 snapshots, got {n_steps}"
            )));
        }
        Ok(TimeSpec {
            horizon,
            step,
            n_steps,
        })
    }

    /// Reconstruct from a stored snapshot count, as read back from a field file.
    pub fn from_counts(step: f64, n_steps: usize) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::InvalidInput(format!(
                "time step must be positive and finite, got {step}"
            )));
        }
        if n_steps < 2 {
            return Err(Error::InvalidInput(format!(
                "time discretization needs at least 2 snapshots, got {n_steps}"
            )));
        }
        Ok(TimeSpec {
            horizon: step * (n_steps - 1) as f64,
            step,
            n_steps,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Number of stored snapshots N_t.
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of increments N_t - 1.
    pub fn n_increments(&self) -> usize {
        self.n_steps - 1
    }
}
