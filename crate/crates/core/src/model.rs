//! Symbolic description of a ground-truth SPDE.

use crate::error::{Error, Result};

/// An SPDE of the form du = (eps * u_xx + F(u)) dt + sigma dW with a
/// polynomial source term F(u) = sum c_p * u^p.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdeModel {
    name: String,
    diffusivity: f64,
    noise_amplitude: f64,
    drift_poly: Vec<(u32, f64)>,
    scale_noise_by_sqrt_dx: bool,
}

/// Largest polynomial power accepted in a drift source term.
pub const MAX_DRIFT_POWER: u32 = 6;

impl SpdeModel {
    pub fn new(
        name: impl Into<String>,
        diffusivity: f64,
        noise_amplitude: f64,
        drift_poly: Vec<(u32, f64)>,
    ) -> Result<Self> {
        if !(diffusivity >= 0.0) || !diffusivity.is_finite() {
            return Err(Error::InvalidInput(format!(
                "diffusivity must be finite and >= 0, got {diffusivity}"
            )));
        }
        if !(noise_amplitude >= 0.0) || !noise_amplitude.is_finite() {
            return Err(Error::InvalidInput(format!(
                "noise amplitude must be finite and >= 0, got {noise_amplitude}"
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for &(p, c) in &drift_poly {
            if p > MAX_DRIFT_POWER {
                return Err(Error::InvalidInput(format!(
                    "drift power {p} exceeds the supported maximum {MAX_DRIFT_POWER}"
                )));
            }
            if !c.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "drift coefficient for u^{p} is not finite"
                )));
            }
            if !seen.insert(p) {
                return Err(Error::InvalidInput(format!(
                    "duplicate drift power {p}"
                )));
            }
        }
        Ok(SpdeModel {
            name: name.into(),
            diffusivity,
            noise_amplitude,
            drift_poly,
            scale_noise_by_sqrt_dx: false,
        })
    }

    /// Switch the noise discretization to the space-time-white-noise
    /// convention (per-node variance dt/dx instead of dt). Off by default.
    pub fn with_noise_scaled_by_sqrt_dx(mut self, on: bool) -> Self {
        self.scale_noise_by_sqrt_dx = on;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn diffusivity(&self) -> f64 {
        self.diffusivity
    }

    pub fn noise_amplitude(&self) -> f64 {
        self.noise_amplitude
    }

    pub fn drift_poly(&self) -> &[(u32, f64)] {
        &self.drift_poly
    }

    pub fn noise_scaled_by_sqrt_dx(&self) -> bool {
        self.scale_noise_by_sqrt_dx
    }

    /// Evaluate the polynomial source term F(u) at a single state value.
    pub fn source(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for &(p, c) in &self.drift_poly {
            acc += c * u.powi(p as i32);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn nagumo_source_expansion() {
        // u(1-u)(u-alpha) with alpha = -1/2 expands to 0.5u + 0.5u^2 - u^3
        let m = SpdeModel::new("nagumo", 1.0, 1.0, vec![(1, 0.5), (2, 0.5), (3, -1.0)]).unwrap();
        let alpha = -0.5;
        for &u in &[-1.5, -0.3, 0.0, 0.4, 1.2] {
            assert_relative_eq!(m.source(u), u * (1.0 - u) * (u - alpha), epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_duplicate_powers_and_negative_params() {
        assert!(SpdeModel::new("m", 1.0, 1.0, vec![(1, 0.5), (1, 0.2)]).is_err());
        assert!(SpdeModel::new("m", -1.0, 1.0, vec![]).is_err());
        assert!(SpdeModel::new("m", 1.0, -0.5, vec![]).is_err());
        assert!(SpdeModel::new("m", 1.0, 1.0, vec![(7, 1.0)]).is_err());
    }
}
