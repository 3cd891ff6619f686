use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical parameters: inverse temperature, mass, vertex charge `a`, loop
/// constant `ħ` and the length scale `μ` of the massless Hadamard function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalParams {
    pub beta: f64,
    pub mass: f64,
    pub coupling_a: f64,
    pub hbar: f64,
    pub mu_scale: f64,
}

impl Default for ThermalParams {
    fn default() -> Self {
        Self { beta: 1.0, mass: 2.0, coupling_a: 1.0, hbar: 1.0, mu_scale: 1.0 }
    }
}

impl ThermalParams {
    pub fn new(beta: f64, mass: f64) -> Self {
        Self { beta, mass, ..Self::default() }
    }

    /// `α = a²ħ/4π`.
    pub fn alpha(&self) -> f64 {
        self.coupling_a * self.coupling_a * self.hbar / (4.0 * PI)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        pos(self.beta, "beta")?;
        pos(self.mass, "mass")?;
        pos(self.coupling_a, "coupling_a")?;
        pos(self.hbar, "hbar")?;
        pos(self.mu_scale, "mu_scale")?;
        if self.alpha() >= 1.0 {
            return Err(Error::Config(format!(
                "a²ħ/4π = {} must be below 1",
                self.alpha()
            )));
        }
        Ok(())
    }

    pub fn with_mass(mut self, m: f64) -> Self {
        self.mass = m;
        self
    }
}

/// A point `(u, x)` of the Euclidean cylinder, `u` imaginary time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EuclideanPoint {
    pub u: f64,
    pub x: f64,
}

impl EuclideanPoint {
    pub fn new(u: f64, x: f64) -> Self {
        Self { u, x }
    }
}

/// Sampling and truncation settings shared by the Monte-Carlo estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub samples: usize,
    pub tolerance: f64,
    pub n_max: usize,
    /// Gauss–Legendre points per unit length for source quadratures.
    pub quad_points: usize,
    pub n_images: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { seed: 20240917, samples: 20_000, tolerance: 1e-10, n_max: 2, quad_points: 12, n_images: 12 }
    }
}

impl RunConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn with_samples(&self, samples: usize) -> Self {
        Self { samples, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Config("samples must be at least 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if self.quad_points < 2 {
            return Err(Error::Config("quad_points must be at least 2".into()));
        }
        Ok(())
    }
}
