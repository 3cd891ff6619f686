//! Numerical toolkit for the thermal massive Sine-Gordon model in 1+1
//! dimensions: free and Dirichlet covariances, Coulomb-gas estimators, the
//! massless/massive comparison constant, and the spatial cluster expansion.

pub mod cli;
pub mod cluster;
pub mod config;
pub mod covariance;
pub mod dirichlet;
pub mod error;
pub mod gas;
pub mod kernel;
pub mod mc;
pub mod params;
pub mod quad;
pub mod record;
pub mod special;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
pub use params::{EuclideanPoint, RunConfig, ThermalParams};
